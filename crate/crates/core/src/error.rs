use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::Origin;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
///
/// Variants are grouped by [`ErrorClass`], which the command-line front end
/// maps onto process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    // dataset
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("manifest rejected: {}", format_record_errors(.0))]
    ManifestErrors(Vec<Error>),
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("insufficient records for origin {origin}: available {available}, requested {requested}")]
    InsufficientRecords {
        origin: Origin,
        available: usize,
        requested: usize,
    },
    #[error("unknown record id {0:?}")]
    UnknownRecord(String),

    // encoders
    #[error("image could not be decoded: {0}")]
    UndecodableImage(String),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("backend {0:?} cannot generate captions")]
    CaptionUnsupported(String),
    #[error("backend mismatch: expected {expected:?}, got {actual:?}")]
    BackendMismatch { expected: String, actual: String },
    #[error("embedding kind mismatch: {0}")]
    KindMismatch(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("backend failure: {0}")]
    BackendFailure(String),
    #[error("unknown backend {0:?}")]
    UnknownBackend(String),

    // classifier core
    #[error("bad dimension: {0}")]
    BadDimension(String),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("gradient check failed: max relative error {error:e} exceeds {tolerance:e}")]
    GradientCheckFailed { error: f64, tolerance: f64 },

    // pipelines
    #[error("record {0:?} has no prompt")]
    PromptMissing(String),
    #[error("label scheme mismatch: {0}")]
    SchemeMismatch(String),
    #[error("threshold {0} outside [0, 1]")]
    BadThreshold(f64),
    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    // fingerprint
    #[error("image is empty")]
    EmptyImage,
    #[error("empty image sequence")]
    EmptySequence,
    #[error("mixed resolutions: {first:?} vs {other:?}")]
    MixedResolutions {
        first: (usize, usize),
        other: (usize, usize),
    },
    #[error("resolution mismatch: {left:?} vs {right:?}")]
    ResolutionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("cannot write {}: {reason}", path.display())]
    UnwritablePath { path: PathBuf, reason: String },

    // prompt analysis
    #[error("too few samples: {available} for {bins} bins")]
    TooFewSamples { available: usize, bins: usize },
    #[error("record {0:?} has no topics")]
    NoTopics(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    // model files and caches
    #[error("unsupported format: {0}")]
    Format(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse failure classes used for exit-code mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Backend,
    Internal,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            CaptionUnsupported(_) | BackendMismatch { .. } | BackendFailure(_) | UnknownBackend(_) => {
                ErrorClass::Backend
            }
            BadDimension(_) | BadConfig(_) | BadThreshold(_) | InvalidParameter(_) | ModeMismatch(_) => {
                ErrorClass::Usage
            }
            GradientCheckFailed { .. } | NonFiniteInput => ErrorClass::Internal,
            _ => ErrorClass::Data,
        }
    }

    /// Stable variant name for machine-parseable error lines.
    pub fn kind(&self) -> &'static str {
        use Error::*;
        match self {
            MissingFile(_) => "MissingFile",
            MalformedRecord { .. } => "MalformedRecord",
            ManifestErrors(_) => "ManifestErrors",
            DuplicateId(_) => "DuplicateId",
            InsufficientRecords { .. } => "InsufficientRecords",
            UnknownRecord(_) => "UnknownRecord",
            UndecodableImage(_) => "UndecodableImage",
            EmptyPrompt => "EmptyPrompt",
            CaptionUnsupported(_) => "CaptionUnsupported",
            BackendMismatch { .. } => "BackendMismatch",
            KindMismatch(_) => "KindMismatch",
            DimMismatch { .. } => "DimMismatch",
            ZeroVector => "ZeroVector",
            BackendFailure(_) => "BackendFailure",
            UnknownBackend(_) => "UnknownBackend",
            BadDimension(_) => "BadDimension",
            ShapeMismatch { .. } => "ShapeMismatch",
            NonFiniteInput => "NonFiniteInput",
            EmptyDataset => "EmptyDataset",
            LabelOutOfRange { .. } => "LabelOutOfRange",
            BadConfig(_) => "BadConfig",
            GradientCheckFailed { .. } => "GradientCheckFailed",
            PromptMissing(_) => "PromptMissing",
            SchemeMismatch(_) => "SchemeMismatch",
            BadThreshold(_) => "BadThreshold",
            ModeMismatch(_) => "ModeMismatch",
            EmptyImage => "EmptyImage",
            EmptySequence => "EmptySequence",
            MixedResolutions { .. } => "MixedResolutions",
            ResolutionMismatch { .. } => "ResolutionMismatch",
            UnwritablePath { .. } => "UnwritablePath",
            TooFewSamples { .. } => "TooFewSamples",
            NoTopics(_) => "NoTopics",
            InvalidParameter(_) => "InvalidParameter",
            Format(_) => "Format",
            Io { .. } => "Io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_record_errors(errors: &[Error]) -> String {
    let shown: Vec<String> = errors.iter().take(5).map(|e| e.to_string()).collect();
    if errors.len() > shown.len() {
        format!("{} (+{} more)", shown.join("; "), errors.len() - shown.len())
    } else {
        shown.join("; ")
    }
}
