//! Detection, source attribution and prompt analysis for images produced by
//! text-to-image generators.
//!
//! Encoders sit behind [`encoders::EncoderBackend`]; the bundled
//! [`encoders::ToyBackend`] makes every pipeline deterministic without
//! pretrained weights.

pub mod attribution;
pub mod dataset;
pub mod detection;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod fingerprint;
pub mod nn;
pub mod pipeline;
pub mod plot;
pub mod prompt_analysis;
pub mod raster;
pub mod synthetic;
pub mod table;

pub use error::{Error, ErrorClass, Result};
