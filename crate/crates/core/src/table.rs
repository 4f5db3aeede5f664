//! Tab-separated report tables with a header row.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

fn unwritable(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::UnwritablePath {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Serializes flat rows to TSV text.
pub fn to_tsv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_tsv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let text = to_tsv(rows)?;
    std::fs::write(path, text).map_err(|e| unwritable(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        name: &'static str,
        value: f64,
        note: Option<f64>,
    }

    #[test]
    fn header_and_rows() {
        let rows = [
            Row {
                name: "a",
                value: 0.5,
                note: None,
            },
            Row {
                name: "b c",
                value: 1.0,
                note: Some(2.0),
            },
        ];
        assert_eq!(to_tsv(&rows).unwrap(), "name\tvalue\tnote\na\t0.5\t\nb c\t1.0\t2.0\n");
    }
}
