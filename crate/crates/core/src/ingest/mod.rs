//! Loaders for the on-disk archive inputs and the seeded stand-in encoder.
//!
//! Every text format is UTF-8, one tab-separated record per line. Blank lines
//! and lines starting with `#` are ignored.

mod annotations;
mod codes;
mod encoder;
mod manifest;
mod text;
mod vectors;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{CodeSpace, ShotId, ValidationReport};

pub use annotations::{load_annotations, parse_annotations, write_annotations};
pub use codes::{load_codes, parse_codes, write_codes, CODE_FILE_MAGIC, CODE_FILE_VERSION, CODE_RECORD_LEN};
pub use encoder::{FeatureVector, HyperplaneEncoder, DEFAULT_DIMENSION};
pub use manifest::{load_manifest, parse_manifest, write_manifest};
pub use text::{load_text, normalize_word, parse_text, tokenize, write_text};
pub use vectors::{encode_vectors, load_vectors, parse_vectors, VectorRecord};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("shot table is inconsistent: {0}")]
    Validation(ValidationReport),
    #[error("code file format error: {0}")]
    Format(String),
    #[error("code file truncated: need {needed} bytes, have {available}")]
    Truncated { needed: u64, available: u64 },
    #[error("code file holds {found} codes, expected {expected}")]
    SpaceMismatch { expected: CodeSpace, found: CodeSpace },
    #[error("code record {record} references unknown keyframe {shot} position {position}")]
    UnknownKeyframe { record: u64, shot: ShotId, position: u8 },
    #[error("line {line}: unknown shot {shot}")]
    UnknownShot { line: usize, shot: ShotId },
    #[error("line {line}: probability {value} outside [0, 1]")]
    ProbabilityOutOfRange { line: usize, value: f64 },
    #[error("lines {first_line} and {second_line}: duplicate annotation for shot {shot} label {label:?}")]
    DuplicateAnnotation {
        shot: ShotId,
        label: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("line {line}: no words after trimming")]
    EmptyText { line: usize },
    #[error("feature vector has dimension {found}, encoder expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("feature vector component {index} is not finite")]
    NonFinite { index: usize },
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })
}

pub(crate) fn read_utf8(path: &Path) -> Result<String> {
    let bytes = read_bytes(path)?;
    utf8(bytes)
}

pub(crate) fn utf8(bytes: Vec<u8>) -> Result<String> {
    String::from_utf8(bytes).map_err(|e| {
        let valid = &e.as_bytes()[..e.utf8_error().valid_up_to()];
        IngestError::Parse {
            line: valid.iter().filter(|&&b| b == b'\n').count() + 1,
            message: "invalid UTF-8".into(),
        }
    })
}

/// Yields `(1-based line number, fields)` for every record line.
pub(crate) fn records(input: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    input.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split('\t').collect()))
        }
    })
}

pub(crate) fn parse_field<T: std::str::FromStr>(line: usize, name: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| IngestError::Parse {
        line,
        message: format!("invalid {name} {value:?}"),
    })
}

pub(crate) fn video_field(line: usize, value: &str) -> Result<&str> {
    if value.is_empty() {
        return Err(IngestError::Parse {
            line,
            message: "empty video id".into(),
        });
    }
    Ok(value)
}

pub(crate) fn expect_fields(line: usize, fields: &[&str], expected: usize, what: &str) -> Result<()> {
    if fields.len() != expected {
        return Err(IngestError::Parse {
            line,
            message: format!(
                "{what} record needs {expected} tab-separated fields, found {}",
                fields.len()
            ),
        });
    }
    Ok(())
}
