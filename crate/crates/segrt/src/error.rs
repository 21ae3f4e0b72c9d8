//! Crate-wide error type.
//!
//! Recoverable failures (shape mismatches, bad configs, malformed files) are
//! reported through [`Error`]; invariant violations inside hot numeric kernels
//! (indexing out of range, zero-sized shapes) panic instead, as they indicate
//! programmer error rather than bad input.

use std::path::PathBuf;

use crate::tensor::Shape;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A tensor did not have the shape an operation required.
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: Shape, actual: Shape },

    /// An operation's input violated a documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A configuration value was out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A JSON document failed to parse or used unknown/ill-typed keys.
    #[error("failed to parse {path}: {source}")]
    ConfigParse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    /// Filesystem-level failure, tagged with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// PNG (or other image) encode/decode failure.
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    /// A mask PNG contained a pixel that is not an exact palette color.
    #[error("mask {path} has non-palette color {rgb:?} at ({x}, {y})")]
    MaskColor {
        path: PathBuf,
        x: u32,
        y: u32,
        rgb: [u8; 3],
    },

    /// Weight file did not start with the expected magic bytes.
    #[error("corrupt weight file header: bad magic {found:?}")]
    WeightMagic { found: [u8; 4] },

    /// Weight file was written by an unsupported format version.
    #[error("unsupported weight file version {found} (supported: {supported})")]
    WeightVersion { found: u32, supported: u32 },

    /// Weight file ended before its declared contents.
    #[error("truncated weight file: needed {needed} more byte(s) at offset {offset}")]
    WeightTruncated { offset: usize, needed: usize },

    /// Weight file payload does not match its checksum.
    #[error("weight file checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    WeightChecksum { stored: u32, computed: u32 },

    /// Weight file describes a layer stack we cannot execute.
    #[error("weight file structure invalid: {0}")]
    WeightStructure(String),

    /// A dataset manifest failed validation.
    #[error("invalid manifest: {0}")]
    Manifest(String),

    /// Evaluation was asked about a class with no positive pixels.
    #[error("class {label:?} has no positive pixels; its PR curve is undefined")]
    DegenerateClass { label: String },
}

impl Error {
    /// Helper for IO errors carrying the offending path.
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Helper for image errors carrying the offending path.
    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }
}
