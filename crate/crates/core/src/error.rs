use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // NIfTI / raw volume decoding
    #[error("bad magic {0:?}: expected \"n+1\" or \"ni1\"")]
    BadMagic([u8; 4]),
    #[error("bad header size {0}: expected 348")]
    BadHeaderSize(i32),
    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("unsupported dimensionality dim[0] = {0}: only 3-D volumes are read")]
    UnsupportedDimensionality(i16),
    #[error("invalid header field {field}: {reason}")]
    InvalidHeader { field: &'static str, reason: String },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("malformed sidecar {path}: {reason}")]
    Sidecar { path: PathBuf, reason: String },

    // Geometry
    #[error("spacing must be strictly positive, got {0:?}")]
    InvalidSpacing([f64; 3]),
    #[error("dimensions must be positive, got {0:?}")]
    InvalidDims([usize; 3]),
    #[error("data length {found} does not match dims (expected {expected})")]
    DataLength { expected: usize, found: usize },
    #[error("grid mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // Domain
    #[error("unknown raw label {0}")]
    UnknownLabel(u8),
    #[error("empty mask: {0}")]
    EmptyMask(&'static str),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("probability vector not normalized: sum {sum} at voxel {voxel}")]
    NotNormalized { voxel: usize, sum: f64 },
    #[error("invalid distance matrix: {0}")]
    InvalidMatrix(String),
    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
