use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the descriptor, kernel, training and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NonSymmetric { asymmetry: f64 },
    #[error("matrix contains NaN or infinite entries")]
    NonFinite,
    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("set `{set_id}` has {samples} samples, at least 2 are required")]
    TooFewSamples { set_id: String, samples: usize },
    #[error("subspace of dimension {q} is ill-defined: eigenvalue {eigenvalue:e} vs largest {largest:e}")]
    RankDeficient { q: usize, eigenvalue: f64, largest: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cannot trace-normalize kernel {kernel}: trace {trace:e}")]
    NormalizationDegenerate { kernel: &'static str, trace: f64 },
    #[error("kernel evaluation failed for pair ({i}, {j}): {source}")]
    KernelPair {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("gradient contains NaN or infinite entries")]
    NonFiniteGradient,
    #[error("gallery has a single class, between-class scatter is empty")]
    SingleClassGallery,
    #[error("objective denominator tr(E^T St E) = {0:e} is degenerate")]
    DegenerateDenominator(f64),
    #[error("total scatter is zero (largest eigenvalue {0:e})")]
    ZeroTotalScatter(f64),
    #[error("bad dimension: {0}")]
    BadDimension(String),
    #[error("gallery index {index} out of range for {len} sets")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("model format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { found: String, expected: u32 },
    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(String),
    #[error("invalid model file: {0}")]
    InvalidModel(String),
    #[error("invalid synthetic spec: {0}")]
    BadSpec(String),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("class `{label}` has {available} sets, {required} needed for the split")]
    InsufficientSetsPerClass {
        label: String,
        available: usize,
        required: usize,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the input data rather than the numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::TooFewSamples { .. }
                | Error::DimensionMismatch(_)
                | Error::Parse { .. }
                | Error::Io { .. }
                | Error::FormatVersionMismatch { .. }
                | Error::ChecksumMismatch(_)
                | Error::InvalidModel(_)
                | Error::BadSpec(_)
                | Error::BadConfig(_)
                | Error::InsufficientSetsPerClass { .. }
                | Error::SingleClassGallery
                | Error::IndexOutOfRange { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
