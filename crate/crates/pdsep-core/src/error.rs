use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("backward on an untaped tensor (no graph reaches it)")]
    UntapedBackward,

    #[error("parameter has no gradient; run backward first")]
    MissingGrad,

    #[error("non-finite loss ({loss}) in sub-model {submodel} at step {step}")]
    NanLoss {
        submodel: usize,
        step: u64,
        loss: &'static str,
    },

    #[error("undefined correlation: input is constant")]
    UndefinedCorrelation,

    #[error("unknown strategy '{name}' for {family} (known: {known})")]
    UnknownStrategy {
        family: &'static str,
        name: String,
        known: String,
    },

    #[error("bad magic bytes in {path}: expected {expected}")]
    BadMagic { path: PathBuf, expected: &'static str },

    #[error("unsupported format version {found} in {path} (supported: {supported})")]
    UnsupportedVersion {
        path: PathBuf,
        found: u16,
        supported: u16,
    },

    #[error("truncated or corrupt file {path}: {detail}")]
    Truncated { path: PathBuf, detail: String },

    #[error("checksum mismatch in {path}")]
    ChecksumMismatch { path: PathBuf },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the CLI maps this error to.
    /// 1 usage, 2 data/format, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NanLoss { .. } | Error::UndefinedCorrelation => 3,
            Error::InvalidArgument(_) | Error::Config(_) | Error::UnknownStrategy { .. } => 1,
            _ => 2,
        }
    }
}
