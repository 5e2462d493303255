use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid rotation: quaternion has zero norm")]
    InvalidRotation,

    #[error("empty scene: at least one point is required")]
    EmptyScene,

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("config error: {0}")]
    Config(String),

    #[error("config conflict: {0}")]
    ConfigConflict(String),

    #[error("invalid scene spec: {0}")]
    Spec(String),

    #[error("training diverged at step {step}: loss term `{term}` is not finite")]
    Diverged { step: u64, term: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("edit error: {0}")]
    Edit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format { offset, message: message.into() }
    }
}
