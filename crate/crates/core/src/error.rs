use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mode {mode} for a tensor of order {order} (modes are 1-based)")]
    InvalidMode { mode: usize, order: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("batch normalization needs at least 2 samples in training mode, got {0}")]
    DegenerateBatch(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("space savings are undefined against a baseline with zero parameters")]
    UndefinedBaseline,

    #[error("format error: {0}")]
    Format(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// Errors caused by bad user input (configs, files, arguments) rather than
    /// by a failure while computing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidMode { .. }
                | Error::Label { .. }
                | Error::Config(_)
                | Error::InvalidPermutation(_)
                | Error::Format(_)
                | Error::Consistency(_)
        )
    }
}
