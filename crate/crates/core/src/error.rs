use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Malformed spec string; `position` is a byte offset into the input.
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },

    /// The text parsed but the object it describes violates a standing assumption.
    #[error("semantic error: {0}")]
    Semantic(String),

    /// A function was evaluated where it is zero, negative or non-finite.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested scheme cannot produce the requested quantity.
    #[error("scheme refused: {0}")]
    SchemeRefused(String),

    #[error("simulation aborted: {0}")]
    Simulation(String),

    #[error("solver failure at time step {step}: {message}")]
    Solver { step: usize, message: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

impl Error {
    pub(crate) fn syntax(position: usize, message: impl Into<String>) -> Self {
        Error::Syntax {
            position,
            message: message.into(),
        }
    }
}
