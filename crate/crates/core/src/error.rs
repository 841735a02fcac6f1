use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("arity mismatch: map has {got} coordinate expressions, dimension is {expected}")]
    Arity { expected: usize, got: usize },

    #[error("eps not in P(X): {0}")]
    EpsNotPositive(String),

    #[error("modulus certification failed: {0}")]
    Certification(String),

    #[error("invalid eta construction: {0}")]
    InvalidEta(String),

    #[error("orbit escaped to non-finite value")]
    NonFinite,

    #[error("invalid word: {0}")]
    InvalidWord(String),

    #[error("no Lipschitz constant available for generator `{0}`")]
    MissingLipschitz(String),

    #[error("budget exceeded: {what} needs {needed}, cap is {cap}")]
    Budget { what: &'static str, needed: u64, cap: u64 },

    #[error("abelian flag refused: {0}")]
    NotAbelian(String),

    #[error("hypothesis not met: {0}")]
    Hypothesis(String),

    #[error("trapping region not verified: {0}")]
    NotVerified(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }
}
