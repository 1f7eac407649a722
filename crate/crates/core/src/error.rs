use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("intermediate entry of {bits} bits exceeds the {budget}-bit budget")]
    BitBudgetExceeded { bits: u64, budget: u64 },

    #[error(
        "retries exhausted after {attempts} attempts: member {member} reached rank {achieved}, required {required}"
    )]
    RetriesExhausted {
        attempts: usize,
        member: String,
        achieved: usize,
        required: usize,
    },

    #[error("missing feature `{0}`")]
    MissingFeature(String),

    #[error("identity pattern violated at row {row}, column {col}")]
    PatternViolation { row: usize, col: usize },

    #[error("structured value is zero at ({x}, {y})")]
    ZeroValue { x: usize, y: usize },

    #[error("dimension {dim} exceeds budget {budget}")]
    BudgetExceeded { dim: usize, budget: usize },

    #[error("capped sums are inconsistent with any multiset: {0}")]
    Inconsistent(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("json: {0}")]
    Json(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
