use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by model construction, solvers and estimators.
///
/// Failing a consistency or pre-copula condition is reported as a verdict,
/// not as an error; errors are reserved for invalid inputs and for
/// operations whose preconditions do not hold.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("negative off-diagonal entry at ({row}, {col}): {value}")]
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },

    #[error("row {row} sums to {residual} instead of 0")]
    RowSumNonzero { row: usize, residual: f64 },

    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFiniteEntries { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index {index:?} out of range for component sizes {sizes:?}")]
    OutOfRange { index: Vec<usize>, sizes: Vec<usize> },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid probability law: {0}")]
    InvalidLaw(String),

    #[error("time {time} outside [{start}, {end}]")]
    TimeOutOfRange { time: f64, start: f64, end: f64 },

    #[error("negative rate {value} in cell {cell}")]
    NegativeRate { cell: usize, value: f64 },

    #[error("non-positive rate {value} in cell {cell}")]
    NonPositiveRate { cell: usize, value: f64 },

    #[error("common-jump constraint 0 <= c <= min(a, b) violated in cell {cell}: a={a}, b={b}, c={c}")]
    ConstraintViolated { cell: usize, a: f64, b: f64, c: f64 },

    #[error("condition ASM-{component} does not hold")]
    AsmViolated { component: usize },

    #[error("component {component} state {state} has probability {prob} at t={time} (off support)")]
    SupportViolation { time: f64, component: usize, state: usize, prob: f64 },

    #[error("perfect dependence requires identical marginals; component {component} differs")]
    HeterogeneousMarginals { component: usize },

    #[error("operation requires a {expected} candidate")]
    WrongKind { expected: &'static str },

    #[error("unsupported candidate kind for closed-form pricing: {0}")]
    UnsupportedKind(&'static str),

    #[error("initial-law margin {component} does not match target (deviation {deviation})")]
    MarginMismatch { component: usize, deviation: f64 },

    #[error("path index {0} cannot be mapped to an RNG stream")]
    InvalidSeedStream(usize),

    #[error("at least one sample path is required")]
    NoPaths,

    #[error("insufficient samples in {0}")]
    InsufficientSamples(String),

    #[error("row {row} of a transition matrix sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },

    #[error("singular matrix")]
    Singular,
}

pub type Result<T> = core::result::Result<T, Error>;
