use thiserror::Error;

/// Errors raised by the MW-operator toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid index shape: r={r}, s={s} (both must be at least 1)")]
    InvalidShape { r: usize, s: usize },

    #[error("shape mismatch: expected (r={expected_r}, s={expected_s}), got (r={got_r}, s={got_s})")]
    ShapeMismatch {
        expected_r: usize,
        expected_s: usize,
        got_r: usize,
        got_s: usize,
    },

    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value {value} at position {position}")]
    NonFinite { position: usize, value: f64 },

    #[error("{what} index {index} out of range (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("points coincide in some group, so ||x - y||^N = 0")]
    DegeneratePair,

    #[error("budget exceeded: {what} needs {required}, budget is {budget}")]
    BudgetExceeded {
        what: &'static str,
        required: u128,
        budget: u128,
    },

    #[error("black-box differentiation of {order} nested groups is not supported (limit 3); supply an exact partial")]
    DifferentiationUnsupported { order: usize },

    #[error("tile has zero measure")]
    ZeroMeasure,

    #[error("tensor-grid quadrature needs a box tile")]
    NonBoxTile,

    #[error("points are not ordered: {0}")]
    NotOrdered(String),

    #[error("point lies outside the tile: {0}")]
    OutsideTile(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
