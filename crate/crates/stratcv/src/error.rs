//! Error type shared across the engine.

use thiserror::Error;

/// Errors produced by model construction, simulation, regression and
/// control-variate training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("correlation matrix is not symmetric: max |rho - rho^T| = {max_asymmetry:e}")]
    AsymmetricInput { max_asymmetry: f64 },

    #[error("correlation matrix is not positive semi-definite: pivot {pivot:e} at index {index}")]
    NotPsd { index: usize, pivot: f64 },

    #[error("correlation matrix diagonal entry {index} is {value}, expected exactly 1")]
    NotUnitDiagonal { index: usize, value: f64 },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("unknown payoff `{0}`")]
    UnknownPayoff(String),

    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),

    #[error("model `{0}` does not register coefficient derivatives")]
    DerivativeUnavailable(String),

    #[error("scheme `{scheme}` cannot step model `{model}`: {reason}")]
    SchemeModelMismatch {
        scheme: &'static str,
        model: String,
        reason: String,
    },

    #[error("regression requires at least one sample")]
    EmptySample,

    #[error("regression input contains a non-finite entry")]
    NonFiniteInput,

    #[error("missing scenario {0} in h-value map")]
    MissingScenario(String),

    #[error("innovation coordinate {value} is not admissible")]
    InvalidCoordinate { value: f64 },

    #[error("scenario tree too large: {scenarios} scenarios exceed limit {limit}")]
    TreeTooLarge { scenarios: u128, limit: u128 },

    #[error("control variate order {cv_order} does not match path order {path_order}")]
    OrderMismatch { cv_order: u8, path_order: u8 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate baseline: SMC variance and time must be positive")]
    DegenerateBaseline,

    #[error("kappa must exceed 1, got {0}")]
    KappaOutOfRange(f64),

    #[error("epsilon must lie in (0, 1), got {0}")]
    EpsilonOutOfRange(f64),

    #[error("invalid path dump: {0}")]
    InvalidDump(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
