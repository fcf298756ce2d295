use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum PharaError {
    #[error("volatility matrix is singular: smallest eigenvalue of sigma sigma^T is {min_eig:e} (largest {max_eig:e})")]
    SingularVolatility { min_eig: f64, max_eig: f64 },

    #[error("drift of asset {index} ({mu}) does not exceed the riskless rate {r}")]
    DriftBelowRate { index: usize, mu: f64, r: f64 },

    #[error("dimension mismatch: {0}")]
    BadDimension(String),

    #[error("time {t} outside the admissible range for horizon {horizon}")]
    BadTime { t: f64, horizon: f64 },

    #[error("illegal HARA parameter combination: {0}")]
    IllegalCase(String),

    #[error("wealth {x} lies outside the utility domain starting at {a0}")]
    OutOfDomain { x: f64, a0: f64 },

    #[error("absolute risk aversion is undefined at partition point {0}")]
    AtKink(f64),

    #[error("composition is not piecewise HARA: {0}")]
    NotPhara(String),

    #[error("invalid utility: {0}")]
    InvalidUtility(String),

    #[error("concave envelope is unbounded: {0}")]
    UnboundedEnvelope(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("initial wealth {x0} is not above the discounted domain floor {floor}")]
    InfeasibleBudget { x0: f64, floor: f64 },

    #[error("budget equation has no solution: {0}")]
    UnboundedDemand(String),

    #[error("unified formula needs a single common nonzero R and no CARA pieces: {0}")]
    HeterogeneousRisk(String),

    #[error("simulation needs at least 10 time steps, got {0}")]
    StepTooCoarse(usize),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PharaError>;
