use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid link parameters: {0}")]
    InvalidParameters(String),

    #[error("inertia matrix not positive definite (invalid parameter set)")]
    NotPositiveDefinite,

    #[error("model file error: {0}")]
    ModelFile(String),

    #[error("state dimension {got} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("vector fields belong to different field sets")]
    FieldSetMismatch,

    #[error("bracket depth {depth} exceeds the evaluation limit {limit}")]
    DepthExceeded { depth: usize, limit: usize },

    #[error("distribution has no generators")]
    EmptyDistribution,

    #[error("operation requires a pendubot-type model (first physical joint actuated); joint 1 is unactuated")]
    BaseUnactuated,

    #[error("no certificate can exist: P_ab vanishes identically when the base joint is unactuated")]
    PAbIdenticallyZero,

    #[error("operation requires the base joint to be unactuated; joint {0} is the passive one")]
    NotBaseUnactuated(usize),

    #[error("specialized closed forms exist only for N = 2, 3 (model has N = {0}); use the general path")]
    UnsupportedLinkCount(usize),

    #[error("certificate search requires a zero-velocity state (max |qdot| = {0:.3e})")]
    NonzeroVelocity(f64),

    #[error("integrator step size underflow at t = {t:.6e} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("integrator exceeded {0} steps before reaching the end time")]
    StepBudgetExhausted(usize),

    #[error("bracket expression parse error: {0}")]
    Parse(String),

    #[error("invalid theta assignment: {0}")]
    InvalidTheta(String),
}

pub type Result<T> = std::result::Result<T, Error>;
