use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("rotation number is rational ({p}/{q})")]
    RationalInput { p: u128, q: u128 },
    #[error("precision exhausted after {depth} partial quotients")]
    PrecisionExhausted { depth: usize },
    #[error("value {value} out of range: {what}")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("requested depth {requested} exceeds certified depth {available}")]
    DepthExceeded { requested: usize, available: usize },
    #[error("roof exponent eta = {0} must lie in (0, 1)")]
    BadExponent(f64),
    #[error("orbit hits the singularity at index {index}")]
    SingularityHit { index: i64 },
    #[error("interval is degenerate: {0}")]
    DegenerateInterval(String),
    #[error("function support violates margin: {0}")]
    SupportViolation(String),
    #[error("profile support leaves the safe time set: {0}")]
    ProfileSupportViolation(String),
    #[error("quadrature budget exceeded: {0}")]
    QuadratureBudgetExceeded(String),
    #[error("insufficient coverage: {0}")]
    InsufficientCoverage(String),
    #[error("hitting count is not constant on the interval at t = {t}")]
    HittingCountNotConstant { t: f64 },
    #[error("singular orbit: {0}")]
    SingularOrbit(String),
    #[error("empty denominator bracket for window {l}")]
    EmptyDenominatorBracket { l: u64 },
    #[error("point lies in more than one tower level: {0}")]
    MultipleLevelHit(String),
    #[error("time grid is not symmetric: {0}")]
    AsymmetricGrid(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
