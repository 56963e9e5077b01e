use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("function `{function}` expects {expected} argument(s), got {got}")]
    Arity { function: String, expected: String, got: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invariant violations: {}", .0.join("; "))]
    InvariantViolation(Vec<String>),
    #[error("missing transition from `{0}` to `{1}`")]
    MissingTransition(String, String),
    #[error("unknown chart `{0}`")]
    UnknownChart(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("unknown weight `{0}`")]
    UnknownWeight(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("geodesic left the chart domain at t = {t_exit}")]
    LeftChartDomain { t_exit: f64 },
    #[error("integrator step size underflow or non-finite state")]
    StepSizeUnderflow,
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("solution lies outside the trust radius {trust_radius}")]
    OutsideInjectivityRadius { trust_radius: f64 },
    #[error("degenerate region: {0}")]
    DegenerateRegion(String),
    #[error("sigma = {0} is outside (0, 1)")]
    SigmaOutOfRange(f64),
    #[error("delta = {delta} is not below the admissible limit {limit}")]
    DeltaTooLarge { delta: f64, limit: f64 },
    #[error("differential is singular or ill-conditioned (condition number {condition:e})")]
    SingularDifferential { condition: f64 },

    #[error("derivative order {requested} unavailable (max {available})")]
    OrderUnavailable { requested: usize, available: usize },
    #[error("atlas is not subordinate: {0}")]
    NotSubordinate(String),
    #[error("atlas intersection is empty")]
    EmptyIntersection,
    #[error("multiplier condition unverified: {0}")]
    MultiplierConditionUnverified(String),

    #[error("inner regions do not cover the manifold: {0}")]
    CoverViolation(String),
    #[error("weight set grew to {count} weights (cap {cap})")]
    ExplosionGuard { count: usize, cap: usize },
    #[error("constants incompatible: {0}")]
    ConstantsIncompatible(String),
    #[error("constants missing for chart `{0}`")]
    ConstantsMissing(String),

    #[error("no chart contains the point")]
    NoContainingChart,
    #[error("gauge violation: {0}")]
    GaugeViolation(String),
    #[error("logarithm domain exceeded: {0}")]
    LogDomainExceeded(String),
    #[error("Newton preimage solve failed: {0}")]
    NewtonFailure(String),
    #[error("map leaves the logarithm trust region: {0}")]
    OutsideTrustRegion(String),
    #[error("radii must satisfy 1 >= r1 > r2 > 1/2 (got r1 = {r1}, r2 = {r2})")]
    RadiiOrderViolation { r1: f64, r2: f64 },

    #[error("malformed tabulated field file: {0}")]
    TabulationFormat(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
