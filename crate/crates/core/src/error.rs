use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("delay {row} is zero (row of M has no positive entry)")]
    ZeroDelay { row: usize },
    #[error("delay matrix has rational rank {rank} but the basis has {basis} elements")]
    RankDeficientBasis { rank: usize, basis: usize },
    #[error("basis value {index} is not strictly positive")]
    NonPositiveBasis { index: usize },
    #[error("a basis with several elements must be declared rationally independent")]
    IndependenceNotDeclared,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("time {time} lies within {tolerance:e} of the horizon {horizon}; boundary membership is ambiguous")]
    AmbiguousBoundary { time: f64, horizon: f64, tolerance: f64 },
    #[error("commensurable approximation with n = {n} has a non-positive delay")]
    ApproxNotPositive { n: u64 },
    #[error("no commensurable surrogate found within {cap} refinements")]
    SurrogateSearchExceeded { cap: u64 },
    #[error("class time {time} exceeds the horizon {horizon}")]
    ClassBeyondHorizon { time: f64, horizon: f64 },
    #[error("exact rank requested for floating-point data")]
    MixedScalarMode,
    #[error("delay vector is not commensurable (basis has {h} elements)")]
    NotCommensurable { h: usize },
    #[error("delay vectors are not comparable: the first is not below the second in the rational-dependence preorder")]
    NotComparable,
    #[error("internal consistency failure: {0}")]
    TheoremViolation(String),
    #[error("system is not relatively controllable at the requested time (rank {rank} < {dim})")]
    NotControllableAtT { rank: usize, dim: usize },
    #[error("epsilon {epsilon} is not below the gap bound {epsilon0}")]
    EpsilonTooLarge { epsilon: f64, epsilon0: f64 },
    #[error("recursion budget exceeded: {0}")]
    RecursionBudgetExceeded(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("cannot parse `{0}` as an exact rational")]
    RationalParseError(String),
}

pub type Result<T> = std::result::Result<T, Error>;
