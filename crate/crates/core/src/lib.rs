//! Relative controllability of linear difference equations with multiple
//! delays `x(t) = Σ A_j x(t - Λ_j) + B u(t)`.
//!
//! Matrices are generic over the real scalar `R` of their complex entries:
//! `BigRational` for exact computations, `f64` (or `f32`) for floating point.

pub mod coefficients;
pub mod controllability;
pub mod delay;
pub mod error;
pub mod io;
pub mod linalg;
pub mod scalar;
pub mod signal;
pub mod synthesis;

pub use coefficients::{controllability_generators, ClassSums, diblik_xi_hat, xi_hat, GeneratorBlock, System, XiHatTable, XiTable};
pub use controllability::{
    augmented_system, ck_rank_condition, controllable_some_time, is_relatively_controllable, kalman_augmented_check,
    minimal_controllability_time, rank_of_span, reduced_generator_check, transfer_controllability, AugmentedSystem,
    ControllabilityReport, MinTime, RankBackend, Transfer,
};
pub use delay::{
    BasisValue, ClassInfo, ClassKey, DelayBasis, DelayVector, Horizon, Instant, LatticePoint, Placement, TimeStamp,
};
pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use scalar::{Real, ScalarMode};
pub use signal::{FnSignal, PiecewisePolynomial, Signal, TimePoint, ZeroSignal};
pub use synthesis::{
    evaluate_plan, free_response, solve_explicit, solve_recursive, synthesize_point_control,
    synthesize_tracking_control, ControlPlan, ExplicitSolver, Impulse, PlanKind, Segment, TrackingOutcome,
};

pub type ExactScalar = num_rational::BigRational;
pub type ExactMatrix = Matrix<ExactScalar>;
pub type ExactSystem = System<ExactScalar>;
pub type NumericMatrix = Matrix<f64>;
pub type NumericSystem = System<f64>;
