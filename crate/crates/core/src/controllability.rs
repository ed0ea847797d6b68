//! Relative controllability verdicts, minimal time and the delay-comparison
//! results.

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::coefficients::{controllability_generators, GeneratorBlock, System, XiTable};
use crate::delay::{time_tolerance, ClassKey, DelayVector, Horizon, Instant, TimeStamp};
use crate::error::{Error, Result};
use crate::linalg::{
    default_rank_tolerance, exact_pivot_columns, exact_rank, hstack, identity, numeric_independent_columns,
    numeric_rank, to_exact, to_numeric, zeros, Matrix,
};
use crate::scalar::{format_ratio, Real, ScalarMode};

/// Environment variable overriding the numeric rank tolerance.
pub const RANK_TOLERANCE_ENV: &str = "RELDIFF_RANK_TOL";

/// How spans are ranked.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankBackend {
    pub mode: ScalarMode,
    /// Relative singular-value threshold; `None` uses `max(rows, cols) * eps`.
    pub tolerance: Option<f64>,
}

impl RankBackend {
    pub fn exact() -> Self {
        RankBackend { mode: ScalarMode::Exact, tolerance: None }
    }

    pub fn numeric() -> Self {
        RankBackend { mode: ScalarMode::Numeric, tolerance: None }
    }

    pub fn numeric_with_tolerance(tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0 && tolerance < 1.0) {
            return Err(Error::InvalidArgument(format!("rank tolerance {tolerance} must lie in (0, 1)")));
        }
        Ok(RankBackend { mode: ScalarMode::Numeric, tolerance: Some(tolerance) })
    }

    /// Exact for exact scalars, numeric otherwise.
    pub fn for_scalar<R: Real>() -> Self {
        match R::mode() {
            ScalarMode::Exact => Self::exact(),
            ScalarMode::Numeric => Self::numeric(),
        }
    }

    /// Applies `RELDIFF_RANK_TOL` when set.
    pub fn with_env_override(self) -> Result<Self> {
        match std::env::var(RANK_TOLERANCE_ENV) {
            Ok(text) => {
                let tol: f64 = text
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("{RANK_TOLERANCE_ENV}={text} is not a number")))?;
                let numeric = Self::numeric_with_tolerance(tol)?;
                Ok(RankBackend { mode: self.mode, tolerance: numeric.tolerance })
            }
            Err(_) => Ok(self),
        }
    }

    fn threshold(&self, rows: usize, cols: usize) -> f64 {
        self.tolerance.unwrap_or_else(|| default_rank_tolerance(rows, cols))
    }

    fn check<R: Real>(&self) -> Result<()> {
        if self.mode == ScalarMode::Exact && !R::EXACT {
            return Err(Error::MixedScalarMode);
        }
        Ok(())
    }

    /// Indices of a maximal set of independent columns.
    pub fn independent_columns<R: Real>(&self, m: &Matrix<R>) -> Result<Vec<usize>> {
        self.check::<R>()?;
        if m.ncols() == 0 || m.nrows() == 0 {
            return Ok(Vec::new());
        }
        Ok(match self.mode {
            ScalarMode::Exact => exact_pivot_columns(&to_exact(m).ok_or(Error::MixedScalarMode)?),
            ScalarMode::Numeric => {
                let numeric = to_numeric(m);
                let tol = self.threshold(m.nrows(), m.ncols());
                numeric_independent_columns(&numeric, tol, m.nrows())
            }
        })
    }

    pub fn rank<R: Real>(&self, m: &Matrix<R>) -> Result<usize> {
        self.check::<R>()?;
        if m.ncols() == 0 || m.nrows() == 0 {
            return Ok(0);
        }
        Ok(match self.mode {
            ScalarMode::Exact => exact_rank(&to_exact(m).ok_or(Error::MixedScalarMode)?),
            ScalarMode::Numeric => numeric_rank(&to_numeric(m), self.threshold(m.nrows(), m.ncols())),
        })
    }
}

/// Rank of the horizontally stacked blocks.
pub fn rank_of_span<R: Real>(blocks: &[Matrix<R>], rows: usize, backend: &RankBackend) -> Result<usize> {
    if let Some(bad) = blocks.iter().find(|b| b.nrows() != rows) {
        return Err(Error::DimensionMismatch(format!("block has {} rows, expected {rows}", bad.nrows())));
    }
    let refs: Vec<&Matrix<R>> = blocks.iter().collect();
    backend.rank(&hstack(rows, &refs))
}

/// Serializable view of a class time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StampRecord {
    pub coeffs: Vec<u64>,
    pub value: f64,
    pub exact: Option<String>,
}

impl From<&TimeStamp> for StampRecord {
    fn from(t: &TimeStamp) -> Self {
        StampRecord { coeffs: t.coeffs().to_vec(), value: t.value(), exact: t.exact().map(format_ratio) }
    }
}

/// Outcome of a span test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllabilityReport {
    pub controllable: bool,
    pub rank: usize,
    pub dim: usize,
    pub generators_used: usize,
    pub class_times: Vec<StampRecord>,
    /// Columns of the stacked generator matrix forming a basis, on success.
    pub certificate: Option<Vec<usize>>,
    /// Class times within tolerance of the horizon that did not change the verdict.
    pub ambiguous_times: Vec<f64>,
}

/// How blocks at ambiguous class times are treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ambiguity {
    /// Accept the verdict only when it does not depend on them.
    Resolve,
    /// Keep them.
    Include,
}

fn report_from_blocks<R: Real>(
    blocks: &[GeneratorBlock<R>],
    dim: usize,
    horizon: &Horizon,
    backend: &RankBackend,
    policy: Ambiguity,
) -> Result<ControllabilityReport> {
    let flagged: Vec<&GeneratorBlock<R>> = blocks.iter().filter(|b| b.class.ambiguous).collect();
    let full = plain_report(blocks.iter().collect(), dim, backend)?;
    if flagged.is_empty() || policy == Ambiguity::Include {
        return Ok(full);
    }
    let certain = plain_report(blocks.iter().filter(|b| !b.class.ambiguous).collect(), dim, backend)?;
    if certain.controllable != full.controllable {
        let time = flagged[0].class.time.value();
        let h = horizon.value();
        return Err(Error::AmbiguousBoundary { time, horizon: h, tolerance: time_tolerance(h) });
    }
    let mut report = certain;
    report.ambiguous_times = flagged.iter().map(|b| b.class.time.value()).collect();
    Ok(report)
}

fn plain_report<R: Real>(blocks: Vec<&GeneratorBlock<R>>, dim: usize, backend: &RankBackend) -> Result<ControllabilityReport> {
    let mats: Vec<&Matrix<R>> = blocks.iter().map(|b| &b.block).collect();
    let stacked = hstack(dim, &mats);
    let columns = backend.independent_columns(&stacked)?;
    let rank = if backend.mode == ScalarMode::Exact { columns.len() } else { backend.rank(&stacked)? };
    let controllable = rank == dim;
    Ok(ControllabilityReport {
        controllable,
        rank,
        dim,
        generators_used: blocks.len(),
        class_times: blocks.iter().map(|b| StampRecord::from(&b.class.time)).collect(),
        certificate: (controllable && columns.len() == dim).then_some(columns),
        ambiguous_times: Vec::new(),
    })
}

fn verdict<R: Real>(
    system: &System<R>,
    lambda: &DelayVector,
    horizon: &Horizon,
    strict: bool,
    backend: &RankBackend,
    policy: Ambiguity,
) -> Result<ControllabilityReport> {
    if horizon.to_instant().is_negative() {
        return Err(Error::InvalidArgument("time must be nonnegative".into()));
    }
    let blocks = controllability_generators(system, lambda, horizon, strict)?;
    report_from_blocks(&blocks, system.dim(), horizon, backend, policy)
}

/// Span of `Ξ̂_[n] B` over classes with `Λ·n <= T` equals `C^d`.
pub fn is_relatively_controllable<R: Real>(
    system: &System<R>,
    lambda: &DelayVector,
    horizon: &Horizon,
    backend: &RankBackend,
) -> Result<ControllabilityReport> {
    verdict(system, lambda, horizon, false, backend, Ambiguity::Resolve)
}

/// The same span over classes with `Λ·n < T`.
pub fn ck_rank_condition<R: Real>(
    system: &System<R>,
    lambda: &DelayVector,
    horizon: &Horizon,
    backend: &RankBackend,
) -> Result<ControllabilityReport> {
    verdict(system, lambda, horizon, true, backend, Ambiguity::Resolve)
}

/// `(d - 1) Λ_max` as an exact lattice combination.
pub fn saturation_bound(dim: usize, lambda: &DelayVector) -> TimeStamp {
    let (_, max) = lambda.max_delay();
    max.scaled(lambda.basis(), dim.saturating_sub(1) as u64)
}

/// Minimal controllability time.
#[derive(Clone, Debug, PartialEq)]
pub enum MinTime {
    Controllable(TimeStamp),
    NotControllable { rank: usize },
}

/// Smallest class time at which the span reaches `C^d`, searching class
/// times up to `(d - 1) Λ_max`.
pub fn minimal_controllability_time<R: Real>(
    system: &System<R>,
    lambda: &DelayVector,
    backend: &RankBackend,
) -> Result<MinTime> {
    let dim = system.dim();
    let bound = Horizon::Stamp(saturation_bound(dim, lambda));
    let blocks = controllability_generators(system, lambda, &bound, false)?;
    let mut kept: Matrix<R> = zeros(dim, 0);
    for block in blocks {
        let candidate = hstack(dim, &[&kept, &block.block]);
        let columns = backend.independent_columns(&candidate)?;
        if columns.len() > kept.ncols() {
            kept = candidate.select_columns(columns.iter());
        }
        if kept.ncols() == dim {
            return Ok(MinTime::Controllable(block.class.time));
        }
    }
    Ok(MinTime::NotControllable { rank: kept.ncols() })
}

/// Controllability at `(d - 1) Λ_max`, which decides controllability at any time.
pub fn controllable_some_time<R: Real>(
    system: &System<R>,
    lambda: &DelayVector,
    backend: &RankBackend,
) -> Result<ControllabilityReport> {
    let bound = Horizon::Stamp(saturation_bound(system.dim(), lambda));
    verdict(system, lambda, &bound, false, backend, Ambiguity::Include)
}

/// Single-delay companion form of a commensurable system.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSystem<R: Real> {
    pub a_hat: Matrix<R>,
    pub b_hat: Matrix<R>,
    pub c_hat: Matrix<R>,
    pub step: Instant,
    pub order: usize,
}

/// `Â` has the blocks `Â_k = Σ_{j: k_j = k} A_j` in its first block row and
/// identities below the diagonal; `B̂ = [B; 0]`, `Ĉ = [I 0]`.
pub fn augmented_system<R: Real>(system: &System<R>, lambda: &DelayVector) -> Result<AugmentedSystem<R>> {
    system.check_delays(lambda)?;
    if !lambda.is_commensurable() {
        return Err(Error::NotCommensurable { h: lambda.basis_len() });
    }
    let d = system.dim();
    let multiples: Vec<usize> = lambda.matrix().iter().map(|row| row[0] as usize).collect();
    let order = *multiples.iter().max().expect("nonempty delays");
    let size = order * d;
    let mut a_hat = zeros(size, size);
    for (aj, &k) in system.a().iter().zip(&multiples) {
        let mut view = a_hat.view_mut((0, (k - 1) * d), (d, d));
        view += aj;
    }
    for block in 1..order {
        a_hat.view_mut((block * d, (block - 1) * d), (d, d)).copy_from(&identity(d));
    }
    let mut b_hat = zeros(size, system.inputs());
    b_hat.view_mut((0, 0), (d, system.inputs())).copy_from(system.b());
    let mut c_hat = zeros(d, size);
    c_hat.view_mut((0, 0), (d, d)).copy_from(&identity(d));
    let basis = &lambda.basis().values()[0];
    let step = match basis.exact_value() {
        Some(q) => Instant::exact(q.clone()),
        None => Instant::numeric(basis.value()),
    };
    Ok(AugmentedSystem { a_hat, b_hat, c_hat, step, order })
}

/// Kalman-type test `rank [Ĉ Â^p B̂ : 0 <= p <= T/λ] = d`.
pub fn kalman_augmented_check<R: Real>(
    system: &System<R>,
    lambda: &DelayVector,
    horizon: &Horizon,
    backend: &RankBackend,
) -> Result<bool> {
    let aug = augmented_system(system, lambda)?;
    let d = system.dim();
    // powers beyond the augmented size add nothing
    let cap = aug.order * d;
    let mut blocks = Vec::new();
    let mut power = aug.b_hat.clone();
    for p in 0..cap {
        let stamp = lambda.stamp(vec![p as u64]);
        if !crate::delay::place(&stamp, horizon).within(false) {
            break;
        }
        blocks.push(&aug.c_hat * &power);
        power = &aug.a_hat * &power;
    }
    Ok(rank_of_span(&blocks, d, backend)? == d)
}

/// Outcome of transferring controllability from `L` to `Λ ≼ L`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transfer {
    pub kappa: Instant,
    pub source: ControllabilityReport,
    pub target: ControllabilityReport,
}

/// `κ = max_j Λ_j / L_j`, exact when every delay is exact.
pub fn kappa(lambda: &DelayVector, other: &DelayVector) -> Instant {
    let ratios: Vec<Instant> = (0..lambda.len())
        .map(|j| {
            let (a, b) = (lambda.delay(j), other.delay(j));
            match (a.exact_value(), b.exact_value()) {
                (Some(x), Some(y)) => Instant::exact(x / y),
                _ => Instant::numeric(a.value() / b.value()),
            }
        })
        .collect();
    if ratios.iter().all(|r| r.exact_value().is_some()) {
        let best: BigRational = ratios.iter().filter_map(|r| r.exact_value().cloned()).max().expect("nonempty");
        Instant::exact(best)
    } else {
        Instant::numeric(ratios.iter().map(Instant::value).fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Checks `L` at `T` and, with `κ = max Λ_j / L_j`, `Λ` at `κT`.
/// Controllability of `L` must carry over; a failure is reported as
/// `TheoremViolation`.
pub fn transfer_controllability<R: Real>(
    system: &System<R>,
    lambda: &DelayVector,
    other: &DelayVector,
    time: &Instant,
    backend: &RankBackend,
) -> Result<Transfer> {
    system.check_delays(other)?;
    if !lambda.preorder_leq(other)? {
        return Err(Error::NotComparable);
    }
    let k = kappa(lambda, other);
    let source = is_relatively_controllable(system, other, &Horizon::Real(time.clone()), backend)?;
    let target_time = Horizon::Real(time.scale(&k));
    let target = verdict(system, lambda, &target_time, false, backend, Ambiguity::Include)?;
    if source.controllable && !target.controllable {
        return Err(Error::TheoremViolation(format!(
            "controllable with the comparison delays at {} but not at {} (rank {} < {})",
            time.value(),
            target_time.value(),
            target.rank,
            target.dim
        )));
    }
    Ok(Transfer { kappa: k, source, target })
}

/// Span of `Ξ̂^Λ_[n] B` over the classes of `Λ` with `L·n <= (d - 1) L_max`.
pub fn reduced_generator_check<R: Real>(
    system: &System<R>,
    lambda: &DelayVector,
    other: &DelayVector,
    backend: &RankBackend,
) -> Result<ControllabilityReport> {
    system.check_delays(lambda)?;
    system.check_delays(other)?;
    if !lambda.preorder_leq(other)? {
        return Err(Error::NotComparable);
    }
    let dim = system.dim();
    let bound = Horizon::Stamp(saturation_bound(dim, other));
    let mut xi = XiTable::new(system);
    let mut order: Vec<ClassKey> = Vec::new();
    let mut sums: std::collections::HashMap<ClassKey, Matrix<R>> = std::collections::HashMap::new();
    for (point, _, _) in other.enumerate_points(&bound, false) {
        let key = lambda.class_key(&point);
        let term = xi.xi_at(&point).clone();
        match sums.get_mut(&key) {
            Some(total) => *total += term,
            None => {
                order.push(key.clone());
                sums.insert(key, term);
            }
        }
    }
    let blocks: Vec<GeneratorBlock<R>> = order
        .into_iter()
        .map(|key| {
            let block = &sums[&key] * system.b();
            let representative = lambda.class_members(&key).into_iter().next().expect("class has a member");
            let time = lambda.stamp(key.0.clone());
            GeneratorBlock { class: crate::delay::ClassInfo { key, representative, time, ambiguous: false }, block }
        })
        .collect();
    plain_report(blocks.iter().collect(), dim, backend)
}
