//! Solutions of the delay equation and steering controls.

use std::collections::HashMap;

use num_complex::Complex;
use num_rational::BigRational;

use crate::coefficients::{ClassSums, System, XiHatTable};
use crate::controllability::RankBackend;
use crate::delay::{ClassKey, DelayVector, Horizon, Instant, TimeStamp};
use crate::error::{Error, Result};
use crate::linalg::{
    exact_right_inverse, from_exact, from_numeric, hstack, numeric_pseudo_inverse, to_exact, to_numeric, vector_norm,
    zero_vector, Matrix, Vector,
};
use crate::scalar::{Real, ScalarMode};
use crate::signal::{
    instant_to_real, PiecewisePolynomial, PolyVector, Signal, TimePoint, ZeroSignal, BREAKPOINT_TOLERANCE,
};

/// Default cap on distinct points visited by the recursive solver.
pub const DEFAULT_RECURSION_BUDGET: usize = 1_000_000;

/// Evaluates the representation formula, reusing `Ξ` across queries.
pub struct ExplicitSolver<'a, R: Real> {
    system: &'a System<R>,
    lambda: &'a DelayVector,
    sums: ClassSums<R>,
}

impl<'a, R: Real> ExplicitSolver<'a, R> {
    pub fn new(system: &'a System<R>, lambda: &'a DelayVector) -> Result<Self> {
        system.check_delays(lambda)?;
        Ok(ExplicitSolver { system, lambda, sums: ClassSums::new(system, lambda)? })
    }

    /// Terms contributed by the initial condition at time `t`.
    pub fn free_response(&mut self, x0: &dyn Signal<R>, t: &Instant) -> Result<Vector<R>> {
        self.solve(x0, &ZeroSignal { dim: self.system.inputs() }, t)
    }

    /// `Σ Ξ̂_c A_j x0(t - τ_c - Λ_j) + Σ Ξ̂_c B u(t - τ_c)`, the first sum over
    /// classes with `τ_c <= t < τ_c + Λ_j`, the second over `τ_c <= t`.
    pub fn solve(&mut self, x0: &dyn Signal<R>, u: &dyn Signal<R>, t: &Instant) -> Result<Vector<R>> {
        if t.is_negative() {
            return Ok(x0.eval(&TimePoint::plain(t.clone())));
        }
        let table = XiHatTable::build_with(self.system, &mut self.sums, self.lambda, &Horizon::Real(t.clone()), false)?;
        let basis = self.lambda.basis();
        let delays: Vec<TimeStamp> = (0..self.lambda.len()).map(|j| self.lambda.delay_stamp(j)).collect();
        let mut x = zero_vector(self.system.dim());
        for (class, xi_hat) in table.entries() {
            let point = TimePoint::new(t.clone(), class.time.clone());
            if point.is_negative() {
                continue;
            }
            let forced = u.eval(&point);
            if forced.iter().any(|z| !num_traits::Zero::is_zero(z)) {
                x += xi_hat * (self.system.b() * forced);
            }
            for (j, aj) in self.system.a().iter().enumerate() {
                let past = TimePoint::new(t.clone(), class.time.plus(basis, &delays[j]));
                if past.is_negative() {
                    x += xi_hat * (aj * x0.eval(&past));
                }
            }
        }
        Ok(x)
    }
}

pub fn free_response<R: Real>(
    system: &System<R>,
    lambda: &DelayVector,
    x0: &dyn Signal<R>,
    t: &Instant,
) -> Result<Vector<R>> {
    ExplicitSolver::new(system, lambda)?.free_response(x0, t)
}

pub fn solve_explicit<R: Real>(
    system: &System<R>,
    lambda: &DelayVector,
    x0: &dyn Signal<R>,
    u: &dyn Signal<R>,
    t: &Instant,
) -> Result<Vector<R>> {
    ExplicitSolver::new(system, lambda)?.solve(x0, u, t)
}

/// Unfolds `x(t) = Σ A_j x(t - Λ_j) + B u(t)` down to the initial
/// condition, memoizing on the accumulated shift.
pub fn solve_recursive<R: Real>(
    system: &System<R>,
    lambda: &DelayVector,
    x0: &dyn Signal<R>,
    u: &dyn Signal<R>,
    t: &Instant,
    budget: usize,
) -> Result<Vector<R>> {
    system.check_delays(lambda)?;
    let h = lambda.basis_len();
    let rows = lambda.matrix();
    let mut memo: HashMap<Vec<u64>, Vector<R>> = HashMap::new();
    let root = vec![0u64; h];
    let mut stack = vec![root.clone()];
    while let Some(top) = stack.last().cloned() {
        if memo.contains_key(&top) {
            stack.pop();
            continue;
        }
        if memo.len() >= budget {
            return Err(Error::RecursionBudgetExceeded(format!(
                "more than {budget} distinct points below t = {}",
                t.value()
            )));
        }
        let point = TimePoint::new(t.clone(), lambda.stamp(top.clone()));
        if point.is_negative() {
            memo.insert(top, x0.eval(&point));
            stack.pop();
            continue;
        }
        let children: Vec<Vec<u64>> =
            rows.iter().map(|row| top.iter().zip(row).map(|(a, b)| a + b).collect()).collect();
        let missing: Vec<Vec<u64>> = children.iter().filter(|c| !memo.contains_key(*c)).cloned().collect();
        if !missing.is_empty() {
            stack.extend(missing);
            continue;
        }
        let mut x = system.b() * u.eval(&point);
        for (aj, child) in system.a().iter().zip(&children) {
            x += aj * &memo[child];
        }
        stack.pop();
        memo.insert(top, x);
    }
    Ok(memo.remove(&root).expect("root evaluated"))
}

/// Control value `U_[n]` applied at `T - Λ·n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Impulse<R: Real> {
    pub key: ClassKey,
    pub time: TimeStamp,
    pub value: Vector<R>,
}

/// Control `U_[n](s)` applied at `T - Λ·n + s` for `s ∈ [0, ε]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment<R: Real> {
    pub key: ClassKey,
    pub time: TimeStamp,
    pub function: PiecewisePolynomial<R>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PlanKind<R: Real> {
    PointSteering { impulses: Vec<Impulse<R>> },
    Tracking { segments: Vec<Segment<R>>, epsilon: Instant },
}

/// A finitely described control, zero outside its support.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPlan<R: Real> {
    pub horizon: Instant,
    pub inputs: usize,
    pub kind: PlanKind<R>,
}

impl<R: Real> ControlPlan<R> {
    /// Offset of `t` from `T - τ`: exact when possible.
    fn offset(&self, t: &TimePoint, time: &TimeStamp) -> Instant {
        let from_base = t.base().minus(&self.horizon);
        let shift_delta = match t.shift() {
            Some(s) if s.coeffs() == time.coeffs() => Instant::zero(),
            Some(s) => Instant::from_stamp(s).minus(&Instant::from_stamp(time)),
            None => Instant::zero().minus(&Instant::from_stamp(time)),
        };
        from_base.minus(&shift_delta)
    }

    fn tolerance(&self) -> f64 {
        BREAKPOINT_TOLERANCE * self.horizon.value().abs().max(1.0)
    }

    /// Windows `[T - τ, T - τ + ε]` as numeric intervals, in plan order.
    pub fn windows(&self) -> Vec<(f64, f64)> {
        match &self.kind {
            PlanKind::PointSteering { impulses } => {
                impulses.iter().map(|i| (self.horizon.value() - i.time.value(), self.horizon.value() - i.time.value())).collect()
            }
            PlanKind::Tracking { segments, epsilon } => segments
                .iter()
                .map(|s| {
                    let start = self.horizon.value() - s.time.value();
                    (start, start + epsilon.value())
                })
                .collect(),
        }
    }

    /// Whether every pair of windows is disjoint.
    pub fn segments_disjoint(&self) -> bool {
        let mut windows = self.windows();
        windows.sort_by(|a, b| a.0.total_cmp(&b.0));
        windows.windows(2).all(|w| w[0].1 < w[1].0)
    }
}

fn is_zero_offset(offset: &Instant, tol: f64) -> bool {
    match offset.exact_value() {
        Some(q) => num_traits::Zero::is_zero(q),
        None => offset.value().abs() <= tol,
    }
}

fn within_window(offset: &Instant, epsilon: &Instant, tol: f64) -> bool {
    match (offset.exact_value(), epsilon.exact_value()) {
        (Some(s), Some(e)) => s >= &BigRational::from_integer(0.into()) && s <= e,
        _ => offset.value() >= -tol && offset.value() <= epsilon.value() + tol,
    }
}

impl<R: Real> Signal<R> for ControlPlan<R> {
    fn dim(&self) -> usize {
        self.inputs
    }

    fn eval(&self, t: &TimePoint) -> Vector<R> {
        evaluate_plan(self, t)
    }
}

/// Value of the plan at `t`; zero outside its support.
pub fn evaluate_plan<R: Real>(plan: &ControlPlan<R>, t: &TimePoint) -> Vector<R> {
    let tol = plan.tolerance();
    match &plan.kind {
        PlanKind::PointSteering { impulses } => {
            for impulse in impulses {
                if is_zero_offset(&plan.offset(t, &impulse.time), tol) {
                    return impulse.value.clone();
                }
            }
        }
        PlanKind::Tracking { segments, epsilon } => {
            for segment in segments {
                let offset = plan.offset(t, &segment.time);
                if within_window(&offset, epsilon, tol) {
                    return segment.function.eval_instant(&offset);
                }
            }
        }
    }
    zero_vector(plan.inputs)
}

/// Classes whose points `T - τ_c` are nonnegative, the stacked generator
/// matrix `[Ξ̂_c B]` and its class sums.
struct Generators<R: Real> {
    classes: Vec<(ClassKey, TimeStamp, Matrix<R>)>,
    stacked: Matrix<R>,
}

fn generators<R: Real>(system: &System<R>, lambda: &DelayVector, t: &Instant) -> Result<Generators<R>> {
    let table = XiHatTable::build(system, lambda, &Horizon::Real(t.clone()), false)?;
    let classes: Vec<(ClassKey, TimeStamp, Matrix<R>)> = table
        .entries()
        .iter()
        .filter(|(class, _)| !TimePoint::new(t.clone(), class.time.clone()).is_negative())
        .map(|(class, m)| (class.key.clone(), class.time.clone(), m.clone()))
        .collect();
    let blocks: Vec<Matrix<R>> = classes.iter().map(|(_, _, m)| m * system.b()).collect();
    let refs: Vec<&Matrix<R>> = blocks.iter().collect();
    Ok(Generators { stacked: hstack(system.dim(), &refs), classes })
}

/// Right inverse of the stacked generators, or `NotControllableAtT`.
fn right_inverse<R: Real>(stacked: &Matrix<R>, backend: &RankBackend) -> Result<Matrix<R>> {
    let d = stacked.nrows();
    let rank = backend.rank(stacked)?;
    if rank < d {
        return Err(Error::NotControllableAtT { rank, dim: d });
    }
    match backend.mode {
        ScalarMode::Exact => {
            let exact = to_exact(stacked).ok_or(Error::MixedScalarMode)?;
            exact_right_inverse(&exact).map(|m| from_exact(&m)).ok_or(Error::NotControllableAtT { rank, dim: d })
        }
        ScalarMode::Numeric => {
            let numeric = to_numeric(stacked);
            let tol = backend.tolerance.unwrap_or_else(|| crate::linalg::default_rank_tolerance(d, stacked.ncols()));
            numeric_pseudo_inverse(&numeric, tol).map(|m| from_numeric(&m)).ok_or(Error::NotControllableAtT { rank, dim: d })
        }
    }
}

/// Impulses `u(T - τ_c) = U_c` with `U = M (x1 - free_response(T))`.
pub fn synthesize_point_control<R: Real>(
    system: &System<R>,
    lambda: &DelayVector,
    x0: &dyn Signal<R>,
    x1: &Vector<R>,
    t: &Instant,
    backend: &RankBackend,
) -> Result<ControlPlan<R>> {
    system.check_delays(lambda)?;
    if x1.len() != system.dim() {
        return Err(Error::DimensionMismatch(format!("target has {} entries, state has {}", x1.len(), system.dim())));
    }
    if t.is_negative() {
        return Err(Error::InvalidArgument("time must be nonnegative".into()));
    }
    let gens = generators(system, lambda, t)?;
    let m = right_inverse(&gens.stacked, backend)?;
    let free = free_response(system, lambda, x0, t)?;
    let stacked_u = &m * (x1 - free);
    let inputs = system.inputs();
    let impulses = gens
        .classes
        .iter()
        .enumerate()
        .map(|(i, (key, time, _))| Impulse {
            key: key.clone(),
            time: time.clone(),
            value: stacked_u.rows(i * inputs, inputs).into_owned(),
        })
        .collect();
    Ok(ControlPlan { horizon: t.clone(), inputs, kind: PlanKind::PointSteering { impulses } })
}

/// Tracking plan together with notes about adjusted parameters.
#[derive(Clone, Debug)]
pub struct TrackingOutcome<R: Real> {
    pub plan: ControlPlan<R>,
    pub epsilon0: f64,
    pub warnings: Vec<String>,
}

/// Segments `U_c(s)` on `[T - τ_c, T - τ_c + ε]` with
/// `U(s) = M (x1(s) - Σ Ξ̂_c A_j x0(T + s - τ_c - Λ_j))`.
/// An `ε` at or above the gap radius is replaced by half the gap radius.
pub fn synthesize_tracking_control<R: Real>(
    system: &System<R>,
    lambda: &DelayVector,
    x0: &PiecewisePolynomial<R>,
    x1: &PiecewisePolynomial<R>,
    t: &Instant,
    epsilon: &Instant,
    backend: &RankBackend,
) -> Result<TrackingOutcome<R>> {
    system.check_delays(lambda)?;
    let d = system.dim();
    if x0.dim() != d || x1.dim() != d {
        return Err(Error::DimensionMismatch("initial condition and target must have the state dimension".into()));
    }
    if t.is_negative() {
        return Err(Error::InvalidArgument("time must be nonnegative".into()));
    }
    if epsilon.value() <= 0.0 || epsilon.is_negative() {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let epsilon0 = lambda.epsilon0(&Horizon::Real(t.clone()));
    let mut warnings = Vec::new();
    let mut epsilon = epsilon.clone();
    if epsilon.value() >= epsilon0 {
        let half = epsilon0 / 2.0;
        warnings.push(format!("epsilon {} is not below the gap bound {epsilon0}; using {half}", epsilon.value()));
        epsilon = match t.exact_value() {
            Some(_) => Instant::exact(BigRational::from_float(half).ok_or(Error::EpsilonTooLarge {
                epsilon: epsilon.value(),
                epsilon0,
            })?),
            None => Instant::numeric(half),
        };
    }
    if epsilon.value() >= epsilon0 || epsilon0.is_nan() {
        return Err(Error::EpsilonTooLarge { epsilon: epsilon.value(), epsilon0 });
    }

    let gens = generators(system, lambda, t)?;
    let m = right_inverse(&gens.stacked, backend)?;
    let basis = lambda.basis();
    let delays: Vec<TimeStamp> = (0..lambda.len()).map(|j| lambda.delay_stamp(j)).collect();

    // free terms that stay active on the whole window
    let mut free_terms: Vec<(Matrix<R>, Instant)> = Vec::new();
    for (_, time, xi_hat) in &gens.classes {
        for (j, aj) in system.a().iter().enumerate() {
            let past = TimePoint::new(t.clone(), time.plus(basis, &delays[j]));
            if past.is_negative() {
                free_terms.push((xi_hat * aj, past.to_instant()));
            }
        }
    }

    let cuts = window_cuts(x0, x1, &free_terms, &epsilon);
    let inputs = system.inputs();
    let classes = gens.classes.len();
    let mut pieces: Vec<Vec<PolyVector<R>>> = vec![Vec::new(); classes];
    for w in cuts.windows(2) {
        let (lo, hi) = (&w[0], &w[1]);
        let mid = Instant::numeric((lo.value() + hi.value()) / 2.0);
        let mut residual = x1.expansion_in(x1.piece_index(&mid), lo);
        for (k, offset) in &free_terms {
            let at = offset.plus(lo);
            let piece = x0.piece_index(&offset.plus(&mid));
            let local = x0.expansion_in(piece, &at);
            subtract_applied(&mut residual, k, &local);
        }
        let controls = apply(&m, &residual);
        for (c, slot) in pieces.iter_mut().enumerate() {
            slot.push(controls[c * inputs..(c + 1) * inputs].to_vec());
        }
    }
    let segments = gens
        .classes
        .iter()
        .zip(pieces)
        .map(|((key, time, _), polys)| {
            Ok(Segment { key: key.clone(), time: time.clone(), function: PiecewisePolynomial::new(cuts.clone(), polys)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let plan = ControlPlan { horizon: t.clone(), inputs, kind: PlanKind::Tracking { segments, epsilon } };
    Ok(TrackingOutcome { plan, epsilon0, warnings })
}

/// `0`, `ε` and every breakpoint of `x1` or of a shifted `x0` inside `(0, ε)`.
fn window_cuts<R: Real>(
    x0: &PiecewisePolynomial<R>,
    x1: &PiecewisePolynomial<R>,
    free_terms: &[(Matrix<R>, Instant)],
    epsilon: &Instant,
) -> Vec<Instant> {
    let mut cuts = vec![Instant::zero(), epsilon.clone()];
    let inside = |s: &Instant| {
        let tol = BREAKPOINT_TOLERANCE * epsilon.value().max(1.0);
        match (s.exact_value(), epsilon.exact_value()) {
            (Some(v), Some(e)) => v > &BigRational::from_integer(0.into()) && v < e,
            _ => s.value() > tol && s.value() < epsilon.value() - tol,
        }
    };
    for b in x1.breakpoints() {
        if inside(b) {
            cuts.push(b.clone());
        }
    }
    for (_, offset) in free_terms {
        for b in x0.breakpoints() {
            let s = b.minus(offset);
            if inside(&s) {
                cuts.push(s);
            }
        }
    }
    cuts.sort_by(|a, b| match (a.exact_value(), b.exact_value()) {
        (Some(x), Some(y)) => x.cmp(y),
        _ => a.value().total_cmp(&b.value()),
    });
    cuts.dedup_by(|a, b| match (a.exact_value(), b.exact_value()) {
        (Some(x), Some(y)) => x == y,
        _ => (a.value() - b.value()).abs() <= BREAKPOINT_TOLERANCE * a.value().abs().max(1.0),
    });
    cuts
}

/// `residual -= k · local`, componentwise on polynomial coefficients.
fn subtract_applied<R: Real>(residual: &mut PolyVector<R>, k: &Matrix<R>, local: &PolyVector<R>) {
    for (i, out) in residual.iter_mut().enumerate() {
        for (j, poly) in local.iter().enumerate() {
            let factor = &k[(i, j)];
            if num_traits::Zero::is_zero(factor) {
                continue;
            }
            if out.len() < poly.len() {
                out.resize(poly.len(), Complex::new(R::zero(), R::zero()));
            }
            for (p, c) in poly.iter().enumerate() {
                out[p] -= factor.clone() * c.clone();
            }
        }
    }
}

/// `m · polys` on coefficient vectors.
fn apply<R: Real>(m: &Matrix<R>, polys: &PolyVector<R>) -> PolyVector<R> {
    let degree = polys.iter().map(Vec::len).max().unwrap_or(1);
    (0..m.nrows())
        .map(|i| {
            (0..degree)
                .map(|p| {
                    let mut acc = Complex::new(R::zero(), R::zero());
                    for (j, poly) in polys.iter().enumerate() {
                        if let Some(c) = poly.get(p) {
                            acc += m[(i, j)].clone() * c.clone();
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// `|x - target| / (1 + |target|)`.
pub fn relative_residual<R: Real>(x: &Vector<R>, target: &Vector<R>) -> f64 {
    vector_norm(&(x - target)) / (1.0 + vector_norm(target))
}

/// Residual of a point plan at its horizon.
pub fn point_residual<R: Real>(
    system: &System<R>,
    lambda: &DelayVector,
    x0: &dyn Signal<R>,
    plan: &ControlPlan<R>,
    x1: &Vector<R>,
) -> Result<f64> {
    let x = solve_explicit(system, lambda, x0, plan, &plan.horizon)?;
    Ok(relative_residual(&x, x1))
}

/// Largest residual of a tracking plan over `samples` uniform points of `[0, ε]`.
pub fn tracking_residual<R: Real>(
    system: &System<R>,
    lambda: &DelayVector,
    x0: &dyn Signal<R>,
    plan: &ControlPlan<R>,
    x1: &dyn Signal<R>,
    samples: usize,
) -> Result<f64> {
    let PlanKind::Tracking { epsilon, .. } = &plan.kind else {
        return Err(Error::InvalidArgument("not a tracking plan".into()));
    };
    let mut solver = ExplicitSolver::new(system, lambda)?;
    let mut worst: f64 = 0.0;
    let steps = samples.max(2) - 1;
    for i in 0..=steps {
        let s = sample_offset(epsilon, i, steps);
        let x = solver.solve(x0, plan, &plan.horizon.plus(&s))?;
        let target = x1.eval(&TimePoint::plain(s));
        worst = worst.max(relative_residual(&x, &target));
    }
    Ok(worst)
}

/// `ε · i / steps`, exact when `ε` is.
pub fn sample_offset(epsilon: &Instant, i: usize, steps: usize) -> Instant {
    match epsilon.exact_value() {
        Some(e) => Instant::exact(e * BigRational::new((i as i64).into(), (steps as i64).into())),
        None => Instant::numeric(epsilon.value() * i as f64 / steps as f64),
    }
}

/// Value of `instant` in the scalar field, for callers building targets.
pub fn scalar_at<R: Real>(instant: &Instant) -> R {
    instant_to_real(instant)
}
