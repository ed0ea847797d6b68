//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
//! the process exits nonzero when any criterion fails.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant as Clock};

use common::*;
use num_complex::Complex;
use num_traits::Zero;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use reldiff::linalg::{from_integers, identity, zeros};
use reldiff::controllability::saturation_bound;
use reldiff::synthesis::{point_residual, relative_residual, tracking_residual, DEFAULT_RECURSION_BUDGET};
use reldiff::{
    controllable_some_time, diblik_xi_hat, is_relatively_controllable, kalman_augmented_check,
    minimal_controllability_time, rank_of_span, reduced_generator_check, solve_explicit,
    solve_recursive, synthesize_point_control, synthesize_tracking_control, transfer_controllability, xi_hat,
    BasisValue, ClassKey, ClassSums, DelayBasis, DelayVector, Horizon, Instant, LatticePoint, Matrix, MinTime,
    PiecewisePolynomial, RankBackend, Real, System, Vector, XiHatTable, XiTable,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("1 worked example, irrational vs rational delay", Duration::from_secs(1), example_fixture),
        ("2 single-ratio form, minimal time and closed form", Duration::from_secs(10), single_ratio_form),
        ("3 four-dimensional fixture, generator span", Duration::from_secs(1), four_dim_span),
        ("4 augmented system oracle", Duration::from_secs(60), augmented_oracle),
        ("5 explicit vs recursive solution", Duration::from_secs(60), solution_oracle),
        ("6 synthesis end to end", Duration::from_secs(120), synthesis_end_to_end),
        ("7 minimal-time bound and saturation", Duration::from_secs(60), saturation),
        ("8 preorder transfer", Duration::from_secs(60), preorder_transfer),
        ("9 coefficient invariants", Duration::from_secs(30), coefficient_invariants),
    ];
    let mut failures = 0;
    for (name, budget, run) in criteria {
        let start = Clock::now();
        let result = catch_unwind(AssertUnwindSafe(run));
        let elapsed = start.elapsed();
        let line = match result {
            Ok(Ok(detail)) if elapsed <= budget => Ok(detail),
            Ok(Ok(detail)) => Err(format!("{detail}; over budget {budget:?}")),
            Ok(Err(reason)) => Err(reason),
            Err(panic) => Err(format!(
                "panicked: {}",
                panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default()
            )),
        };
        match line {
            Ok(detail) => println!("criterion {name} ... PASS ({elapsed:.2?}; {detail})"),
            Err(reason) => {
                failures += 1;
                println!("criterion {name} ... FAIL ({elapsed:.2?}; {reason})");
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", 9 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn exact_backend() -> RankBackend {
    RankBackend::exact()
}

fn horizon(t: &Instant) -> Horizon {
    Horizon::Real(t.clone())
}

fn max_delay(lambda: &DelayVector) -> Instant {
    Instant::from_stamp(&lambda.max_delay().1)
}

/// Uniform point of `[0, hi]`, rational with denominator 64 when `hi` is exact.
fn random_time(rng: &mut ChaCha8Rng, hi: &Instant) -> Instant {
    let x = rng.gen_range(0.0..=hi.value());
    match hi.exact_value() {
        Some(_) => rational_near(x),
        None => Instant::numeric(x),
    }
}

fn random_exact_vector(rng: &mut ChaCha8Rng, d: usize) -> Vector<Q> {
    Vector::from_fn(d, |_, _| Complex::new(small_rational(rng, -6, 6, 2), Q::zero()))
}

fn pp_to_numeric(pp: &PiecewisePolynomial<Q>) -> PiecewisePolynomial<f64> {
    let breakpoints = pp.breakpoints().iter().map(|b| Instant::numeric(b.value())).collect();
    let pieces = pp
        .pieces()
        .iter()
        .map(|piece| {
            piece
                .iter()
                .map(|poly| poly.iter().map(|z| Complex::new(z.re.to_f64(), z.im.to_f64())).collect())
                .collect()
        })
        .collect();
    PiecewisePolynomial::new(breakpoints, pieces).unwrap()
}

fn shift3() -> Matrix<Q> {
    from_integers(&[&[0, 1, 0], &[0, 0, 1], &[0, 0, 0]])
}

fn criterion_one_system() -> System<Q> {
    let a2 = shift3();
    let a1 = -(&a2 * &a2);
    System::new(vec![a1, a2], from_integers(&[&[0], &[0], &[1]])).unwrap()
}

fn example_fixture() -> Outcome {
    let sys = criterion_one_system();
    let backend = exact_backend();
    let basis = DelayBasis::new(vec![BasisValue::exact(q(1, 1)), BasisValue::numeric(2f64.sqrt())], true).unwrap();
    let irrational = DelayVector::new(basis, vec![vec![1, 0], vec![0, 1]]).unwrap();
    for t in [exact(3, 2), exact(2, 1), exact(5, 1)] {
        let report = ok(is_relatively_controllable(&sys, &irrational, &horizon(&t), &backend))?;
        ensure!(report.controllable, "irrational delay not controllable at T = {}", t.value());
    }
    let half = DelayVector::commensurable(q(1, 2), &[2, 1]).unwrap();
    for t in [exact(1, 2), exact(1, 1), exact(5, 1), exact(10, 1)] {
        let report = ok(is_relatively_controllable(&sys, &half, &horizon(&t), &backend))?;
        ensure!(!report.controllable, "rational delay controllable at T = {}", t.value());
    }
    let key = half.class_key(&LatticePoint(vec![1, 0]));
    let sum = ok(xi_hat(&sys, &half, &key, &horizon(&exact(1, 1))))?;
    let oracle = &sys.a()[0] + &sys.a()[1] * &sys.a()[1];
    ensure!(sum == oracle, "class sum differs from A1 + A2^2");
    ensure!(sum == zeros(3, 3), "class sum of (1,0) is not zero");
    Ok("3 controllable, 4 not, class sum exactly zero".into())
}

fn single_ratio_form() -> Outcome {
    let mut rng = rng(2);
    let backend = exact_backend();
    let mut pairs = 0;
    let mut classes_checked = 0;
    while pairs < 50 {
        let d = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=3u64);
        let a = rational_matrix(&mut rng, d, d, -2, 2, 1);
        let b = rational_matrix(&mut rng, d, 1, -1, 1, 1);
        if kalman_rank(&a, &b) < d {
            continue;
        }
        pairs += 1;
        let sys = System::new(vec![identity_q(d), a.clone()], b).unwrap();
        let lambda = DelayVector::commensurable(q(1, 1), &[1, k]).unwrap();
        let expected = q((k * (d as u64 - 1)) as i64, 1);
        match ok(minimal_controllability_time(&sys, &lambda, &backend))? {
            MinTime::Controllable(t) => ensure!(
                t.exact() == Some(&expected),
                "d = {d}, k = {k}: minimal time {} instead of {}",
                t.describe(),
                expected
            ),
            MinTime::NotControllable { rank } => return Err(format!("d = {d}, k = {k}: not controllable, rank {rank}")),
        }
        let limit = exact((k * (d as u64 - 1) + 2) as i64, 1);
        let table = ok(XiHatTable::build(&sys, &lambda, &horizon(&limit), false))?;
        for (class, sum) in table.entries() {
            let rep = &class.representative;
            let expected = diblik_xi_hat(&a, k, rep);
            ensure!(*sum == expected, "d = {d}, k = {k}: class {} differs from the closed form", class.key);
            classes_checked += 1;
        }
    }
    Ok(format!("{pairs} pairs, {classes_checked} classes"))
}

fn four_dim_span() -> Outcome {
    let s2 = 2f64.sqrt();
    let s3 = 3f64.sqrt();
    let real = |rows: [[f64; 4]; 4]| Matrix::<f64>::from_fn(4, 4, |i, j| Complex::new(rows[i][j], 0.0));
    let a1 = real([[0.0, 1.0, 0.0, 0.0], [2.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0], [-3.0, s2, 0.0, 0.0]]);
    let a2 = real([[0.5, 0.0, -1.0, 0.0], [0.0, 1.0, 0.0, 1.0], [0.0, 0.0, 1.0, 0.0], [s3, 0.0, 0.0, 2.0]]);
    let b = Matrix::<f64>::from_fn(4, 1, |i, _| Complex::new(if i == 3 { 1.0 } else { 0.0 }, 0.0));
    let sys = System::new(vec![a1, a2], b).map_err(|e| e.to_string())?;
    let basis =
        DelayBasis::new(vec![BasisValue::numeric(1.0), BasisValue::numeric(std::f64::consts::FRAC_PI_4)], true).unwrap();
    let lambda = DelayVector::new(basis, vec![vec![1, 0], vec![0, 1]]).unwrap();
    let backend = RankBackend::numeric();
    let gens = ok(reldiff::controllability_generators(&sys, &lambda, &horizon(&Instant::numeric(3.0)), false))?;
    ensure!(gens.len() == 10, "{} generators instead of 10", gens.len());
    let blocks: Vec<Matrix<f64>> = gens.iter().map(|g| g.block.clone()).collect();
    let rank = ok(rank_of_span(&blocks, 4, &backend))?;
    ensure!(rank == 3, "generator rank {rank}");
    for g in &gens {
        ensure!(g.block[(0, 0)].norm() <= 1e-12, "generator of class {} has a nonzero first entry", g.class.key);
    }
    for i in 1..4 {
        let mut with_unit = blocks.clone();
        with_unit.push(Matrix::from_fn(4, 1, |r, _| Complex::new(if r == i { 1.0 } else { 0.0 }, 0.0)));
        ensure!(ok(rank_of_span(&with_unit, 4, &backend))? == 3, "e{} outside the span", i + 1);
    }
    let listed: [[f64; 4]; 8] = [
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 1.0, 0.0, 2.0],
        [0.0, 3.0, 0.0, 4.0],
        [0.0, 7.0, 0.0, 8.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 3.0, s2],
        [0.0, s2, 7.0, 5.0 * s2],
        [0.0, 0.0, s2, 0.0],
    ];
    for v in listed {
        let found = gens.iter().any(|g| (0..4).all(|r| (g.block[(r, 0)].re - v[r]).abs() <= 1e-12 && g.block[(r, 0)].im == 0.0));
        ensure!(found, "listed vector {v:?} missing from the generators");
    }
    let all_seen: Vec<Matrix<f64>> = listed.iter().map(|v| Matrix::from_fn(4, 1, |r, _| Complex::new(v[r], 0.0))).collect();
    ensure!(ok(rank_of_span(&all_seen, 4, &backend))? == 3, "listed vectors do not have rank 3");
    let some = ok(controllable_some_time(&sys, &lambda, &backend))?;
    ensure!(!some.controllable, "controllable at the saturation time");
    Ok("10 generators, rank 3, first coordinate zero".into())
}

fn augmented_oracle() -> Outcome {
    let mut rng = rng(4);
    let mut agreed = 0;
    let mut positive = 0;
    for case in 0..200 {
        let d = rng.gen_range(1..=4);
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=2);
        let lambda = commensurable(&mut rng, n);
        let limit = Instant::from_stamp(&saturation_bound(d, &lambda)).plus(&exact(1, 1));
        let t = random_time(&mut rng, &limit);
        let (direct, augmented) = if case % 2 == 0 {
            let sys = exact_system(&mut rng, d, m, n);
            let backend = exact_backend();
            (
                ok(is_relatively_controllable(&sys, &lambda, &horizon(&t), &backend))?.controllable,
                ok(kalman_augmented_check(&sys, &lambda, &horizon(&t), &backend))?,
            )
        } else {
            let sys = numeric_system(&mut rng, d, m, n);
            let backend = RankBackend::numeric();
            (
                ok(is_relatively_controllable(&sys, &lambda, &horizon(&t), &backend))?.controllable,
                ok(kalman_augmented_check(&sys, &lambda, &horizon(&t), &backend))?,
            )
        };
        ensure!(direct == augmented, "case {case}: direct {direct}, augmented {augmented}");
        agreed += 1;
        positive += direct as usize;
    }
    Ok(format!("{agreed}/200 agree, {positive} controllable"))
}

fn solution_oracle() -> Outcome {
    let mut rng = rng(5);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let d = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=2);
        let lambda = mixed_delays(&mut rng, n);
        let sys = exact_system(&mut rng, d, m, n);
        let lmax = max_delay(&lambda);
        let until = lmax.scale(&exact(3, 1));
        let x0 = exact_signal(&mut rng, d, &Instant::zero().minus(&lmax), &Instant::zero(), 3, 2);
        let u = exact_signal(&mut rng, m, &Instant::zero(), &until, 3, 2);
        let numeric_sys = to_numeric(&sys);
        let (nx0, nu) = (pp_to_numeric(&x0), pp_to_numeric(&u));
        for _ in 0..100 {
            let t = random_time(&mut rng, &until);
            let explicit = ok(solve_explicit(&sys, &lambda, &x0, &u, &t))?;
            let recursive = ok(solve_recursive(&sys, &lambda, &x0, &u, &t, DEFAULT_RECURSION_BUDGET))?;
            ensure!(explicit == recursive, "case {case}: exact solutions differ at t = {}", t.value());
            let t = Instant::numeric(t.value());
            let explicit = ok(solve_explicit(&numeric_sys, &lambda, &nx0, &nu, &t))?;
            let recursive = ok(solve_recursive(&numeric_sys, &lambda, &nx0, &nu, &t, DEFAULT_RECURSION_BUDGET))?;
            let gap = relative_residual(&explicit, &recursive);
            worst = worst.max(gap);
            ensure!(gap <= 1e-10, "case {case}: numeric discrepancy {gap:e} at t = {}", t.value());
        }
    }
    Ok(format!("exact discrepancy 0, numeric max {worst:.1e}"))
}

fn controllable_exact_instance(rng: &mut ChaCha8Rng) -> (System<Q>, DelayVector, Instant) {
    loop {
        let d = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=2);
        let lambda = mixed_delays(rng, n);
        let sys = exact_system(rng, d, m, n);
        let limit = Instant::from_stamp(&saturation_bound(d, &lambda)).plus(&max_delay(&lambda));
        let t = random_time(rng, &limit);
        let report = is_relatively_controllable(&sys, &lambda, &horizon(&t), &exact_backend());
        if matches!(report, Ok(r) if r.controllable) {
            return (sys, lambda, t);
        }
    }
}

fn synthesis_end_to_end() -> Outcome {
    let mut rng = rng(6);
    let mut worst_point: f64 = 0.0;
    let mut worst_track: f64 = 0.0;
    for case in 0..100 {
        let (sys, lambda, t) = controllable_exact_instance(&mut rng);
        let d = sys.dim();
        let lmax = max_delay(&lambda);
        let x0 = exact_signal(&mut rng, d, &Instant::zero().minus(&lmax), &Instant::zero(), 2, 1);
        let x1 = random_exact_vector(&mut rng, d);
        let eps0 = lambda.epsilon0(&horizon(&t));
        let eps = Instant::exact(num_rational::BigRational::from_float(eps0 / 2.0).unwrap());
        let target = exact_signal(&mut rng, d, &Instant::zero(), &eps, 2, 2);
        let (point, track, disjoint) = if case % 2 == 0 {
            let backend = exact_backend();
            let plan = ok(synthesize_point_control(&sys, &lambda, &x0, &x1, &t, &backend))?;
            let point = ok(point_residual(&sys, &lambda, &x0, &plan, &x1))?;
            let outcome = ok(synthesize_tracking_control(&sys, &lambda, &x0, &target, &t, &eps, &backend))?;
            let track = ok(tracking_residual(&sys, &lambda, &x0, &outcome.plan, &target, 11))?;
            (point, track, outcome.plan.segments_disjoint())
        } else {
            let backend = RankBackend::numeric();
            let (nsys, nx0, ntarget) = (to_numeric(&sys), pp_to_numeric(&x0), pp_to_numeric(&target));
            let nx1 = x1.map(|z| Complex::new(z.re.to_f64(), z.im.to_f64()));
            let nt = Instant::numeric(t.value());
            let neps = Instant::numeric(eps.value());
            let plan = ok(synthesize_point_control(&nsys, &lambda, &nx0, &nx1, &nt, &backend))?;
            let point = ok(point_residual(&nsys, &lambda, &nx0, &plan, &nx1))?;
            let outcome = ok(synthesize_tracking_control(&nsys, &lambda, &nx0, &ntarget, &nt, &neps, &backend))?;
            let track = ok(tracking_residual(&nsys, &lambda, &nx0, &outcome.plan, &ntarget, 11))?;
            (point, track, outcome.plan.segments_disjoint())
        };
        ensure!(point <= 1e-9, "case {case}: point residual {point:e}");
        ensure!(track <= 1e-9, "case {case}: tracking residual {track:e}");
        ensure!(disjoint, "case {case}: tracking segments overlap");
        worst_point = worst_point.max(point);
        worst_track = worst_track.max(track);
    }
    Ok(format!("point max {worst_point:.1e}, tracking max {worst_track:.1e}"))
}

fn saturation() -> Outcome {
    let mut rng = rng(7);
    let backend = exact_backend();
    let mut controllable = 0;
    for case in 0..300 {
        let d = rng.gen_range(1..=4);
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=2);
        let lambda = mixed_delays(&mut rng, n);
        let sys = exact_system(&mut rng, d, m, n);
        let bound = saturation_bound(d, &lambda);
        let (_, lmax) = lambda.max_delay();
        let beyond = bound.plus(lambda.basis(), &lmax.scaled(lambda.basis(), 3));
        let probe_limit = Instant::from_stamp(&beyond);
        let probed = (0..3).map(|_| random_time(&mut rng, &probe_limit)).collect::<Vec<_>>();
        let mut any = false;
        for t in &probed {
            any |= ok(is_relatively_controllable(&sys, &lambda, &horizon(t), &backend))?.controllable;
        }
        let at_bound = ok(is_relatively_controllable(&sys, &lambda, &Horizon::Stamp(bound.clone()), &backend))?;
        let at_beyond = ok(is_relatively_controllable(&sys, &lambda, &Horizon::Stamp(beyond.clone()), &backend))?;
        ensure!(at_bound.controllable == at_beyond.controllable, "case {case}: verdict changes after the bound");
        if any {
            controllable += 1;
            match ok(minimal_controllability_time(&sys, &lambda, &backend))? {
                MinTime::Controllable(t) => ensure!(t <= bound, "case {case}: minimal time beyond the bound"),
                MinTime::NotControllable { rank } => {
                    return Err(format!("case {case}: controllable at a probe but minimal time search ends at rank {rank}"))
                }
            }
        }
    }
    Ok(format!("300 instances, {controllable} controllable at a probe"))
}

/// `Λ = M (1, irrational)` and `L = M (1, p/q)`, so `Λ ≼ L`.
fn refined_pair(rng: &mut ChaCha8Rng, n: usize) -> (DelayVector, DelayVector) {
    let lambda = independent(rng, n);
    let irr = lambda.basis().values()[1].value();
    let coarse = rational_near(irr).exact_value().cloned().unwrap();
    let basis = DelayBasis::new(vec![BasisValue::exact(q(1, 1)), BasisValue::exact(coarse)], false).unwrap();
    let other = DelayVector::new(basis, lambda.matrix().to_vec()).unwrap();
    (lambda, other)
}

fn preorder_transfer() -> Outcome {
    let mut rng = rng(8);
    let backend = exact_backend();
    let mut transferred = 0;
    for case in 0..100 {
        let d = rng.gen_range(1..=3);
        let n = rng.gen_range(2..=3);
        let m = rng.gen_range(1..=2);
        let (lambda, other) = refined_pair(&mut rng, n);
        ensure!(ok(lambda.preorder_leq(&other))?, "case {case}: refinement is not below");
        let sys = exact_system(&mut rng, d, m, n);
        let limit = Instant::from_stamp(&saturation_bound(d, &other)).plus(&max_delay(&other));
        let t = random_time(&mut rng, &limit);
        let transfer = ok(transfer_controllability(&sys, &lambda, &other, &t, &backend))?;
        if transfer.source.controllable {
            ensure!(transfer.target.controllable, "case {case}: transfer failed");
            transferred += 1;
        }
        let reduced = ok(reduced_generator_check(&sys, &lambda, &other, &backend))?;
        let direct = ok(controllable_some_time(&sys, &lambda, &backend))?;
        ensure!(
            reduced.controllable == direct.controllable,
            "case {case}: reduced check {} but direct check {}",
            reduced.controllable,
            direct.controllable
        );
    }
    Ok(format!("100 pairs, {transferred} transfers, 0 violations"))
}

/// `Ξ_n` as the sum over all orderings of the factors `A_k`.
fn word_sum(a: &[Matrix<Q>], n: &mut Vec<u64>) -> Matrix<Q> {
    let d = a[0].nrows();
    if n.iter().all(|&e| e == 0) {
        return identity(d);
    }
    let mut total = zeros(d, d);
    for k in 0..n.len() {
        if n[k] > 0 {
            n[k] -= 1;
            total += &a[k] * word_sum(a, n);
            n[k] += 1;
        }
    }
    total
}

fn points_up_to(len: usize, level: u64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p: Vec<i64>| {
                let used: i64 = p.iter().sum();
                (0..=(level as i64 - used)).map(move |e| {
                    let mut q = p.clone();
                    q.push(e);
                    q
                })
            })
            .collect();
    }
    out
}

fn coefficient_invariants() -> Outcome {
    let mut rng = rng(9);
    let mut counts = [0usize; 4];

    for _ in 0..20 {
        let d = rng.gen_range(1..=4);
        let n = rng.gen_range(1..=4);
        let sys = exact_system(&mut rng, d, 1, n);
        let mut table = XiTable::new(&sys);
        for point in points_up_to(n, 6) {
            let lhs = table.xi(&point);
            let mut rhs = zeros(d, d);
            for k in 0..n {
                let mut prev = point.clone();
                prev[k] -= 1;
                rhs += &sys.a()[k] * table.xi(&prev);
            }
            if point.iter().all(|&e| e == 0) {
                rhs = identity(d);
            }
            ensure!(lhs == rhs, "recursion identity fails at {point:?}");
            if point.iter().sum::<i64>() <= 3 {
                let mut word: Vec<u64> = point.iter().map(|&e| e as u64).collect();
                ensure!(lhs == word_sum(sys.a(), &mut word), "word sum differs at {point:?}");
            }
            counts[0] += 1;
        }
    }

    for _ in 0..30 {
        let d = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=3);
        let lambda = mixed_delays(&mut rng, n);
        let sys = exact_system(&mut rng, d, 1, n);
        let t = random_time(&mut rng, &max_delay(&lambda).scale(&exact(3, 1)));
        let h = horizon(&t);
        let table = ok(XiHatTable::build(&sys, &lambda, &h, false))?;
        let mut xi = XiTable::new(&sys);
        let mut all_points = zeros(d, d);
        for (point, _, _) in lambda.enumerate_points(&h, false) {
            all_points += xi.xi_at(&point);
        }
        let mut all_classes = zeros(d, d);
        for (class, sum) in table.entries() {
            ensure!(*sum == ok(xi_hat(&sys, &lambda, &class.key, &h))?, "class {} differs from its member sum", class.key);
            all_classes += sum;
        }
        ensure!(all_points == all_classes, "partition identity fails");
        counts[1] += 1;
    }

    for _ in 0..30 {
        let d = rng.gen_range(1..=3);
        let n = rng.gen_range(2..=3);
        let (lambda, other) = refined_pair(&mut rng, n);
        let sys = exact_system(&mut rng, d, 1, n);
        let t = random_time(&mut rng, &max_delay(&other).scale(&exact(2, 1)));
        let h = horizon(&t);
        let coarse = ok(XiHatTable::build(&sys, &other, &h, false))?;
        let mut fine = ok(ClassSums::new(&sys, &lambda))?;
        let mut members: HashMap<ClassKey, Vec<ClassKey>> = HashMap::new();
        for (point, key, _) in other.enumerate_points(&h, false) {
            let fine_key = lambda.class_key(&point);
            let list = members.entry(key).or_default();
            if !list.contains(&fine_key) {
                list.push(fine_key);
            }
        }
        for (class, sum) in coarse.entries() {
            let mut total = zeros(d, d);
            for fine_key in &members[&class.key] {
                total += fine.get(fine_key);
            }
            ensure!(*sum == total, "refinement identity fails for class {}", class.key);
            counts[2] += 1;
        }
    }

    for _ in 0..30 {
        let d = rng.gen_range(1..=4);
        let sys = exact_system(&mut rng, d, 1, 1);
        let lambda = commensurable(&mut rng, 1);
        let step = max_delay(&lambda);
        let table = ok(XiHatTable::build(&sys, &lambda, &horizon(&step.scale(&exact(8, 1))), false))?;
        let mut power = identity(d);
        for (i, (class, sum)) in table.entries().iter().enumerate() {
            ensure!(class.key.0[0] as usize == i * lambda.matrix()[0][0] as usize, "unexpected class order");
            ensure!(*sum == power, "power law fails at {}", i);
            power = &sys.a()[0] * &power;
            counts[3] += 1;
        }
    }

    Ok(format!(
        "recursion {} points, partition {} cases, refinement {} classes, power law {} classes",
        counts[0], counts[1], counts[2], counts[3]
    ))
}
