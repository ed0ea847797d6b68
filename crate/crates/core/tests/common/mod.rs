#![allow(dead_code)]

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reldiff::linalg::{from_exact, identity};
use reldiff::{BasisValue, DelayBasis, DelayVector, Instant, Matrix, PiecewisePolynomial, System};

pub type Q = BigRational;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn q(p: i64, d: i64) -> Q {
    BigRational::new(BigInt::from(p), BigInt::from(d))
}

pub fn exact(p: i64, d: i64) -> Instant {
    Instant::exact(q(p, d))
}

/// Small rational `p / den` with `p` uniform in `[lo, hi]`.
pub fn small_rational(rng: &mut ChaCha8Rng, lo: i64, hi: i64, den: i64) -> Q {
    q(rng.gen_range(lo..=hi), den)
}

pub fn rational_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: i64, hi: i64, den: i64) -> Matrix<Q> {
    Matrix::from_fn(rows, cols, |_, _| Complex::new(small_rational(rng, lo, hi, den), Q::from_integer(0.into())))
}

/// Random rational system; entries `p / den` with `|p| <= 2`, about a third zero.
pub fn exact_system(rng: &mut ChaCha8Rng, d: usize, m: usize, n: usize) -> System<Q> {
    let den = d as i64 + 1;
    let a = (0..n)
        .map(|_| {
            Matrix::from_fn(d, d, |_, _| {
                let p = if rng.gen_bool(0.35) { 0 } else { rng.gen_range(-2..=2) };
                Complex::new(q(p, den), Q::from_integer(0.into()))
            })
        })
        .collect();
    let b = rational_matrix(rng, d, m, -1, 1, 1);
    System::new(a, b).unwrap()
}

pub fn numeric_system(rng: &mut ChaCha8Rng, d: usize, m: usize, n: usize) -> System<f64> {
    let scale = 1.0 / d as f64;
    let a = (0..n).map(|_| Matrix::from_fn(d, d, |_, _| Complex::new(rng.gen_range(-scale..scale), 0.0))).collect();
    let b = Matrix::from_fn(d, m, |_, _| Complex::new(rng.gen_range(-1.0..1.0), 0.0));
    System::new(a, b).unwrap()
}

pub fn to_numeric(system: &System<Q>) -> System<f64> {
    system.map(from_exact)
}

/// `λ (k_1, ..., k_N)` with `λ ∈ {1, 1/2, 2/3}` and `k_j ∈ [1, 3]`.
pub fn commensurable(rng: &mut ChaCha8Rng, n: usize) -> DelayVector {
    let steps = [q(1, 1), q(1, 2), q(2, 3)];
    let step = steps[rng.gen_range(0..steps.len())].clone();
    let ks: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=3)).collect();
    DelayVector::commensurable(step, &ks).unwrap()
}

pub const IRRATIONALS: [f64; 4] = [std::f64::consts::SQRT_2, 1.7320508075688772, std::f64::consts::FRAC_PI_4 + 0.5, 0.6180339887498949];

/// Two-element basis `(1, irrational)` with a random full-rank `M`.
pub fn independent(rng: &mut ChaCha8Rng, n: usize) -> DelayVector {
    let irr = IRRATIONALS[rng.gen_range(0..IRRATIONALS.len())];
    loop {
        let rows: Vec<Vec<u64>> = (0..n)
            .map(|j| {
                if n == 1 {
                    return vec![1, 1];
                }
                match j {
                    0 => vec![1, 0],
                    1 => vec![0, 1],
                    _ => vec![rng.gen_range(0..=1), rng.gen_range(0..=1)],
                }
            })
            .collect();
        if rows.iter().any(|r| r.iter().all(|&e| e == 0)) {
            continue;
        }
        let basis = DelayBasis::new(vec![BasisValue::exact(q(1, 1)), BasisValue::numeric(irr)], true).unwrap();
        if let Ok(lam) = DelayVector::new(basis, rows) {
            return lam;
        }
    }
}

pub fn mixed_delays(rng: &mut ChaCha8Rng, n: usize) -> DelayVector {
    if n >= 2 && rng.gen_bool(0.5) {
        independent(rng, n)
    } else {
        commensurable(rng, n)
    }
}

/// Random piecewise polynomial with exact coefficients on `[lo, hi]`.
pub fn exact_signal(rng: &mut ChaCha8Rng, dim: usize, lo: &Instant, hi: &Instant, pieces: usize, degree: usize) -> PiecewisePolynomial<Q> {
    let breakpoints = split(rng, lo, hi, pieces);
    let polys = (0..pieces)
        .map(|_| {
            (0..dim)
                .map(|_| (0..=degree).map(|_| Complex::new(small_rational(rng, -4, 4, 2), Q::from_integer(0.into()))).collect())
                .collect()
        })
        .collect();
    PiecewisePolynomial::new(breakpoints, polys).unwrap()
}

pub fn numeric_signal(rng: &mut ChaCha8Rng, dim: usize, lo: &Instant, hi: &Instant, pieces: usize, degree: usize) -> PiecewisePolynomial<f64> {
    let breakpoints = split(rng, lo, hi, pieces);
    let polys = (0..pieces)
        .map(|_| (0..dim).map(|_| (0..=degree).map(|_| Complex::new(rng.gen_range(-2.0..2.0), 0.0)).collect()).collect())
        .collect();
    PiecewisePolynomial::new(breakpoints, polys).unwrap()
}

/// `lo < b_1 < ... < hi` at random interior positions (exact when the ends are).
fn split(rng: &mut ChaCha8Rng, lo: &Instant, hi: &Instant, pieces: usize) -> Vec<Instant> {
    let mut fractions: Vec<i64> = Vec::new();
    while fractions.len() < pieces - 1 {
        let f = rng.gen_range(1..97);
        if !fractions.contains(&f) {
            fractions.push(f);
        }
    }
    fractions.sort();
    let width = hi.minus(lo);
    let mut out = vec![lo.clone()];
    for f in fractions {
        let frac = match width.exact_value() {
            Some(_) => exact(f, 97),
            None => Instant::numeric(f as f64 / 97.0),
        };
        out.push(lo.plus(&width.scale(&frac)));
    }
    out.push(hi.clone());
    out
}

/// Exact rational near `x`, to 1/64.
pub fn rational_near(x: f64) -> Instant {
    exact((x * 64.0).round() as i64, 64)
}

pub fn identity_q(d: usize) -> Matrix<Q> {
    identity(d)
}

/// Kalman rank of `(A, B)` over the rationals.
pub fn kalman_rank(a: &Matrix<Q>, b: &Matrix<Q>) -> usize {
    let d = a.nrows();
    let mut blocks = Vec::new();
    let mut p = b.clone();
    for _ in 0..d {
        blocks.push(p.clone());
        p = a * &p;
    }
    let refs: Vec<&Matrix<Q>> = blocks.iter().collect();
    reldiff::linalg::exact_rank(&reldiff::linalg::hstack(d, &refs))
}
