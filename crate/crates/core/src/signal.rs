//! Time points and signals evaluated at them.
//!
//! A solution is only ever queried at points `t - Λ·n`. Keeping the shift as
//! a lattice time stamp lets every evaluation route build the same point,
//! with the same numeric value, and lets control plans match class times
//! exactly.

use num_complex::Complex;
use num_rational::BigRational;
use num_traits::Zero;

use crate::delay::{Instant, TimeStamp};
use crate::error::{Error, Result};
use crate::linalg::{zero_vector, Vector};
use crate::scalar::Real;

/// Collision width for breakpoints compared in floating point.
pub const BREAKPOINT_TOLERANCE: f64 = 1e-12;

/// The point `base - shift`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimePoint {
    base: Instant,
    shift: Option<TimeStamp>,
}

impl TimePoint {
    pub fn new(base: Instant, shift: TimeStamp) -> Self {
        TimePoint { base, shift: Some(shift) }
    }

    pub fn plain(base: Instant) -> Self {
        TimePoint { base, shift: None }
    }

    pub fn base(&self) -> &Instant {
        &self.base
    }

    pub fn shift(&self) -> Option<&TimeStamp> {
        self.shift.as_ref()
    }

    pub fn value(&self) -> f64 {
        self.base.value() - self.shift.as_ref().map_or(0.0, TimeStamp::value)
    }

    pub fn exact(&self) -> Option<BigRational> {
        let base = self.base.exact_value()?;
        match &self.shift {
            Some(s) => Some(base - s.exact()?),
            None => Some(base.clone()),
        }
    }

    pub fn to_instant(&self) -> Instant {
        match self.exact() {
            Some(q) => Instant::exact(q),
            None => Instant::numeric(self.value()),
        }
    }

    /// Sign test shared by every solver.
    pub fn is_negative(&self) -> bool {
        match self.exact() {
            Some(q) => q < BigRational::zero(),
            None => self.value() < 0.0,
        }
    }
}

impl From<Instant> for TimePoint {
    fn from(value: Instant) -> Self {
        TimePoint::plain(value)
    }
}

/// A vector-valued function of time.
pub trait Signal<R: Real> {
    fn dim(&self) -> usize;
    fn eval(&self, t: &TimePoint) -> Vector<R>;
}

/// Scalar value of a point in the field `R`.
pub fn instant_to_real<R: Real>(t: &Instant) -> R {
    match t.exact_value() {
        Some(q) => R::from_ratio(q),
        None => R::from_f64(t.value()),
    }
}

/// Identically zero signal.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroSignal {
    pub dim: usize,
}

impl<R: Real> Signal<R> for ZeroSignal {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _: &TimePoint) -> Vector<R> {
        zero_vector(self.dim)
    }
}

/// Black-box evaluator on the numeric value of the point.
pub struct FnSignal<F> {
    pub dim: usize,
    pub f: F,
}

impl<R: Real, F: Fn(f64) -> Vector<R>> Signal<R> for FnSignal<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: &TimePoint) -> Vector<R> {
        (self.f)(t.value())
    }
}

/// One polynomial per component, coefficients in increasing powers.
pub type PolyVector<R> = Vec<Vec<Complex<R>>>;

/// `p(δ + σ)` as a polynomial in `σ`.
pub fn taylor_shift<R: Real>(coeffs: &[Complex<R>], delta: &R) -> Vec<Complex<R>> {
    let mut out = coeffs.to_vec();
    let delta = Complex::new(delta.clone(), R::zero());
    let n = out.len();
    for i in 0..n {
        for k in (i..n.saturating_sub(1)).rev() {
            let carry = out[k + 1].clone() * delta.clone();
            out[k] += carry;
        }
    }
    out
}

pub fn horner<R: Real>(coeffs: &[Complex<R>], s: &R) -> Complex<R> {
    let s = Complex::new(s.clone(), R::zero());
    coeffs.iter().rev().fold(Complex::zero(), |acc, c| acc * s.clone() + c.clone())
}

/// Piecewise-polynomial signal. Piece `i` covers `(b_i, b_{i+1}]` (the first
/// piece also contains `b_0`) and is written in powers of `t - b_i`. A point
/// within `1e-12` of a breakpoint belongs to the piece on its left; points
/// outside `[b_0, b_P]` use the nearest piece.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewisePolynomial<R: Real> {
    breakpoints: Vec<Instant>,
    pieces: Vec<PolyVector<R>>,
    dim: usize,
}

impl<R: Real> PiecewisePolynomial<R> {
    pub fn new(breakpoints: Vec<Instant>, pieces: Vec<PolyVector<R>>) -> Result<Self> {
        if pieces.is_empty() || breakpoints.len() != pieces.len() + 1 {
            return Err(Error::SchemaError(format!(
                "{} breakpoints for {} pieces; expected one more breakpoint than pieces",
                breakpoints.len(),
                pieces.len()
            )));
        }
        for w in breakpoints.windows(2) {
            let increasing = match (w[0].exact_value(), w[1].exact_value()) {
                (Some(a), Some(b)) => a < b,
                _ => w[0].value() < w[1].value(),
            };
            if !increasing {
                return Err(Error::SchemaError("breakpoints must be strictly increasing".into()));
            }
        }
        let dim = pieces[0].len();
        if dim == 0 || pieces.iter().any(|p| p.len() != dim || p.iter().any(Vec::is_empty)) {
            return Err(Error::SchemaError("every piece needs one nonempty polynomial per component".into()));
        }
        Ok(PiecewisePolynomial { breakpoints, pieces, dim })
    }

    /// Constant value on `[lo, hi]`.
    pub fn constant(value: &Vector<R>, lo: Instant, hi: Instant) -> Result<Self> {
        Self::new(vec![lo, hi], vec![value.iter().map(|z| vec![z.clone()]).collect()])
    }

    pub fn breakpoints(&self) -> &[Instant] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[PolyVector<R>] {
        &self.pieces
    }

    /// Index of the piece used at `t`.
    pub fn piece_index(&self, t: &Instant) -> usize {
        let interior = &self.breakpoints[1..self.breakpoints.len() - 1];
        interior.iter().filter(|b| strictly_after(t, b)).count()
    }

    /// Polynomials of the piece at `t`, re-centred at `t`.
    pub fn local_expansion(&self, t: &Instant) -> PolyVector<R> {
        let i = self.piece_index(t);
        self.expansion_in(i, t)
    }

    /// Polynomials of piece `i`, re-centred at `t`.
    pub fn expansion_in(&self, i: usize, t: &Instant) -> PolyVector<R> {
        let delta = instant_to_real::<R>(t) - instant_to_real::<R>(&self.breakpoints[i]);
        self.pieces[i].iter().map(|p| taylor_shift(p, &delta)).collect()
    }

    pub fn eval_instant(&self, t: &Instant) -> Vector<R> {
        let i = self.piece_index(t);
        let s = instant_to_real::<R>(t) - instant_to_real::<R>(&self.breakpoints[i]);
        Vector::from_iterator(self.dim, self.pieces[i].iter().map(|p| horner(p, &s)))
    }
}

/// `t > b`, with floating-point collisions resolved to `false`.
fn strictly_after(t: &Instant, b: &Instant) -> bool {
    match (t.exact_value(), b.exact_value()) {
        (Some(x), Some(y)) => x > y,
        _ => t.value() > b.value() + BREAKPOINT_TOLERANCE * b.value().abs().max(1.0),
    }
}

impl<R: Real> Signal<R> for PiecewisePolynomial<R> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: &TimePoint) -> Vector<R> {
        self.eval_instant(&t.to_instant())
    }
}
