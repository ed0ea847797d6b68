//! Real scalar abstraction shared by the exact and floating-point paths.
//!
//! Every matrix in this crate holds `Complex<R>` entries where `R: Real`.
//! `BigRational` gives exact arithmetic; `f64` and `f32` give the usual
//! floating-point behaviour.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{FromPrimitive, NumAssign, Signed, ToPrimitive, Zero};

/// Whether a computation runs over exact rationals or floating point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarMode {
    Exact,
    Numeric,
}

/// Real field used for the real and imaginary parts of matrix entries.
pub trait Real: Clone + Debug + PartialEq + NumAssign + Signed + Send + Sync + 'static {
    /// `true` when arithmetic is exact (no round-off).
    const EXACT: bool;

    fn from_ratio(q: &BigRational) -> Self;

    /// Conversion from a float. Exact types keep the exact binary value.
    fn from_f64(x: f64) -> Self;

    fn from_bigint(i: &BigInt) -> Self;

    fn to_f64(&self) -> f64;

    /// The exact rational value, available only for exact types.
    fn to_ratio(&self) -> Option<BigRational>;

    fn mode() -> ScalarMode {
        if Self::EXACT {
            ScalarMode::Exact
        } else {
            ScalarMode::Numeric
        }
    }

    /// Zero test: exact for rationals, `|x| <= 1e-12 * max(1, scale)` for floats.
    fn is_negligible(&self, scale: f64) -> bool {
        if Self::EXACT {
            self.is_zero()
        } else {
            self.to_f64().abs() <= 1e-12 * scale.max(1.0)
        }
    }
}

impl Real for BigRational {
    const EXACT: bool = true;

    fn from_ratio(q: &BigRational) -> Self {
        q.clone()
    }

    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite float")
    }

    fn from_bigint(i: &BigInt) -> Self {
        BigRational::from_integer(i.clone())
    }

    fn to_f64(&self) -> f64 {
        ratio_to_f64(self)
    }

    fn to_ratio(&self) -> Option<BigRational> {
        Some(self.clone())
    }
}

macro_rules! impl_real_float {
    ($f:ty) => {
        impl Real for $f {
            const EXACT: bool = false;

            fn from_ratio(q: &BigRational) -> Self {
                ratio_to_f64(q) as $f
            }

            fn from_f64(x: f64) -> Self {
                x as $f
            }

            fn from_bigint(i: &BigInt) -> Self {
                i.to_f64().unwrap_or(f64::INFINITY) as $f
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }

            fn to_ratio(&self) -> Option<BigRational> {
                None
            }
        }
    };
}

impl_real_float!(f64);
impl_real_float!(f32);

/// Float value of a rational, robust to numerators and denominators beyond `f64` range.
pub fn ratio_to_f64(q: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (q.numer().to_f64(), q.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    let shift = q.numer().bits() as i64 - q.denom().bits() as i64;
    let scaled = if shift > 0 {
        q / BigRational::from_integer(BigInt::from(1) << (shift as usize))
    } else {
        q * BigRational::from_integer(BigInt::from(1) << ((-shift) as usize))
    };
    let mantissa = scaled.numer().to_f64().unwrap_or(0.0) / scaled.denom().to_f64().unwrap_or(1.0);
    mantissa * 2f64.powi(shift as i32)
}

pub fn complex_to_f64<R: Real>(z: &Complex<R>) -> Complex<f64> {
    Complex::new(z.re.to_f64(), z.im.to_f64())
}

pub fn complex_from_f64<R: Real>(z: &Complex<f64>) -> Complex<R> {
    Complex::new(R::from_f64(z.re), R::from_f64(z.im))
}

pub fn complex_to_ratio<R: Real>(z: &Complex<R>) -> Option<Complex<BigRational>> {
    Some(Complex::new(z.re.to_ratio()?, z.im.to_ratio()?))
}

pub fn complex_from_ratio<R: Real>(z: &Complex<BigRational>) -> Complex<R> {
    Complex::new(R::from_ratio(&z.re), R::from_ratio(&z.im))
}

/// Entry magnitude `|re| + |im|` as a float; cheap scale estimate.
pub fn magnitude<R: Real>(z: &Complex<R>) -> f64 {
    z.re.to_f64().abs() + z.im.to_f64().abs()
}

pub fn real<R: Real>(x: R) -> Complex<R> {
    Complex::new(x, R::zero())
}

pub fn from_i64<R: Real>(x: i64) -> Complex<R> {
    real(R::from_bigint(&BigInt::from(x)))
}

/// `p/q` as an exact rational.
pub fn ratio(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

/// Exact rational for a finite decimal string such as `"1.25"` or `"-3e-2"`.
pub fn decimal_to_ratio(text: &str) -> Option<BigRational> {
    let text = text.trim();
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.find('.') {
        Some(pos) => (&digits[..pos], &digits[pos + 1..]),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut numer: BigInt = all_digits.parse().ok()?;
    if negative {
        numer = -numer;
    }
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    Some(if scale >= 0 {
        BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
    })
}

/// Parses `"p/q"` or an integer literal. Decimal literals are rejected.
pub fn parse_ratio(text: &str) -> Option<BigRational> {
    let text = text.trim();
    match text.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().ok()?;
            let q: BigInt = q.trim().parse().ok()?;
            if q.is_zero() {
                None
            } else {
                Some(BigRational::new(p, q))
            }
        }
        None => text.parse::<BigInt>().ok().map(BigRational::from_integer),
    }
}

/// Canonical text of a rational: `"p"` for integers, `"p/q"` otherwise.
pub fn format_ratio(q: &BigRational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// `f64` from a `usize` without lints about lossy casts at every call site.
pub fn usize_f64(n: usize) -> f64 {
    f64::from_usize(n).unwrap_or(f64::MAX)
}
