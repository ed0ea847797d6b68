//! Delay vectors written over a declared rationally independent basis.
//!
//! A delay vector is stored as `Λ = M ℓ` with `M` a nonnegative integer
//! matrix and `ℓ` a positive basis. All class logic runs on the integer
//! coefficients `Mᵀ n`; floating-point values are only used to order times
//! and to compare against user-supplied horizons.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::integer_rank;
use crate::scalar::{format_ratio, ratio_to_f64};

/// Relative tolerance used when a time cannot be compared exactly.
pub const TIME_TOLERANCE: f64 = 1e-9;

/// Tolerance `1e-9 * max(1, |t|)` around a horizon value.
pub fn time_tolerance(horizon: f64) -> f64 {
    TIME_TOLERANCE * horizon.abs().max(1.0)
}

/// One basis element: its float value and, when known, its exact rational value.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisValue {
    numeric: f64,
    exact: Option<BigRational>,
}

impl BasisValue {
    pub fn exact(value: BigRational) -> Self {
        BasisValue { numeric: ratio_to_f64(&value), exact: Some(value) }
    }

    /// An inexact value, typically an irrational number given by its float.
    pub fn numeric(value: f64) -> Self {
        BasisValue { numeric: value, exact: None }
    }

    pub fn value(&self) -> f64 {
        self.numeric
    }

    pub fn exact_value(&self) -> Option<&BigRational> {
        self.exact.as_ref()
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }
}

impl fmt::Display for BasisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.exact {
            Some(q) => write!(f, "{}", format_ratio(q)),
            None => write!(f, "{:?}", self.numeric),
        }
    }
}

/// Positive basis `ℓ` whose rational independence is declared by the caller.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayBasis {
    values: Vec<BasisValue>,
    independence_declared: bool,
}

impl DelayBasis {
    pub fn new(values: Vec<BasisValue>, independence_declared: bool) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("delay basis must have at least one element".into()));
        }
        for (index, v) in values.iter().enumerate() {
            let positive = match &v.exact {
                Some(q) => q > &BigRational::zero(),
                None => v.numeric > 0.0 && v.numeric.is_finite(),
            };
            if !positive {
                return Err(Error::NonPositiveBasis { index });
            }
        }
        Ok(DelayBasis { values, independence_declared })
    }

    /// Single exact basis element.
    pub fn rational(value: BigRational) -> Result<Self> {
        Self::new(vec![BasisValue::exact(value)], true)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[BasisValue] {
        &self.values
    }

    /// A one-element basis is always independent.
    pub fn independence_declared(&self) -> bool {
        self.independence_declared || self.values.len() == 1
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().map(BasisValue::value).fold(f64::INFINITY, f64::min)
    }

    /// Numeric value of an integer combination, summed in basis order.
    pub fn combine_numeric<C: Copy + Into<f64>>(&self, coeffs: &[C]) -> f64 {
        coeffs.iter().zip(&self.values).map(|(&c, v)| c.into() * v.numeric).sum()
    }

    /// Exact value of an integer combination when every used element is exact.
    pub fn combine_exact(&self, coeffs: &[i128]) -> Option<BigRational> {
        let mut total = BigRational::zero();
        for (&c, v) in coeffs.iter().zip(&self.values) {
            if c == 0 {
                continue;
            }
            total += v.exact.as_ref()? * BigRational::from_integer(BigInt::from(c));
        }
        Some(total)
    }
}

/// Multi-index `n ∈ N^N`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint(pub Vec<u64>);

impl LatticePoint {
    pub fn zero(len: usize) -> Self {
        LatticePoint(vec![0; len])
    }

    /// Rejects negative entries.
    pub fn from_signed(entries: &[i64]) -> Result<Self> {
        entries
            .iter()
            .map(|&e| u64::try_from(e).map_err(|_| Error::InvalidArgument(format!("negative lattice entry {e}"))))
            .collect::<Result<Vec<_>>>()
            .map(LatticePoint)
    }

    pub fn l1(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Equivalence-class label `Mᵀ n`; equal keys means equal delay combination.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassKey(pub Vec<u64>);

impl ClassKey {
    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }
}

impl fmt::Display for ClassKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u64::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// A nonnegative integer combination of basis values with its float value.
#[derive(Clone, Debug)]
pub struct TimeStamp {
    coeffs: Vec<u64>,
    numeric: f64,
    exact: Option<BigRational>,
}

impl TimeStamp {
    pub fn new(basis: &DelayBasis, coeffs: Vec<u64>) -> Self {
        let numeric = basis.combine_numeric(&coeffs.iter().map(|&c| c as f64).collect::<Vec<_>>());
        let signed: Vec<i128> = coeffs.iter().map(|&c| c as i128).collect();
        let exact = basis.combine_exact(&signed);
        TimeStamp { coeffs, numeric, exact }
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn value(&self) -> f64 {
        self.numeric
    }

    pub fn exact(&self) -> Option<&BigRational> {
        self.exact.as_ref()
    }

    pub fn key(&self) -> ClassKey {
        ClassKey(self.coeffs.clone())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }

    /// Integer multiple `k · self`.
    pub fn scaled(&self, basis: &DelayBasis, k: u64) -> TimeStamp {
        TimeStamp::new(basis, self.coeffs.iter().map(|&c| c * k).collect())
    }

    pub fn plus(&self, basis: &DelayBasis, other: &TimeStamp) -> TimeStamp {
        TimeStamp::new(basis, self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect())
    }

    /// Text form such as `4 = 4` or `1+1·ℓ2 ≈ 2.414`.
    pub fn describe(&self) -> String {
        match &self.exact {
            Some(q) => format!("{} = {}", self.numeric, format_ratio(q)),
            None => format!("{:?} ≈ {}", self.coeffs, self.numeric),
        }
    }
}

impl PartialEq for TimeStamp {
    fn eq(&self, other: &Self) -> bool {
        self.coeffs == other.coeffs
    }
}

impl Eq for TimeStamp {}

impl PartialOrd for TimeStamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TimeStamp {
    /// Numeric order (exact when both sides are exact), ties broken by coefficients.
    fn cmp(&self, other: &Self) -> Ordering {
        if self.coeffs == other.coeffs {
            return Ordering::Equal;
        }
        let by_value = match (&self.exact, &other.exact) {
            (Some(a), Some(b)) => a.cmp(b),
            _ => self.numeric.total_cmp(&other.numeric),
        };
        by_value.then_with(|| self.coeffs.cmp(&other.coeffs))
    }
}

/// A real time value, exact when the caller supplied it as a rational.
#[derive(Clone, Debug, PartialEq)]
pub struct Instant {
    value: f64,
    exact: Option<BigRational>,
}

impl Instant {
    pub fn exact(value: BigRational) -> Self {
        Instant { value: ratio_to_f64(&value), exact: Some(value) }
    }

    pub fn numeric(value: f64) -> Self {
        Instant { value, exact: None }
    }

    pub fn zero() -> Self {
        Instant::exact(BigRational::zero())
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn exact_value(&self) -> Option<&BigRational> {
        self.exact.as_ref()
    }

    pub fn plus(&self, other: &Instant) -> Instant {
        match (&self.exact, &other.exact) {
            (Some(a), Some(b)) => Instant::exact(a + b),
            _ => Instant::numeric(self.value + other.value),
        }
    }

    pub fn minus(&self, other: &Instant) -> Instant {
        match (&self.exact, &other.exact) {
            (Some(a), Some(b)) => Instant::exact(a - b),
            _ => Instant::numeric(self.value - other.value),
        }
    }

    pub fn scale(&self, factor: &Instant) -> Instant {
        match (&self.exact, &factor.exact) {
            (Some(a), Some(b)) => Instant::exact(a * b),
            _ => Instant::numeric(self.value * factor.value),
        }
    }

    pub fn from_stamp(stamp: &TimeStamp) -> Instant {
        Instant { value: stamp.numeric, exact: stamp.exact.clone() }
    }

    pub fn is_negative(&self) -> bool {
        match &self.exact {
            Some(q) => q < &BigRational::zero(),
            None => self.value < 0.0,
        }
    }
}

impl From<f64> for Instant {
    fn from(value: f64) -> Self {
        Instant::numeric(value)
    }
}

/// Upper limit for class times: a real value or an exact lattice combination.
#[derive(Clone, Debug, PartialEq)]
pub enum Horizon {
    Real(Instant),
    Stamp(TimeStamp),
}

impl Horizon {
    pub fn value(&self) -> f64 {
        match self {
            Horizon::Real(i) => i.value,
            Horizon::Stamp(s) => s.numeric,
        }
    }

    pub fn exact_value(&self) -> Option<&BigRational> {
        match self {
            Horizon::Real(i) => i.exact.as_ref(),
            Horizon::Stamp(s) => s.exact.as_ref(),
        }
    }

    pub fn to_instant(&self) -> Instant {
        match self {
            Horizon::Real(i) => i.clone(),
            Horizon::Stamp(s) => Instant::from_stamp(s),
        }
    }

    /// `self + stamp`, staying on the lattice when possible.
    pub fn plus_stamp(&self, basis: &DelayBasis, stamp: &TimeStamp) -> Horizon {
        match self {
            Horizon::Stamp(s) => Horizon::Stamp(s.plus(basis, stamp)),
            Horizon::Real(i) => Horizon::Real(i.plus(&Instant::from_stamp(stamp))),
        }
    }
}

impl From<f64> for Horizon {
    fn from(value: f64) -> Self {
        Horizon::Real(Instant::numeric(value))
    }
}

impl From<Instant> for Horizon {
    fn from(value: Instant) -> Self {
        Horizon::Real(value)
    }
}

impl From<TimeStamp> for Horizon {
    fn from(value: TimeStamp) -> Self {
        Horizon::Stamp(value)
    }
}

/// Position of a class time relative to a horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    Below,
    Equal,
    Above,
    /// Within the time tolerance of the horizon without an exact decision.
    Ambiguous,
}

impl Placement {
    pub fn within(self, strict: bool) -> bool {
        match self {
            Placement::Below | Placement::Ambiguous => true,
            Placement::Equal => !strict,
            Placement::Above => false,
        }
    }
}

/// Places `time` against `horizon`: exactly when both are exact or share
/// coefficients, with the tolerance band otherwise.
pub fn place(time: &TimeStamp, horizon: &Horizon) -> Placement {
    if let Horizon::Stamp(h) = horizon {
        if h.coeffs == time.coeffs {
            return Placement::Equal;
        }
    }
    if let (Some(t), Some(h)) = (time.exact.as_ref(), horizon.exact_value()) {
        return match t.cmp(h) {
            Ordering::Less => Placement::Below,
            Ordering::Equal => Placement::Equal,
            Ordering::Greater => Placement::Above,
        };
    }
    let h = horizon.value();
    let diff = time.numeric - h;
    if diff.abs() <= time_tolerance(h) {
        Placement::Ambiguous
    } else if diff < 0.0 {
        Placement::Below
    } else {
        Placement::Above
    }
}

/// One equivalence class found by enumeration.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassInfo {
    pub key: ClassKey,
    pub representative: LatticePoint,
    pub time: TimeStamp,
    /// Time within tolerance of the horizon; membership undecided.
    pub ambiguous: bool,
}

/// Delay vector `Λ = M ℓ`.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayVector {
    basis: DelayBasis,
    matrix: Vec<Vec<u64>>,
}

impl DelayVector {
    /// Validates `M`, merges exact basis elements into one rational element
    /// and checks that `M` has full column rank.
    pub fn new(basis: DelayBasis, matrix: Vec<Vec<u64>>) -> Result<Self> {
        let h = basis.len();
        if matrix.is_empty() {
            return Err(Error::InvalidArgument("delay matrix needs at least one row".into()));
        }
        for (row, entries) in matrix.iter().enumerate() {
            if entries.len() != h {
                return Err(Error::DimensionMismatch(format!(
                    "row {row} of M has {} entries, basis has {h}",
                    entries.len()
                )));
            }
            if entries.iter().all(|&e| e == 0) {
                return Err(Error::ZeroDelay { row });
            }
        }
        let (basis, matrix) = merge_exact_elements(basis, matrix);
        let signed: Vec<Vec<i64>> = matrix
            .iter()
            .map(|r| r.iter().map(|&e| i64::try_from(e).unwrap_or(i64::MAX)).collect())
            .collect();
        let rank = integer_rank(&signed);
        if rank < basis.len() {
            return Err(Error::RankDeficientBasis { rank, basis: basis.len() });
        }
        if !basis.independence_declared() {
            return Err(Error::IndependenceNotDeclared);
        }
        Ok(DelayVector { basis, matrix })
    }

    /// Accepts rational coefficients and clears denominators column by
    /// column by rescaling the basis element.
    pub fn from_rational_matrix(basis: DelayBasis, matrix: Vec<Vec<BigRational>>) -> Result<Self> {
        let h = basis.len();
        let mut values = basis.values.clone();
        let mut integer = vec![vec![0u64; h]; matrix.len()];
        for k in 0..h {
            let mut lcm = BigInt::one();
            for row in &matrix {
                let entry = row.get(k).ok_or_else(|| Error::DimensionMismatch("ragged delay matrix".into()))?;
                if entry < &BigRational::zero() {
                    return Err(Error::InvalidArgument("delay matrix entries must be nonnegative".into()));
                }
                lcm = lcm.lcm(entry.denom());
            }
            for (j, row) in matrix.iter().enumerate() {
                let scaled = (&row[k] * BigRational::from_integer(lcm.clone())).to_integer();
                integer[j][k] = scaled
                    .to_u64()
                    .ok_or_else(|| Error::InvalidArgument("delay coefficient too large".into()))?;
            }
            if !lcm.is_one() {
                let factor = BigRational::from_integer(lcm.clone());
                values[k] = match &values[k].exact {
                    Some(q) => BasisValue::exact(q / &factor),
                    None => BasisValue::numeric(values[k].numeric / ratio_to_f64(&factor)),
                };
            }
        }
        Self::new(DelayBasis::new(values, basis.independence_declared)?, integer)
    }

    /// Commensurable delays `λ k` with an exact step `λ`.
    pub fn commensurable(step: BigRational, multiples: &[u64]) -> Result<Self> {
        Self::new(DelayBasis::rational(step)?, multiples.iter().map(|&k| vec![k]).collect())
    }

    pub fn basis(&self) -> &DelayBasis {
        &self.basis
    }

    pub fn matrix(&self) -> &[Vec<u64>] {
        &self.matrix
    }

    /// Number of delays `N`.
    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    /// Basis size `h`.
    pub fn basis_len(&self) -> usize {
        self.basis.len()
    }

    /// `h = 1`: all delays are integer multiples of one step.
    pub fn is_commensurable(&self) -> bool {
        self.basis.len() == 1
    }

    /// Single exact step: every time comparison is exact.
    pub fn is_exact_commensurable(&self) -> bool {
        self.is_commensurable() && self.basis.values[0].is_exact()
    }

    pub fn delay_stamp(&self, j: usize) -> TimeStamp {
        TimeStamp::new(&self.basis, self.matrix[j].clone())
    }

    pub fn delays(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.delay_stamp(j).numeric).collect()
    }

    pub fn delay(&self, j: usize) -> Instant {
        Instant::from_stamp(&self.delay_stamp(j))
    }

    pub fn min_delay(&self) -> f64 {
        self.delays().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Index and stamp of the largest delay.
    pub fn max_delay(&self) -> (usize, TimeStamp) {
        (0..self.len())
            .map(|j| (j, self.delay_stamp(j)))
            .max_by(|a, b| a.1.cmp(&b.1))
            .expect("nonempty delay vector")
    }

    pub fn stamp(&self, coeffs: Vec<u64>) -> TimeStamp {
        TimeStamp::new(&self.basis, coeffs)
    }

    /// `Mᵀ n`.
    pub fn class_key(&self, n: &LatticePoint) -> ClassKey {
        let mut key = vec![0u64; self.basis.len()];
        for (row, &count) in self.matrix.iter().zip(&n.0) {
            for (k, &m) in row.iter().enumerate() {
                key[k] += m * count;
            }
        }
        ClassKey(key)
    }

    /// `Λ · n` as a time stamp.
    pub fn time_of(&self, n: &LatticePoint) -> TimeStamp {
        self.stamp(self.class_key(n).0)
    }

    /// Lattice points with time within the horizon (`<` when `strict`),
    /// depth-first over `n_1`, then `n_2`, ... Each point carries its
    /// class key and whether its placement is ambiguous.
    pub fn enumerate_points(&self, horizon: &Horizon, strict: bool) -> Vec<(LatticePoint, ClassKey, bool)> {
        let mut out = Vec::new();
        let mut point = vec![0u64; self.len()];
        let key = vec![0u64; self.basis.len()];
        self.points_dfs(0, &mut point, key, horizon, strict, &mut out);
        out
    }

    fn points_dfs(
        &self,
        index: usize,
        point: &mut Vec<u64>,
        key: Vec<u64>,
        horizon: &Horizon,
        strict: bool,
        out: &mut Vec<(LatticePoint, ClassKey, bool)>,
    ) {
        let placement = place(&self.stamp(key.clone()), horizon);
        if !placement.within(strict) {
            return;
        }
        if index == self.len() {
            out.push((LatticePoint(point.clone()), ClassKey(key), placement == Placement::Ambiguous));
            return;
        }
        let mut key = key;
        loop {
            self.points_dfs(index + 1, point, key.clone(), horizon, strict, out);
            for (k, &m) in self.matrix[index].iter().enumerate() {
                key[k] += m;
            }
            if !place(&self.stamp(key.clone()), horizon).within(strict) {
                break;
            }
            point[index] += 1;
        }
        point[index] = 0;
    }

    /// Every class with time within the horizon exactly once, sorted by
    /// (time, key). The search runs over class keys, so each class is
    /// visited once whatever its number of members. Classes within
    /// tolerance of the horizon are flagged.
    pub fn enumerate_classes(&self, horizon: &Horizon, strict: bool) -> Vec<ClassInfo> {
        let zero = vec![0u64; self.basis.len()];
        let start = self.stamp(zero.clone());
        let placement = place(&start, horizon);
        if !placement.within(strict) {
            return Vec::new();
        }
        let mut seen: HashMap<Vec<u64>, bool> = HashMap::new();
        seen.insert(zero.clone(), true);
        let mut classes = vec![ClassInfo {
            key: ClassKey(zero),
            representative: LatticePoint::zero(self.len()),
            time: start,
            ambiguous: placement == Placement::Ambiguous,
        }];
        let mut next = 0;
        while next < classes.len() {
            let (key, point) = (classes[next].key.0.clone(), classes[next].representative.0.clone());
            next += 1;
            for (j, row) in self.matrix.iter().enumerate() {
                let child: Vec<u64> = key.iter().zip(row).map(|(a, b)| a + b).collect();
                if seen.contains_key(&child) {
                    continue;
                }
                let time = self.stamp(child.clone());
                let placement = place(&time, horizon);
                let inside = placement.within(strict);
                seen.insert(child.clone(), inside);
                if inside {
                    let mut representative = point.clone();
                    representative[j] += 1;
                    classes.push(ClassInfo {
                        key: ClassKey(child),
                        representative: LatticePoint(representative),
                        time,
                        ambiguous: placement == Placement::Ambiguous,
                    });
                }
            }
        }
        classes.sort_by(|a, b| a.time.cmp(&b.time));
        classes
    }

    /// All lattice points of the class with the given key (`Mᵀ n = key`).
    pub fn class_members(&self, key: &ClassKey) -> Vec<LatticePoint> {
        let mut out = Vec::new();
        let mut point = vec![0u64; self.len()];
        let remaining = key.0.clone();
        self.members_dfs(0, &mut point, remaining, &mut out);
        out
    }

    fn members_dfs(&self, index: usize, point: &mut Vec<u64>, remaining: Vec<u64>, out: &mut Vec<LatticePoint>) {
        if index == self.len() {
            if remaining.iter().all(|&r| r == 0) {
                out.push(LatticePoint(point.clone()));
            }
            return;
        }
        let row = &self.matrix[index];
        let mut remaining = remaining;
        loop {
            self.members_dfs(index + 1, point, remaining.clone(), out);
            let fits = row.iter().zip(&remaining).all(|(&m, &r)| m <= r);
            if !fits {
                break;
            }
            for (r, &m) in remaining.iter_mut().zip(row) {
                *r -= m;
            }
            point[index] += 1;
        }
        point[index] = 0;
    }

    /// `Λ ≼ L`: every integer relation of `Λ` is a relation of `L`. Decided
    /// by `rank [M_Λ | M_L] = rank M_Λ` over the rationals.
    pub fn preorder_leq(&self, other: &DelayVector) -> Result<bool> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(format!(
                "delay vectors have {} and {} components",
                self.len(),
                other.len()
            )));
        }
        let to_i64 = |e: u64| i64::try_from(e).unwrap_or(i64::MAX);
        let own: Vec<Vec<i64>> = self.matrix.iter().map(|r| r.iter().map(|&e| to_i64(e)).collect()).collect();
        let joined: Vec<Vec<i64>> = self
            .matrix
            .iter()
            .zip(&other.matrix)
            .map(|(a, b)| a.iter().chain(b).map(|&e| to_i64(e)).collect())
            .collect();
        Ok(integer_rank(&joined) == integer_rank(&own))
    }

    /// `Λ ≈ L`.
    pub fn equivalent(&self, other: &DelayVector) -> Result<bool> {
        Ok(self.preorder_leq(other)? && other.preorder_leq(self)?)
    }

    /// `L⁽ⁿ⁾ = (1/n) M ⌊n ℓ⌋`: commensurable, below `Λ` componentwise and `≽ Λ`.
    pub fn commensurable_approx(&self, n: u64) -> Result<DelayVector> {
        if n == 0 {
            return Err(Error::ApproxNotPositive { n });
        }
        let floors: Vec<u64> = self
            .basis
            .values
            .iter()
            .map(|v| match &v.exact {
                Some(q) => (q * BigRational::from_integer(BigInt::from(n))).floor().to_integer().to_u64().unwrap_or(0),
                None => (n as f64 * v.numeric).floor() as u64,
            })
            .collect();
        if floors.contains(&0) {
            return Err(Error::ApproxNotPositive { n });
        }
        let matrix = self
            .matrix
            .iter()
            .map(|row| vec![row.iter().zip(&floors).map(|(m, f)| m * f).sum()])
            .collect();
        DelayVector::new(DelayBasis::rational(BigRational::new(BigInt::one(), BigInt::from(n)))?, matrix)
    }

    /// Smallest `L⁽ⁿ⁾` with `1 ≤ Λ_j / L_j < 1 + ε` that keeps the equality
    /// pattern of all classes up to `T` among points up to `(1 + ε) T`.
    pub fn commensurable_surrogate(&self, horizon: &Instant, epsilon: f64, max_steps: u64) -> Result<DelayVector> {
        if epsilon <= 0.0 || !epsilon.is_finite() {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        if horizon.is_negative() {
            return Err(Error::InvalidArgument("horizon must be nonnegative".into()));
        }
        if self.is_exact_commensurable() {
            return Ok(self.clone());
        }
        let start = (1.0 / self.basis.min_value()).ceil().max(1.0) as u64;
        let within_t = Horizon::Real(horizon.clone());
        let widened = Horizon::Real(horizon.scale(&Instant::numeric(1.0 + epsilon)));
        let family = self.enumerate_classes(&widened, false);
        let delays = self.delays();
        for n in start..start.saturating_add(max_steps) {
            let candidate = match self.commensurable_approx(n) {
                Ok(c) => c,
                Err(Error::ApproxNotPositive { .. }) => continue,
                Err(e) => return Err(e),
            };
            let close = candidate
                .delays()
                .iter()
                .zip(&delays)
                .all(|(l, lambda)| *l <= *lambda * (1.0 + 1e-15) && lambda / l < 1.0 + epsilon);
            if !close {
                continue;
            }
            if self.pattern_preserved(&candidate, &family, &within_t) {
                return Ok(candidate);
            }
        }
        Err(Error::SurrogateSearchExceeded { cap: max_steps })
    }

    /// Distinct classes up to `T` stay distinct under `candidate` within `family`.
    fn pattern_preserved(&self, candidate: &DelayVector, family: &[ClassInfo], within_t: &Horizon) -> bool {
        let mut counts: HashMap<ClassKey, usize> = HashMap::new();
        let images: Vec<ClassKey> =
            family.iter().map(|c| candidate.class_key(&c.representative)).collect();
        for image in &images {
            *counts.entry(image.clone()).or_default() += 1;
        }
        family
            .iter()
            .zip(&images)
            .filter(|(c, _)| place(&c.time, within_t).within(false))
            .all(|(_, image)| counts[image] == 1)
    }

    /// Gap radius: the smaller of the minimum spacing between distinct
    /// class times up to `T` and the first overshoot beyond `T`.
    pub fn epsilon0(&self, horizon: &Horizon) -> f64 {
        let (_, max) = self.max_delay();
        let extended = horizon.plus_stamp(&self.basis, &max);
        let classes = self.enumerate_classes(&extended, false);
        let t = horizon.to_instant();
        let mut inside: Vec<&TimeStamp> = Vec::new();
        let mut overshoot = f64::INFINITY;
        for class in &classes {
            if place(&class.time, horizon).within(false) {
                inside.push(&class.time);
            } else {
                overshoot = overshoot.min(difference(&Instant::from_stamp(&class.time), &t));
            }
        }
        let gap = inside
            .windows(2)
            .map(|w| difference(&Instant::from_stamp(w[1]), &Instant::from_stamp(w[0])))
            .fold(f64::INFINITY, f64::min);
        gap.min(overshoot)
    }
}

fn difference(a: &Instant, b: &Instant) -> f64 {
    match (&a.exact, &b.exact) {
        (Some(x), Some(y)) => ratio_to_f64(&(x - y)),
        _ => a.value - b.value,
    }
}

/// Collapses all exact basis elements into their rational gcd.
fn merge_exact_elements(basis: DelayBasis, matrix: Vec<Vec<u64>>) -> (DelayBasis, Vec<Vec<u64>>) {
    let exact: Vec<usize> = (0..basis.len()).filter(|&k| basis.values[k].is_exact()).collect();
    if exact.len() < 2 {
        return (basis, matrix);
    }
    let mut numer_gcd = BigInt::zero();
    let mut denom_lcm = BigInt::one();
    for &k in &exact {
        let q = basis.values[k].exact.as_ref().expect("exact element");
        numer_gcd = numer_gcd.gcd(q.numer());
        denom_lcm = denom_lcm.lcm(q.denom());
    }
    let step = BigRational::new(numer_gcd, denom_lcm);
    let multiples: Vec<u64> = exact
        .iter()
        .map(|&k| {
            (basis.values[k].exact.as_ref().expect("exact element") / &step)
                .to_integer()
                .to_u64()
                .expect("basis multiple fits u64")
        })
        .collect();
    let first = exact[0];
    let mut values = Vec::new();
    for k in 0..basis.len() {
        if k == first {
            values.push(BasisValue::exact(step.clone()));
        } else if !exact.contains(&k) {
            values.push(basis.values[k].clone());
        }
    }
    let matrix = matrix
        .into_iter()
        .map(|row| {
            let merged: u64 = exact.iter().zip(&multiples).map(|(&k, &a)| row[k] * a).sum();
            let mut out = Vec::new();
            for (k, &entry) in row.iter().enumerate() {
                if k == first {
                    out.push(merged);
                } else if !exact.contains(&k) {
                    out.push(entry);
                }
            }
            out
        })
        .collect();
    (DelayBasis { values, independence_declared: basis.independence_declared }, matrix)
}
