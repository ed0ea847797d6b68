//! Coefficient matrices `Ξ_n` and their class sums `Ξ̂_[n]`.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde_json::{json, Value};

use crate::delay::{place, ClassInfo, ClassKey, DelayVector, Horizon, LatticePoint, Placement};
use crate::error::{Error, Result};
use crate::linalg::{identity, is_zero_matrix, matrix_power, norm_inf, zeros, Matrix};
use crate::scalar::{Real, ScalarMode};

/// The matrices of `x(t) = Σ A_j x(t - Λ_j) + B u(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct System<R: Real> {
    a: Vec<Matrix<R>>,
    b: Matrix<R>,
}

impl<R: Real> System<R> {
    pub fn new(a: Vec<Matrix<R>>, b: Matrix<R>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidArgument("at least one delay matrix is required".into()));
        }
        let d = a[0].nrows();
        if d == 0 {
            return Err(Error::InvalidArgument("state dimension must be positive".into()));
        }
        for (j, aj) in a.iter().enumerate() {
            if aj.nrows() != d || aj.ncols() != d {
                return Err(Error::DimensionMismatch(format!(
                    "A_{} is {}x{}, expected {d}x{d}",
                    j + 1,
                    aj.nrows(),
                    aj.ncols()
                )));
            }
        }
        if b.nrows() != d {
            return Err(Error::DimensionMismatch(format!("B has {} rows, expected {d}", b.nrows())));
        }
        if b.ncols() == 0 {
            return Err(Error::InvalidArgument("B needs at least one column".into()));
        }
        Ok(System { a, b })
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn delays(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &[Matrix<R>] {
        &self.a
    }

    pub fn b(&self) -> &Matrix<R> {
        &self.b
    }

    pub fn mode(&self) -> ScalarMode {
        R::mode()
    }

    /// Magnitude scale used by numeric zero tests.
    pub fn scale(&self) -> f64 {
        self.a.iter().map(norm_inf).fold(1.0, f64::max)
    }

    pub fn check_delays(&self, lambda: &DelayVector) -> Result<()> {
        if lambda.len() != self.a.len() {
            return Err(Error::DimensionMismatch(format!(
                "system has {} delay matrices, delay vector has {} entries",
                self.a.len(),
                lambda.len()
            )));
        }
        Ok(())
    }

    pub fn map<S: Real>(&self, f: impl Fn(&Matrix<R>) -> Matrix<S>) -> System<S> {
        System { a: self.a.iter().map(&f).collect(), b: f(&self.b) }
    }
}

/// Memoized `Ξ_n`, filled on demand.
#[derive(Clone, Debug)]
pub struct XiTable<R: Real> {
    a: Vec<Matrix<R>>,
    memo: HashMap<Vec<u64>, Matrix<R>>,
}

impl<R: Real> XiTable<R> {
    pub fn new(system: &System<R>) -> Self {
        let d = system.dim();
        let mut memo = HashMap::new();
        memo.insert(vec![0; system.delays()], identity(d));
        XiTable { a: system.a.clone(), memo }
    }

    pub fn dim(&self) -> usize {
        self.a[0].nrows()
    }

    /// `Ξ_n`; zero when an entry is negative.
    pub fn xi(&mut self, n: &[i64]) -> Matrix<R> {
        if n.len() != self.a.len() {
            panic!("lattice point has {} entries, system has {} delays", n.len(), self.a.len());
        }
        if n.iter().any(|&e| e < 0) {
            return zeros(self.dim(), self.dim());
        }
        let point: Vec<u64> = n.iter().map(|&e| e as u64).collect();
        self.xi_point(&point).clone()
    }

    pub fn xi_at(&mut self, n: &LatticePoint) -> &Matrix<R> {
        self.xi_point(&n.0)
    }

    fn xi_point(&mut self, n: &[u64]) -> &Matrix<R> {
        if !self.memo.contains_key(n) {
            self.fill(n.to_vec());
        }
        &self.memo[n]
    }

    /// Resolves predecessors first with an explicit stack.
    fn fill(&mut self, target: Vec<u64>) {
        let mut stack = vec![target];
        while let Some(top) = stack.last().cloned() {
            if self.memo.contains_key(&top) {
                stack.pop();
                continue;
            }
            let missing: Vec<Vec<u64>> = (0..top.len())
                .filter(|&k| top[k] > 0)
                .map(|k| {
                    let mut p = top.clone();
                    p[k] -= 1;
                    p
                })
                .filter(|p| !self.memo.contains_key(p))
                .collect();
            if !missing.is_empty() {
                stack.extend(missing);
                continue;
            }
            let d = self.dim();
            let mut total = zeros(d, d);
            for k in 0..top.len() {
                if top[k] == 0 {
                    continue;
                }
                let mut p = top.clone();
                p[k] -= 1;
                total += &self.a[k] * &self.memo[&p];
            }
            stack.pop();
            self.memo.insert(top, total);
        }
    }

    pub fn len(&self) -> usize {
        self.memo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memo.is_empty()
    }
}

/// Memoized class sums `Ξ̂_c` keyed by class key, using
/// `Ξ̂_c = Σ_j A_j Ξ̂_{c - M_j}` with `Ξ̂_0 = I` and zero for keys with a
/// negative entry. Keys that no lattice point reaches come out as zero.
#[derive(Clone, Debug)]
pub struct ClassSums<R: Real> {
    a: Vec<Matrix<R>>,
    rows: Vec<Vec<u64>>,
    memo: HashMap<Vec<u64>, Matrix<R>>,
}

impl<R: Real> ClassSums<R> {
    pub fn new(system: &System<R>, lambda: &DelayVector) -> Result<Self> {
        system.check_delays(lambda)?;
        let mut memo = HashMap::new();
        memo.insert(vec![0; lambda.basis_len()], identity(system.dim()));
        Ok(ClassSums { a: system.a.clone(), rows: lambda.matrix().to_vec(), memo })
    }

    fn predecessor(&self, key: &[u64], j: usize) -> Option<Vec<u64>> {
        key.iter().zip(&self.rows[j]).map(|(c, m)| c.checked_sub(*m)).collect()
    }

    pub fn get(&mut self, key: &ClassKey) -> &Matrix<R> {
        if !self.memo.contains_key(&key.0) {
            self.fill(key.0.clone());
        }
        &self.memo[&key.0]
    }

    fn fill(&mut self, target: Vec<u64>) {
        let mut stack = vec![target];
        while let Some(top) = stack.last().cloned() {
            if self.memo.contains_key(&top) {
                stack.pop();
                continue;
            }
            let preds: Vec<(usize, Vec<u64>)> =
                (0..self.rows.len()).filter_map(|j| self.predecessor(&top, j).map(|p| (j, p))).collect();
            let missing: Vec<Vec<u64>> =
                preds.iter().filter(|(_, p)| !self.memo.contains_key(p)).map(|(_, p)| p.clone()).collect();
            if !missing.is_empty() {
                stack.extend(missing);
                continue;
            }
            let d = self.a[0].nrows();
            let mut total = zeros(d, d);
            for (j, p) in &preds {
                total += &self.a[*j] * &self.memo[p];
            }
            stack.pop();
            self.memo.insert(top, total);
        }
    }
}

/// `Ξ̂_[n]` for every class with time within a horizon.
#[derive(Clone, Debug)]
pub struct XiHatTable<R: Real> {
    entries: Vec<(ClassInfo, Matrix<R>)>,
    index: HashMap<ClassKey, usize>,
}

impl<R: Real> XiHatTable<R> {
    pub fn build(system: &System<R>, lambda: &DelayVector, horizon: &Horizon, strict: bool) -> Result<Self> {
        let mut sums = ClassSums::new(system, lambda)?;
        Self::build_with(system, &mut sums, lambda, horizon, strict)
    }

    /// Reuses an existing class-sum cache built for the same delays.
    pub fn build_with(
        system: &System<R>,
        sums: &mut ClassSums<R>,
        lambda: &DelayVector,
        horizon: &Horizon,
        strict: bool,
    ) -> Result<Self> {
        system.check_delays(lambda)?;
        let d = system.dim();
        let scale = system.scale();
        let classes = lambda.enumerate_classes(horizon, strict);
        let mut entries = Vec::with_capacity(classes.len());
        let mut index = HashMap::new();
        for class in classes {
            let mut total = sums.get(&class.key).clone();
            if !R::EXACT && is_zero_matrix(&total, scale) {
                total = zeros(d, d);
            }
            index.insert(class.key.clone(), entries.len());
            entries.push((class, total));
        }
        Ok(XiHatTable { entries, index })
    }

    /// Classes in time order with their class sums.
    pub fn entries(&self) -> &[(ClassInfo, Matrix<R>)] {
        &self.entries
    }

    pub fn get(&self, key: &ClassKey) -> Option<&Matrix<R>> {
        self.index.get(key).map(|&i| &self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Debug export: class key, time and matrix entries as strings.
    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .entries
            .iter()
            .map(|(class, m)| {
                json!({
                    "key": class.key.0,
                    "time": class.time.value(),
                    "exact_time": class.time.exact().map(crate::scalar::format_ratio),
                    "matrix": crate::io::matrix_to_json(m),
                })
            })
            .collect();
        Value::Array(rows)
    }
}

/// `Ξ̂_[key]`: the sum of `Ξ_n` over the class members.
pub fn xi_hat<R: Real>(system: &System<R>, lambda: &DelayVector, key: &ClassKey, horizon: &Horizon) -> Result<Matrix<R>> {
    system.check_delays(lambda)?;
    if key.0.len() != lambda.basis_len() {
        return Err(Error::DimensionMismatch(format!(
            "class key has {} entries, basis has {}",
            key.0.len(),
            lambda.basis_len()
        )));
    }
    let time = lambda.stamp(key.0.clone());
    if place(&time, horizon) == Placement::Above {
        return Err(Error::ClassBeyondHorizon { time: time.value(), horizon: horizon.value() });
    }
    let mut xi = XiTable::new(system);
    let d = system.dim();
    let mut total = zeros(d, d);
    for member in lambda.class_members(key) {
        total += xi.xi_at(&member);
    }
    Ok(total)
}

/// Closed form of `Ξ̂_[n]` for `x(t) = x(t-1) + A x(t-k) + B u(t)`:
/// `Σ_j C(n1 + k n2 - j(k-1), j) A^j` over `0 <= j <= (n1 + k n2) / k`.
pub fn diblik_xi_hat<R: Real>(a: &Matrix<R>, k: u64, n: &LatticePoint) -> Matrix<R> {
    assert!(k >= 1, "delay multiple must be positive");
    assert_eq!(n.len(), 2, "two-delay form");
    let t = n.0[0] + k * n.0[1];
    let d = a.nrows();
    let mut total = zeros(d, d);
    let mut power = identity(d);
    for j in 0..=t / k {
        let top = t - j * (k - 1);
        let c = binomial(top, j);
        if !c.is_zero() {
            let factor = crate::scalar::real(R::from_bigint(&c));
            total += power.map(|z| z * factor.clone());
        }
        power = a * &power;
    }
    total
}

/// `C(n, k)` with arbitrary precision.
pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut out = BigInt::one();
    for i in 0..k {
        out = out * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    out
}

/// `Ξ̂_[n] B` for one class.
#[derive(Clone, Debug)]
pub struct GeneratorBlock<R: Real> {
    pub class: ClassInfo,
    pub block: Matrix<R>,
}

/// One block `Ξ̂_[n] B` per class with time within the horizon, in time order.
/// Blocks whose class time is within tolerance of the horizon carry the
/// `ambiguous` flag of their class.
pub fn controllability_generators<R: Real>(
    system: &System<R>,
    lambda: &DelayVector,
    horizon: &Horizon,
    strict: bool,
) -> Result<Vec<GeneratorBlock<R>>> {
    let table = XiHatTable::build(system, lambda, horizon, strict)?;
    Ok(table
        .entries
        .into_iter()
        .map(|(class, xi_hat)| GeneratorBlock { block: &xi_hat * system.b(), class })
        .collect())
}

/// `A^n`, the single-delay coefficient.
pub fn single_delay_xi<R: Real>(a: &Matrix<R>, n: usize) -> Matrix<R> {
    matrix_power(a, n)
}
