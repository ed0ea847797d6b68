//! Dense complex matrices and the two rank routes: exact fraction
//! elimination and singular-value thresholding.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::scalar::{complex_from_f64, complex_from_ratio, complex_to_f64, complex_to_ratio, magnitude, Real};

pub type Matrix<R> = DMatrix<Complex<R>>;
pub type Vector<R> = DVector<Complex<R>>;

pub fn identity<R: Real>(d: usize) -> Matrix<R> {
    Matrix::from_fn(d, d, |i, j| if i == j { Complex::one() } else { Complex::zero() })
}

pub fn zeros<R: Real>(rows: usize, cols: usize) -> Matrix<R> {
    Matrix::from_element(rows, cols, Complex::zero())
}

pub fn zero_vector<R: Real>(len: usize) -> Vector<R> {
    Vector::from_element(len, Complex::zero())
}

/// Matrix from real integer entries, row-major.
pub fn from_integers<R: Real>(rows: &[&[i64]]) -> Matrix<R> {
    let cols = rows.first().map_or(0, |r| r.len());
    Matrix::from_fn(rows.len(), cols, |i, j| crate::scalar::from_i64(rows[i][j]))
}

pub fn to_numeric<R: Real>(m: &Matrix<R>) -> DMatrix<Complex<f64>> {
    m.map(|z| complex_to_f64(&z))
}

pub fn from_numeric<R: Real>(m: &DMatrix<Complex<f64>>) -> Matrix<R> {
    m.map(|z| complex_from_f64(&z))
}

pub fn to_exact<R: Real>(m: &Matrix<R>) -> Option<Matrix<BigRational>> {
    let entries: Option<Vec<_>> = m.iter().map(complex_to_ratio).collect();
    Some(Matrix::from_vec(m.nrows(), m.ncols(), entries?))
}

pub fn from_exact<R: Real>(m: &Matrix<BigRational>) -> Matrix<R> {
    m.map(|z| complex_from_ratio(&z))
}

/// Horizontal concatenation of blocks sharing a row count.
pub fn hstack<R: Real>(rows: usize, blocks: &[&Matrix<R>]) -> Matrix<R> {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let mut at = 0;
    for block in blocks {
        out.view_mut((0, at), (rows, block.ncols())).copy_from(block);
        at += block.ncols();
    }
    out
}

/// Infinity-norm style scale: largest absolute row sum of `|re| + |im|`.
pub fn norm_inf<R: Real>(m: &Matrix<R>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(magnitude).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Zero test; exact for rationals, entrywise `1e-12 * max(1, scale)` for floats.
pub fn is_zero_matrix<R: Real>(m: &Matrix<R>, scale: f64) -> bool {
    m.iter().all(|z| z.re.is_negligible(scale) && z.im.is_negligible(scale))
}

pub fn matrix_power<R: Real>(a: &Matrix<R>, power: usize) -> Matrix<R> {
    let mut out = identity(a.nrows());
    for _ in 0..power {
        out = a * &out;
    }
    out
}

fn numerator_size(z: &Complex<BigRational>) -> u64 {
    z.re.numer().bits() + z.im.numer().bits()
}

/// Row echelon form over the complex rationals. Returns the pivot columns,
/// in increasing order; their count is the rank.
pub fn exact_pivot_columns(m: &Matrix<BigRational>) -> Vec<usize> {
    let mut work = m.clone();
    let (rows, cols) = work.shape();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        if row == rows {
            break;
        }
        let pivot = (row..rows)
            .filter(|&r| !work[(r, col)].is_zero())
            .max_by_key(|&r| numerator_size(&work[(r, col)]));
        let Some(pivot) = pivot else { continue };
        work.swap_rows(row, pivot);
        let inv: Complex<BigRational> = Complex::<BigRational>::one() / work[(row, col)].clone();
        for r in row + 1..rows {
            if work[(r, col)].is_zero() {
                continue;
            }
            let factor = work[(r, col)].clone() * inv.clone();
            for c in col..cols {
                let delta = factor.clone() * work[(row, c)].clone();
                work[(r, c)] -= delta;
            }
        }
        pivots.push(col);
        row += 1;
    }
    pivots
}

pub fn exact_rank(m: &Matrix<BigRational>) -> usize {
    exact_pivot_columns(m).len()
}

/// Inverse of a square matrix by Gauss-Jordan elimination; `None` when singular.
pub fn exact_inverse(m: &Matrix<BigRational>) -> Option<Matrix<BigRational>> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "square matrix expected");
    let mut work = m.clone();
    let mut inv: Matrix<BigRational> = identity(n);
    for col in 0..n {
        let pivot = (col..n)
            .filter(|&r| !work[(r, col)].is_zero())
            .max_by_key(|&r| numerator_size(&work[(r, col)]))?;
        work.swap_rows(col, pivot);
        inv.swap_rows(col, pivot);
        let scale: Complex<BigRational> = Complex::<BigRational>::one() / work[(col, col)].clone();
        for c in 0..n {
            work[(col, c)] *= scale.clone();
            inv[(col, c)] *= scale.clone();
        }
        for r in 0..n {
            if r == col || work[(r, col)].is_zero() {
                continue;
            }
            let factor = work[(r, col)].clone();
            for c in 0..n {
                let w = factor.clone() * work[(col, c)].clone();
                work[(r, c)] -= w;
                let v = factor.clone() * inv[(col, c)].clone();
                inv[(r, c)] -= v;
            }
        }
    }
    Some(inv)
}

/// Default relative threshold `max(rows, cols) * machine epsilon`.
pub fn default_rank_tolerance(rows: usize, cols: usize) -> f64 {
    rows.max(cols).max(1) as f64 * f64::EPSILON
}

/// Singular values, descending. Empty for a matrix with no columns or rows.
pub fn singular_values(m: &DMatrix<Complex<f64>>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut values: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// Count of singular values exceeding `tol * sigma_max`.
pub fn numeric_rank(m: &DMatrix<Complex<f64>>, tol: f64) -> usize {
    let sv = singular_values(m);
    let Some(&max) = sv.first() else { return 0 };
    if max == 0.0 || !max.is_finite() {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * max).count()
}

/// Minimum-norm right inverse of a full-row-rank matrix via the pseudo-inverse.
pub fn numeric_pseudo_inverse(m: &DMatrix<Complex<f64>>, tol: f64) -> Option<DMatrix<Complex<f64>>> {
    let max = singular_values(m).first().copied()?;
    m.clone().pseudo_inverse(tol * max).ok()
}

/// Right inverse `R` (cols x rows) with `m * R = I`, using a pivot column
/// basis: the inverse of the pivot submatrix is placed on the pivot rows,
/// every other row is zero. `None` when `m` lacks full row rank.
pub fn exact_right_inverse(m: &Matrix<BigRational>) -> Option<Matrix<BigRational>> {
    let rows = m.nrows();
    let pivots = exact_pivot_columns(m);
    if pivots.len() < rows {
        return None;
    }
    let square = Matrix::from_fn(rows, rows, |i, j| m[(i, pivots[j])].clone());
    let inv = exact_inverse(&square)?;
    let mut out = zeros(m.ncols(), rows);
    for (k, &p) in pivots.iter().enumerate() {
        out.row_mut(p).copy_from(&inv.row(k));
    }
    Some(out)
}

/// Rank over the rationals of an integer matrix given row by row.
pub fn integer_rank(rows: &[Vec<i64>]) -> usize {
    let n = rows.len();
    let cols = rows.first().map_or(0, Vec::len);
    let m = Matrix::<BigRational>::from_fn(n, cols, |i, j| {
        Complex::new(BigRational::from_integer(BigInt::from(rows[i][j])), BigRational::zero())
    });
    exact_rank(&m)
}

/// Greedy choice of independent columns for a numeric matrix: a column is
/// kept when it raises the numeric rank of the kept set.
pub fn numeric_independent_columns(m: &DMatrix<Complex<f64>>, tol: f64, wanted: usize) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for c in 0..m.ncols() {
        if kept.len() == wanted {
            break;
        }
        if m.column(c).iter().all(|z| z.norm() == 0.0) {
            continue;
        }
        let mut trial = kept.clone();
        trial.push(c);
        let sub = m.select_columns(trial.iter());
        if numeric_rank(&sub, tol) == trial.len() {
            kept = trial;
        }
    }
    kept
}

pub fn vector_norm<R: Real>(v: &Vector<R>) -> f64 {
    v.iter().map(|z| complex_to_f64(z).norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs_entry<R: Real>(m: &Matrix<R>) -> f64 {
    m.iter().map(|z| complex_to_f64(z).norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;

    fn q(p: i64, d: i64) -> Complex<BigRational> {
        Complex::new(ratio(p, d), BigRational::zero())
    }

    #[test]
    fn exact_rank_of_unit_vectors() {
        let m: Matrix<BigRational> = from_integers(&[&[0, 0, 1], &[0, 1, 0], &[1, 0, 0]]);
        assert_eq!(exact_rank(&m), 3);
        assert_eq!(exact_pivot_columns(&m), vec![0, 1, 2]);
    }

    #[test]
    fn exact_rank_detects_dependency() {
        let m: Matrix<BigRational> = from_integers(&[&[1, 2, 3], &[2, 4, 6], &[0, 1, 1]]);
        assert_eq!(exact_rank(&m), 2);
        assert_eq!(exact_rank(&zeros::<BigRational>(3, 0)), 0);
    }

    #[test]
    fn exact_rank_complex_entries() {
        // [1, i; i, -1] has rank one over C.
        let i = Complex::new(BigRational::zero(), BigRational::one());
        let m = Matrix::from_row_slice(2, 2, &[q(1, 1), i.clone(), i, q(-1, 1)]);
        assert_eq!(exact_rank(&m), 1);
    }

    #[test]
    fn exact_inverse_round_trip() {
        let m = Matrix::from_row_slice(2, 2, &[q(1, 2), q(1, 3), q(2, 1), q(5, 7)]);
        let inv = exact_inverse(&m).unwrap();
        assert_eq!(&m * &inv, identity::<BigRational>(2));
        let singular: Matrix<BigRational> = from_integers(&[&[1, 2], &[2, 4]]);
        assert!(exact_inverse(&singular).is_none());
    }

    #[test]
    fn exact_right_inverse_is_right_inverse() {
        let m: Matrix<BigRational> = from_integers(&[&[0, 1, 0, 2], &[0, 0, 3, 1]]);
        let r = exact_right_inverse(&m).unwrap();
        assert_eq!(&m * &r, identity::<BigRational>(2));
        let deficient: Matrix<BigRational> = from_integers(&[&[1, 2], &[2, 4]]);
        assert!(exact_right_inverse(&deficient).is_none());
    }

    #[test]
    fn numeric_rank_thresholds() {
        let m = to_numeric(&from_integers::<f64>(&[&[1, 2], &[2, 4]]));
        assert_eq!(numeric_rank(&m, default_rank_tolerance(2, 2)), 1);
        let mut n = to_numeric(&from_integers::<f64>(&[&[1, 0], &[0, 1]]));
        n[(1, 1)] = Complex::new(1e-20, 0.0);
        assert_eq!(numeric_rank(&n, default_rank_tolerance(2, 2)), 1);
        assert_eq!(numeric_rank(&DMatrix::<Complex<f64>>::zeros(3, 2), 1e-10), 0);
    }

    #[test]
    fn pseudo_inverse_gives_minimum_norm_solution() {
        let m = to_numeric(&from_integers::<f64>(&[&[1, 1]]));
        let p = numeric_pseudo_inverse(&m, 1e-12).unwrap();
        assert!((p[(0, 0)].re - 0.5).abs() < 1e-14);
        assert!((p[(1, 0)].re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn integer_rank_of_delay_matrices() {
        assert_eq!(integer_rank(&[vec![1, 0], vec![2, 0]]), 1);
        assert_eq!(integer_rank(&[vec![1, 0], vec![0, 1]]), 2);
        assert_eq!(integer_rank(&[vec![2, 1], vec![1, 1]]), 2);
    }

    #[test]
    fn independent_columns_skip_repeats() {
        let m = to_numeric(&from_integers::<f64>(&[&[1, 2, 0], &[0, 0, 1]]));
        assert_eq!(numeric_independent_columns(&m, 1e-12, 2), vec![0, 2]);
    }
}
