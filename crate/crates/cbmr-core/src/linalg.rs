//! Small dense linear algebra: row-major matrices, Cholesky solves, and a
//! power-iteration condition estimate.
//!
//! Everything the fits need is symmetric positive (semi-)definite and at most
//! a few hundred columns, so a compact hand-rolled kernel beats pulling a
//! full linear-algebra stack into a `no_std` crate.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::math as m;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DMat {
    pub n_rows: usize,
    pub n_cols: usize,
    data: Vec<f64>,
}

impl DMat {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DMat { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut a = DMat::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = 1.0;
        }
        a
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n_rows = rows.len();
        let n_cols = if n_rows == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.len(), n_cols, "ragged rows");
            data.extend_from_slice(r);
        }
        DMat { n_rows, n_cols, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `self * x` for a vector `x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `self * other`.
    pub fn matmul(&self, other: &DMat) -> DMat {
        assert_eq!(self.n_cols, other.n_rows);
        let mut out = DMat::zeros(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            for k in 0..self.n_cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let or = out.row_mut(i);
                let br = other.row(k);
                for j in 0..br.len() {
                    or[j] += a * br[j];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> DMat {
        let mut out = DMat::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// Copy the square sub-block with the given row/col index set.
    pub fn sub_block(&self, idx: &[usize]) -> DMat {
        let mut out = DMat::zeros(idx.len(), idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out[(a, b)] = self[(i, j)];
            }
        }
        out
    }

    /// Force exact symmetry: A ← (A + Aᵀ)/2.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for j in (i + 1)..self.n_cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    pub fn max_abs_diff(&self, other: &DMat) -> f64 {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| m::abs(a - b))
            .fold(0.0, f64::max)
    }
}

impl core::ops::Index<(usize, usize)> for DMat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n_cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for DMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n_cols + j]
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub struct Cholesky {
    n: usize,
    l: Vec<f64>, // row-major lower triangle, full n x n storage
}

impl Cholesky {
    /// Factor A = L Lᵀ. Fails (without perturbing A) on a non-positive pivot
    /// or one below 1e-12 of the largest diagonal entry — an exactly rank-
    /// deficient matrix rounds to a pivot of either sign, so a sign test
    /// alone is not reliable. We never regularize; callers decide what a
    /// singular matrix means.
    pub fn new(a: &DMat) -> Result<Self, CoreError> {
        assert_eq!(a.n_rows, a.n_cols);
        let n = a.n_rows;
        let mut max_diag = 0.0f64;
        for i in 0..n {
            max_diag = max_diag.max(a[(i, i)]);
        }
        let floor = 1e-12 * max_diag;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= floor || !s.is_finite() {
                        return Err(CoreError::SingularInformation { condition: f64::INFINITY });
                    }
                    l[i * n + i] = m::sqrt(s);
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Cholesky { n, l })
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= self.l[k * n + i] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }

    /// A⁻¹ (symmetric), column by column.
    pub fn inverse(&self) -> DMat {
        let n = self.n;
        let mut out = DMat::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e);
            e[j] = 0.0;
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        out.symmetrize();
        out
    }
}

/// Condition-number estimate λmax/λmin of a symmetric PD matrix via power
/// iteration (λmax) and inverse power iteration through a Cholesky solve
/// (λmin). Deterministic start vector; returns `Err` if the factorization
/// itself breaks down.
pub fn sym_condition_estimate(a: &DMat) -> Result<f64, CoreError> {
    assert_eq!(a.n_rows, a.n_cols);
    let n = a.n_rows;
    if n == 0 {
        return Ok(1.0);
    }
    let chol = Cholesky::new(a)?;
    let start: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 % 7.0) * 0.1).collect();

    let lambda_max = power_iterate(&start, 200, |v| a.matvec(v));
    let inv_lambda_min = power_iterate(&start, 200, |v| chol.solve(v));
    Ok(lambda_max * inv_lambda_min)
}

fn power_iterate(start: &[f64], iters: usize, mut apply: impl FnMut(&[f64]) -> Vec<f64>) -> f64 {
    let mut v = start.to_vec();
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = apply(&v);
        let new_lambda = dot(&v, &w);
        let mut w = w;
        normalize(&mut w);
        let done = m::abs(new_lambda - lambda) <= 1e-12 * m::abs(new_lambda);
        lambda = new_lambda;
        v = w;
        if done {
            break;
        }
    }
    m::abs(lambda)
}

fn normalize(v: &mut [f64]) {
    let n = m::sqrt(dot(v, v));
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for i in 0..x.len() {
        y[i] += alpha * x[i];
    }
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| m::abs(*x)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd_example() -> DMat {
        // B Bᵀ + I for a fixed B: guaranteed SPD.
        let b = DMat::from_rows(&[
            &[1.0, 2.0, -1.0],
            &[0.5, -0.3, 2.0],
            &[2.0, 0.1, 0.4],
        ]);
        let mut a = b.matmul(&b.transpose());
        for i in 0..3 {
            a[(i, i)] += 1.0;
        }
        a
    }

    #[test]
    fn cholesky_solve_round_trip() {
        let a = spd_example();
        let x_true = [1.0, -2.0, 0.5];
        let b = a.matvec(&x_true);
        let x = Cholesky::new(&a).unwrap().solve(&b);
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_gives_identity() {
        let a = spd_example();
        let inv = Cholesky::new(&a).unwrap().inverse();
        let prod = a.matmul(&inv);
        let eye = DMat::identity(3);
        assert!(prod.max_abs_diff(&eye) < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DMat::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]); // eigenvalues 3, -1
        assert!(Cholesky::new(&a).is_err());
    }

    #[test]
    fn condition_of_diagonal_matrix() {
        let mut a = DMat::zeros(4, 4);
        for (i, v) in [8.0, 2.0, 1.0, 0.5].iter().enumerate() {
            a[(i, i)] = *v;
        }
        let c = sym_condition_estimate(&a).unwrap();
        assert!((c - 16.0).abs() < 1e-6 * 16.0, "cond = {c}");
    }
}
