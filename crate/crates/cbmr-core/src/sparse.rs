//! Compressed sparse row matrix for the voxel × basis design.
//!
//! The tensor B-spline design has at most 4³ = 64 nonzeros per voxel row, so
//! CSR with u32 column indices keeps the full-brain design (~230k × 456)
//! around 175 MB and every per-iteration kernel a single ordered pass.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::DMat;

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

pub struct CsrBuilder {
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl CsrBuilder {
    pub fn new(n_cols: usize) -> Self {
        CsrBuilder { n_cols, indptr: vec![0], indices: Vec::new(), values: Vec::new() }
    }

    pub fn with_capacity(n_cols: usize, rows: usize, nnz: usize) -> Self {
        let mut b = CsrBuilder::new(n_cols);
        b.indptr.reserve(rows);
        b.indices.reserve(nnz);
        b.values.reserve(nnz);
        b
    }

    /// Append a row given (column, value) pairs in strictly increasing column
    /// order; zeros may be included and are kept (callers usually skip them).
    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (u32, f64)>) {
        let mut last: i64 = -1;
        for (c, v) in entries {
            debug_assert!((c as usize) < self.n_cols);
            debug_assert!(c as i64 > last, "columns must be strictly increasing");
            last = c as i64;
            self.indices.push(c);
            self.values.push(v);
        }
        self.indptr.push(self.indices.len());
    }

    pub fn finish(self) -> CsrMatrix {
        CsrMatrix {
            n_rows: self.indptr.len() - 1,
            n_cols: self.n_cols,
            indptr: self.indptr,
            indices: self.indices,
            values: self.values,
        }
    }
}

impl CsrMatrix {
    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut s = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                s += v * x[*c as usize];
            }
            y[i] = s;
        }
        y
    }

    /// y = Aᵀ w.
    pub fn t_matvec(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.n_rows);
        let mut y = vec![0.0; self.n_cols];
        for i in 0..self.n_rows {
            let wi = w[i];
            if wi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                y[*c as usize] += v * wi;
            }
        }
        y
    }

    /// Aᵀ diag(w) A, accumulated in a fixed row order (deterministic).
    pub fn weighted_gram(&self, w: &[f64]) -> DMat {
        assert_eq!(w.len(), self.n_rows);
        let p = self.n_cols;
        let mut g = DMat::zeros(p, p);
        for i in 0..self.n_rows {
            let wi = w[i];
            if wi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for a in 0..cols.len() {
                let wa = wi * vals[a];
                let ca = cols[a] as usize;
                for b in a..cols.len() {
                    g[(ca, cols[b] as usize)] += wa * vals[b];
                }
            }
        }
        // mirror the upper triangle
        for a in 0..p {
            for b in (a + 1)..p {
                g[(b, a)] = g[(a, b)];
            }
        }
        g
    }

    /// xᵢᵀ S xᵢ for one row i and a small dense symmetric S.
    pub fn row_quadform(&self, i: usize, s: &DMat) -> f64 {
        let (cols, vals) = self.row(i);
        let mut acc = 0.0;
        for a in 0..cols.len() {
            let ca = cols[a] as usize;
            let sa = s.row(ca);
            // diagonal term once, off-diagonals twice
            acc += vals[a] * vals[a] * sa[ca];
            let mut cross = 0.0;
            for b in (a + 1)..cols.len() {
                cross += vals[b] * sa[cols[b] as usize];
            }
            acc += 2.0 * vals[a] * cross;
        }
        acc
    }

    /// Per-column maximum over a row subset (used by basis pruning).
    pub fn column_max<'a>(&self, rows: impl Iterator<Item = usize>) -> Vec<f64> {
        let mut maxima = vec![0.0; self.n_cols];
        for i in rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                let slot = &mut maxima[*c as usize];
                if *v > *slot {
                    *slot = *v;
                }
            }
        }
        maxima
    }

    pub fn to_dense(&self) -> DMat {
        let mut d = DMat::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                d[(i, *c as usize)] = *v;
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DMat;

    fn small() -> CsrMatrix {
        // [[1, 0, 2], [0, 3, 0], [4, 5, 6]]
        let mut b = CsrBuilder::new(3);
        b.push_row([(0, 1.0), (2, 2.0)]);
        b.push_row([(1, 3.0)]);
        b.push_row([(0, 4.0), (1, 5.0), (2, 6.0)]);
        b.finish()
    }

    #[test]
    fn matvec_and_transpose() {
        let a = small();
        assert_eq!(a.matvec(&[1.0, 1.0, 1.0]), vec![3.0, 3.0, 15.0]);
        assert_eq!(a.t_matvec(&[1.0, 1.0, 1.0]), vec![5.0, 8.0, 8.0]);
    }

    #[test]
    fn weighted_gram_matches_dense() {
        let a = small();
        let w = [0.5, 2.0, 1.5];
        let g = a.weighted_gram(&w);
        // dense reference
        let d = a.to_dense();
        let mut want = DMat::zeros(3, 3);
        for i in 0..3 {
            for p in 0..3 {
                for q in 0..3 {
                    want[(p, q)] += d[(i, p)] * w[i] * d[(i, q)];
                }
            }
        }
        assert!(g.max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn row_quadform_matches_dense() {
        let a = small();
        let s = DMat::from_rows(&[&[2.0, 0.3, 0.1], &[0.3, 1.0, -0.2], &[0.1, -0.2, 3.0]]);
        let d = a.to_dense();
        for i in 0..3 {
            let x = d.row(i);
            let mut want = 0.0;
            for p in 0..3 {
                for q in 0..3 {
                    want += x[p] * s[(p, q)] * x[q];
                }
            }
            assert!((a.row_quadform(i, &s) - want).abs() < 1e-14);
        }
    }
}
