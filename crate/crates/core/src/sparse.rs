//! Minimal compressed-sparse-row storage for complex matrices.
//!
//! Only the handful of operations the operator algebra and the Liouvillian
//! assembly need are provided: triplet assembly, products, Kronecker
//! products and matrix-vector application.

use nalgebra::DMatrix;
use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<Complex64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![Complex64::new(1.0, 0.0); n],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed and exact zeros dropped; column indices end up sorted per row.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, Complex64)>,
    ) -> Self {
        let mut entries: Vec<(usize, usize, Complex64)> = triplets.into_iter().collect();
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indptr[r + 1] += 1;
                indices.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        let mut m = Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        };
        m.prune(0.0);
        m
    }

    pub fn from_dense(m: &DMatrix<Complex64>) -> Self {
        let triplets = (0..m.nrows()).flat_map(|i| {
            (0..m.ncols()).filter_map(move |j| {
                let v = m[(i, j)];
                (v != ZERO).then_some((i, j, v))
            })
        });
        Self::from_triplets(m.nrows(), m.ncols(), triplets)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.iter() {
            out[(r, c)] += v;
        }
        out
    }

    /// Removes entries with modulus `<= tol`.
    pub fn prune(&mut self, tol: f64) {
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let v = self.values[k];
                if v.norm() > tol {
                    indices.push(self.indices[k]);
                    values.push(v);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn density(&self) -> f64 {
        if self.nrows == 0 || self.ncols == 0 {
            return 0.0;
        }
        self.nnz() as f64 / (self.nrows * self.ncols) as f64
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        let range = self.indptr[row]..self.indptr[row + 1];
        match self.indices[range.clone()].binary_search(&col) {
            Ok(k) => self.values[range.start + k],
            Err(_) => ZERO,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.values[k]))
        })
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.values[k]))
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.iter().map(|(r, c, v)| (c, r, v)))
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(
            self.ncols,
            self.nrows,
            self.iter().map(|(r, c, v)| (c, r, v.conj())),
        )
    }

    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = v.conj());
        out
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        Self::from_triplets(self.nrows, self.ncols, self.iter().chain(other.iter()))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows, "inner dimensions differ");
        let mut triplets = Vec::new();
        let mut acc = vec![ZERO; other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if acc[c] == ZERO {
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &touched {
                triplets.push((r, c, acc[c]));
                acc[c] = ZERO;
            }
            touched.clear();
        }
        Self::from_triplets(self.nrows, other.ncols, triplets)
    }

    /// Kronecker product `self ⊗ other`; `self` carries the slow index.
    pub fn kron(&self, other: &Self) -> Self {
        let (pr, pc) = (other.nrows, other.ncols);
        let triplets = self.iter().flat_map(|(r1, c1, v1)| {
            other
                .iter()
                .map(move |(r2, c2, v2)| (r1 * pr + r2, c1 * pc + c2, v1 * v2))
        });
        Self::from_triplets(self.nrows * pr, self.ncols * pc, triplets)
    }

    /// `y = self · x`
    pub fn mul_vec_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = ZERO;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            *yr = s;
        }
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![ZERO; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
            .values
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }
}
