//! Symmetric sparse matrices and a banded Cholesky factorization.
//!
//! Only the lower triangle is stored (row-compressed). Assembly goes through
//! [`TripletBuffer`], which accepts contributions in any order and merges
//! duplicates on finalization. Structured-grid discretizations produce small
//! bandwidths, so direct solves use a banded Cholesky factorization.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Accumulator for matrix assembly. Entries may repeat; `(i, j)` and
/// `(j, i)` address the same logical entry.
#[derive(Debug, Default)]
pub struct TripletBuffer {
    dim: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuffer {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.dim && j < self.dim);
        // canonical lower-triangle addressing
        if i >= j {
            self.entries.push((i, j, value));
        } else {
            self.entries.push((j, i, value));
        }
    }

    /// Merges duplicates, drops entries that sum to exactly zero and builds
    /// the compressed matrix.
    pub fn finalize(mut self) -> SparseSymMatrix {
        self.entries
            .sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; self.dim + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut iter = self.entries.into_iter().peekable();
        while let Some((i, j, mut v)) = iter.next() {
            while let Some(&(i2, j2, v2)) = iter.peek() {
                if i2 == i && j2 == j {
                    v += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            if v != 0.0 {
                row_ptr[i + 1] += 1;
                col_idx.push(j);
                values.push(v);
            }
        }
        for i in 0..self.dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseSymMatrix {
            dim: self.dim,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Symmetric sparse matrix, lower triangle in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    pub fn zeros(dim: usize) -> Self {
        TripletBuffer::new(dim).finalize()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz_lower(&self) -> usize {
        self.values.len()
    }

    /// Entry `(i, j)`; either triangle may be addressed.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        match self.col_idx[lo..hi].binary_search(&c) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x` using the symmetric structure.
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.dim, "matvec dimension mismatch");
        let mut y = DVector::zeros(self.dim);
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                let v = self.values[k];
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    /// Weighted inner product `x^T A y`.
    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.mul_vec(y).dot(x)
    }

    /// `self + scale * other`, entrywise on the union pattern.
    pub fn add_scaled(&self, other: &SparseSymMatrix, scale: f64) -> SparseSymMatrix {
        assert_eq!(self.dim, other.dim, "matrix sum dimension mismatch");
        let mut buf = TripletBuffer::new(self.dim);
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                buf.push(i, self.col_idx[k], self.values[k]);
            }
            for k in other.row_ptr[i]..other.row_ptr[i + 1] {
                buf.push(i, other.col_idx[k], scale * other.values[k]);
            }
        }
        buf.finalize()
    }

    pub fn scale(&self, factor: f64) -> SparseSymMatrix {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= factor;
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                m[(i, j)] = self.values[k];
                m[(j, i)] = self.values[k];
            }
        }
        m
    }

    /// Frobenius norm of the full (symmetric) matrix.
    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let v = self.values[k] * self.values[k];
                s += if self.col_idx[k] == i { v } else { 2.0 * v };
            }
        }
        s.sqrt()
    }

    /// Largest `i - j` over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for i in 0..self.dim {
            if self.row_ptr[i] < self.row_ptr[i + 1] {
                bw = bw.max(i - self.col_idx[self.row_ptr[i]]);
            }
        }
        bw
    }

    /// Banded Cholesky factorization. Fails when a pivot drops below
    /// `1e-13` relative to the largest diagonal entry, which for assembled
    /// stiffness matrices signals a missing Dirichlet boundary.
    pub fn banded_cholesky(&self) -> Result<BandedCholesky> {
        BandedCholesky::factor(self)
    }
}

/// Lower-banded Cholesky factor `A = L L^T`.
///
/// Band storage: `band[i * (bw + 1) + d]` holds `L[i, i - d]`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    dim: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &SparseSymMatrix) -> Result<BandedCholesky> {
        let n = a.dim;
        if n == 0 {
            return Err(Error::InvalidArg("cannot factor an empty matrix".into()));
        }
        let bw = a.bandwidth();
        let stride = bw + 1;
        let mut band = vec![0.0; n * stride];
        let mut diag_max = 0.0f64;
        for i in 0..n {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col_idx[k];
                band[i * stride + (i - j)] = a.values[k];
                if i == j {
                    diag_max = diag_max.max(a.values[k].abs());
                }
            }
        }
        let pivot_floor = 1e-13 * diag_max.max(f64::MIN_POSITIVE);
        for j in 0..n {
            let hi = (j + bw + 1).min(n);
            // pivot
            let mut d = band[j * stride];
            let lo = j.saturating_sub(bw);
            for k in lo..j {
                let l = band[j * stride + (j - k)];
                d -= l * l;
            }
            if d <= pivot_floor {
                return Err(Error::NotPositiveDefinite(format!(
                    "nonpositive pivot {d:.3e} at row {j} (is the Dirichlet boundary empty?)"
                )));
            }
            let d = d.sqrt();
            band[j * stride] = d;
            // column below the pivot
            for i in (j + 1)..hi {
                let mut s = band[i * stride + (i - j)];
                let lo = i.saturating_sub(bw).max(j.saturating_sub(bw));
                for k in lo..j {
                    s -= band[i * stride + (i - k)] * band[j * stride + (j - k)];
                }
                band[i * stride + (i - j)] = s / d;
            }
        }
        Ok(BandedCholesky { dim: n, bw, band })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        assert_eq!(rhs.len(), self.dim, "solve dimension mismatch");
        let stride = self.bw + 1;
        let mut x = rhs.clone();
        // forward: L y = rhs
        for i in 0..self.dim {
            let lo = i.saturating_sub(self.bw);
            let mut s = x[i];
            for k in lo..i {
                s -= self.band[i * stride + (i - k)] * x[k];
            }
            x[i] = s / self.band[i * stride];
        }
        // backward: L^T x = y
        for i in (0..self.dim).rev() {
            let hi = (i + self.bw + 1).min(self.dim);
            let mut s = x[i];
            for k in (i + 1)..hi {
                s -= self.band[k * stride + (k - i)] * x[k];
            }
            x[i] = s / self.band[i * stride];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> SparseSymMatrix {
        // diagonally dominant band matrix
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut buf = TripletBuffer::new(n);
        for i in 0..n {
            buf.push(i, i, 4.0 + rng.random::<f64>());
            if i + 1 < n {
                buf.push(i + 1, i, -1.0 + 0.1 * rng.random::<f64>());
            }
            if i + 3 < n {
                buf.push(i + 3, i, 0.5 * rng.random::<f64>());
            }
        }
        buf.finalize()
    }

    #[test]
    fn triplets_merge_and_drop_zeros() {
        let mut buf = TripletBuffer::new(3);
        buf.push(0, 1, 2.0);
        buf.push(1, 0, 3.0);
        buf.push(2, 2, 1.0);
        buf.push(2, 2, -1.0);
        let m = buf.finalize();
        assert_eq!(m.get(0, 1), 5.0);
        assert_eq!(m.get(1, 0), 5.0);
        assert_eq!(m.get(2, 2), 0.0);
        assert_eq!(m.nnz_lower(), 1);
    }

    #[test]
    fn matvec_matches_dense() {
        let m = random_spd(17, 3);
        let x = DVector::from_fn(17, |i, _| (i as f64).sin());
        let dense = m.to_dense();
        let y = m.mul_vec(&x);
        let y_ref = &dense * &x;
        assert_relative_eq!(y, y_ref, epsilon = 1e-13);
    }

    #[test]
    fn banded_cholesky_solves() {
        let m = random_spd(40, 7);
        let chol = m.banded_cholesky().unwrap();
        let x_ref = DVector::from_fn(40, |i, _| 1.0 + (i as f64) * 0.01);
        let rhs = m.mul_vec(&x_ref);
        let x = chol.solve(&rhs);
        assert_relative_eq!(x, x_ref, epsilon = 1e-10);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut buf = TripletBuffer::new(2);
        buf.push(0, 0, 1.0);
        buf.push(1, 1, -1.0);
        let m = buf.finalize();
        assert!(matches!(
            m.banded_cholesky(),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn add_scaled_merges_patterns() {
        let mut a = TripletBuffer::new(3);
        a.push(0, 0, 1.0);
        a.push(2, 1, 4.0);
        let a = a.finalize();
        let mut b = TripletBuffer::new(3);
        b.push(0, 0, 2.0);
        b.push(2, 0, 1.0);
        let b = b.finalize();
        let c = a.add_scaled(&b, 0.5);
        assert_eq!(c.get(0, 0), 2.0);
        assert_eq!(c.get(2, 1), 4.0);
        assert_eq!(c.get(2, 0), 0.5);
    }
}
