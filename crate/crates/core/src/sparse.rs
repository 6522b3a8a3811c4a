//! Sparse complex operators on the truncated state space.
//!
//! Compressed-sparse-row storage over the flat coordinates of
//! `h0 ⊗ Γ_{≤n_max}`. All constructions are exact: entries are dropped only
//! when their modulus is at or below the drop tolerance (default 0, so only
//! exact zeros vanish).

use crate::error::{FfError, Result};
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    data: Vec<Complex64>,
}

impl SparseOperator {
    pub fn zero(dim: usize) -> Self {
        SparseOperator { dim, indptr: vec![0; dim + 1], indices: Vec::new(), data: Vec::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, Complex64::ONE)
    }

    pub fn scaled_identity(dim: usize, s: Complex64) -> Self {
        if s == Complex64::ZERO {
            return Self::zero(dim);
        }
        SparseOperator {
            dim,
            indptr: (0..=dim).collect(),
            indices: (0..dim as u32).collect(),
            data: vec![s; dim],
        }
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let dim = diag.len();
        let mut indptr = Vec::with_capacity(dim + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for (i, &v) in diag.iter().enumerate() {
            if v != Complex64::ZERO {
                indices.push(i as u32);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        SparseOperator { dim, indptr, indices, data }
    }

    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(u32, u32, Complex64)>, drop_tol: f64) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; dim + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut iter = triplets.into_iter().peekable();
        for row in 0..dim as u32 {
            while let Some(&(r, c, _)) = iter.peek() {
                if r != row {
                    break;
                }
                let mut v = Complex64::ZERO;
                let col = c;
                while let Some(&(r2, c2, v2)) = iter.peek() {
                    if r2 == row && c2 == col {
                        v += v2;
                        iter.next();
                    } else {
                        break;
                    }
                }
                if v.norm() > drop_tol {
                    indices.push(col);
                    data.push(v);
                }
            }
            indptr[row as usize + 1] = indices.len();
        }
        SparseOperator { dim, indptr, indices, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == Complex64::ZERO)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1])
                .map(move |p| (r, self.indices[p] as usize, self.data[p]))
        })
    }

    pub fn scale(&self, s: Complex64) -> Self {
        if s == Complex64::ZERO {
            return Self::zero(self.dim);
        }
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v *= s;
        }
        out
    }

    pub fn add(&self, other: &SparseOperator) -> Self {
        self.add_scaled(other, Complex64::ONE)
    }

    pub fn sub(&self, other: &SparseOperator) -> Self {
        self.add_scaled(other, -Complex64::ONE)
    }

    /// `self + s·other`, merging sorted rows.
    pub fn add_scaled(&self, other: &SparseOperator, s: Complex64) -> Self {
        assert_eq!(self.dim, other.dim, "operator dimension mismatch");
        let mut indptr = Vec::with_capacity(self.dim + 1);
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut data = Vec::with_capacity(self.nnz() + other.nnz());
        indptr.push(0);
        for r in 0..self.dim {
            let (mut i, ei) = (self.indptr[r], self.indptr[r + 1]);
            let (mut j, ej) = (other.indptr[r], other.indptr[r + 1]);
            while i < ei || j < ej {
                let ci = if i < ei { self.indices[i] } else { u32::MAX };
                let cj = if j < ej { other.indices[j] } else { u32::MAX };
                if ci < cj {
                    indices.push(ci);
                    data.push(self.data[i]);
                    i += 1;
                } else if cj < ci {
                    indices.push(cj);
                    data.push(s * other.data[j]);
                    j += 1;
                } else {
                    let v = self.data[i] + s * other.data[j];
                    if v != Complex64::ZERO {
                        indices.push(ci);
                        data.push(v);
                    }
                    i += 1;
                    j += 1;
                }
            }
            indptr.push(indices.len());
        }
        SparseOperator { dim: self.dim, indptr, indices, data }
    }

    /// Operator product `self · other` (apply `other` first).
    pub fn mul(&self, other: &SparseOperator) -> Self {
        assert_eq!(self.dim, other.dim, "operator dimension mismatch");
        let dim = self.dim;
        let mut indptr = Vec::with_capacity(dim + 1);
        let mut indices: Vec<u32> = Vec::new();
        let mut data: Vec<Complex64> = Vec::new();
        indptr.push(0);
        let mut scratch = vec![Complex64::ZERO; dim];
        let mut touched: Vec<u32> = Vec::new();
        for r in 0..dim {
            for p in self.indptr[r]..self.indptr[r + 1] {
                let k = self.indices[p] as usize;
                let v = self.data[p];
                for q in other.indptr[k]..other.indptr[k + 1] {
                    let c = other.indices[q];
                    if scratch[c as usize] == Complex64::ZERO {
                        touched.push(c);
                    }
                    scratch[c as usize] += v * other.data[q];
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                let v = scratch[c as usize];
                if v != Complex64::ZERO {
                    indices.push(c);
                    data.push(v);
                }
                scratch[c as usize] = Complex64::ZERO;
            }
            touched.clear();
            indptr.push(indices.len());
        }
        SparseOperator { dim, indptr, indices, data }
    }

    /// Conjugate transpose; an exact involution.
    pub fn adjoint(&self) -> Self {
        let dim = self.dim;
        let mut counts = vec![0usize; dim + 1];
        for &c in &self.indices {
            counts[c as usize + 1] += 1;
        }
        for i in 0..dim {
            counts[i + 1] += counts[i];
        }
        let indptr = counts.clone();
        let mut indices = vec![0u32; self.nnz()];
        let mut data = vec![Complex64::ZERO; self.nnz()];
        let mut next = counts;
        for r in 0..dim {
            for p in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[p] as usize;
                let slot = next[c];
                next[c] += 1;
                indices[slot] = r as u32;
                data[slot] = self.data[p].conj();
            }
        }
        SparseOperator { dim, indptr, indices, data }
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.dim, "vector dimension mismatch");
        let mut out = vec![Complex64::ZERO; self.dim];
        self.apply_add(x, Complex64::ONE, &mut out);
        out
    }

    /// `out += s · self·x`.
    pub fn apply_add(&self, x: &[Complex64], s: Complex64, out: &mut [Complex64]) {
        for r in 0..self.dim {
            let mut acc = Complex64::ZERO;
            for p in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[p] * x[self.indices[p] as usize];
            }
            out[r] += s * acc;
        }
    }

    /// `⟨x, M y⟩` with the physics convention (antilinear in x).
    pub fn matrix_element(&self, x: &[Complex64], y: &[Complex64]) -> Complex64 {
        let my = self.apply(y);
        x.iter().zip(&my).map(|(a, b)| a.conj() * b).sum()
    }

    /// Largest entry modulus.
    pub fn norm_max(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Operator 2-norm estimate by power iteration on `M†M`, deterministic
    /// start vector.
    pub fn op_norm_est(&self, iters: usize) -> f64 {
        if self.dim == 0 || self.nnz() == 0 {
            return 0.0;
        }
        let adj = self.adjoint();
        let mut v: Vec<Complex64> = (0..self.dim)
            .map(|i| Complex64::new(1.0, (i % 7) as f64 * 0.1))
            .collect();
        let mut norm = 0.0;
        for _ in 0..iters {
            let w = adj.apply(&self.apply(&v));
            norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            for (a, b) in v.iter_mut().zip(&w) {
                *a = b / norm;
            }
        }
        norm.sqrt()
    }

    /// Dense row-major materialization, refused above `cap` basis states.
    pub fn to_dense(&self, cap: usize) -> Result<Vec<Complex64>> {
        if self.dim > cap {
            return Err(FfError::DenseCapExceeded { dim: self.dim, cap });
        }
        let mut out = vec![Complex64::ZERO; self.dim * self.dim];
        for (r, c, v) in self.entries() {
            out[r * self.dim + c] = v;
        }
        Ok(out)
    }

    /// Kronecker product of a small dense initial-space matrix with a Fock
    /// operator; coordinates are h0-major.
    pub fn kron_dense(h0: &[Complex64], h0_dim: usize, fock: &SparseOperator) -> SparseOperator {
        assert_eq!(h0.len(), h0_dim * h0_dim);
        let fdim = fock.dim;
        let dim = h0_dim * fdim;
        let mut triplets = Vec::with_capacity(fock.nnz() * h0_dim * h0_dim);
        for a in 0..h0_dim {
            for b in 0..h0_dim {
                let w = h0[a * h0_dim + b];
                if w == Complex64::ZERO {
                    continue;
                }
                for (r, c, v) in fock.entries() {
                    triplets.push(((a * fdim + r) as u32, (b * fdim + c) as u32, w * v));
                }
            }
        }
        SparseOperator::from_triplets(dim, triplets, 0.0)
    }

    /// Ampliation `1_{h0} ⊗ fock` without forming a dense identity.
    pub fn ampliate(fock: &SparseOperator, h0_dim: usize) -> SparseOperator {
        let fdim = fock.dim;
        let dim = h0_dim * fdim;
        let mut indptr = Vec::with_capacity(dim + 1);
        let mut indices = Vec::with_capacity(fock.nnz() * h0_dim);
        let mut data = Vec::with_capacity(fock.nnz() * h0_dim);
        indptr.push(0);
        for a in 0..h0_dim {
            for r in 0..fdim {
                for p in fock.indptr[r]..fock.indptr[r + 1] {
                    indices.push((a * fdim) as u32 + fock.indices[p]);
                    data.push(fock.data[p]);
                }
                indptr.push(indices.len());
            }
        }
        SparseOperator { dim, indptr, indices, data }
    }
}

/// 2-norm of a small dense row-major matrix via power iteration.
pub fn dense_norm2(m: &[Complex64], dim: usize) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    let mut v = vec![Complex64::ONE; dim];
    let mut norm = 0.0;
    for _ in 0..60 {
        // w = M†M v
        let mut mv = vec![Complex64::ZERO; dim];
        for r in 0..dim {
            for c in 0..dim {
                mv[r] += m[r * dim + c] * v[c];
            }
        }
        let mut w = vec![Complex64::ZERO; dim];
        for r in 0..dim {
            for c in 0..dim {
                w[c] += m[r * dim + c].conj() * mv[r];
            }
        }
        norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for (a, b) in v.iter_mut().zip(&w) {
            *a = b / norm;
        }
    }
    norm.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn triplets_and_products() {
        let m = SparseOperator::from_triplets(
            3,
            vec![(0, 1, c(1.0, 0.0)), (0, 1, c(0.5, 0.0)), (2, 0, c(0.0, 1.0))],
            0.0,
        );
        assert_eq!(m.nnz(), 2);
        let id = SparseOperator::identity(3);
        assert_eq!(m.mul(&id), m);
        assert_eq!(id.mul(&m), m);
        let x = vec![c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0)];
        let y = m.apply(&x);
        assert_eq!(y[0], c(3.0, 0.0));
        assert_eq!(y[2], c(0.0, 1.0));
    }

    #[test]
    fn adjoint_is_involution() {
        let m = SparseOperator::from_triplets(
            2,
            vec![(0, 1, c(1.0, -2.0)), (1, 1, c(0.5, 0.5))],
            0.0,
        );
        assert_eq!(m.adjoint().adjoint(), m);
        // ⟨Mx, y⟩ = ⟨x, M†y⟩
        let x = vec![c(0.3, 0.1), c(-1.0, 0.7)];
        let y = vec![c(1.0, -0.4), c(0.2, 0.0)];
        let lhs: Complex64 = m.apply(&x).iter().zip(&y).map(|(a, b)| a.conj() * b).sum();
        let rhs: Complex64 =
            x.iter().zip(&m.adjoint().apply(&y)).map(|(a, b)| a.conj() * b).sum();
        assert!((lhs - rhs).norm() < 1e-15);
    }

    #[test]
    fn composition_is_associative() {
        let a = SparseOperator::from_triplets(3, vec![(0, 1, c(1.0, 1.0)), (1, 2, c(2.0, 0.0))], 0.0);
        let b = SparseOperator::from_triplets(3, vec![(1, 0, c(0.5, 0.0)), (2, 2, c(0.0, 3.0))], 0.0);
        let d = SparseOperator::from_triplets(3, vec![(0, 0, c(1.0, 0.0)), (2, 1, c(1.0, -1.0))], 0.0);
        assert_eq!(a.mul(&b).mul(&d), a.mul(&b.mul(&d)));
    }

    #[test]
    fn dense_cap() {
        let m = SparseOperator::identity(5);
        assert!(m.to_dense(4).is_err());
        assert_eq!(m.to_dense(5).unwrap().len(), 25);
    }

    #[test]
    fn kron_shapes() {
        let h0 = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)];
        let f = SparseOperator::from_triplets(2, vec![(0, 1, c(3.0, 0.0))], 0.0);
        let k = SparseOperator::kron_dense(&h0, 2, &f);
        assert_eq!(k.dim(), 4);
        let entries: Vec<_> = k.entries().collect();
        assert_eq!(entries, vec![(0, 1, c(3.0, 0.0)), (2, 3, c(6.0, 0.0))]);
        let amp = SparseOperator::ampliate(&f, 2);
        let entries: Vec<_> = amp.entries().collect();
        assert_eq!(entries, vec![(0, 1, c(3.0, 0.0)), (2, 3, c(3.0, 0.0))]);
    }
}
