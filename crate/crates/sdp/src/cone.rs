//! Cones and the packed symmetric-matrix layout used by the solver.
//!
//! PSD blocks are stored in `svec` form: the lower triangle, column by
//! column, with off-diagonal entries scaled by `sqrt(2)` so that the
//! Euclidean inner product of two packed vectors equals the trace inner
//! product of the matrices they represent.

use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::SQRT_2;

/// A single cone in the product `K = K_1 x K_2 x ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// `{0}^n`: equality rows.
    Zero(usize),
    /// The nonnegative orthant `R_+^n`.
    Nonneg(usize),
    /// The cone of `n x n` positive semidefinite matrices, packed as svec.
    Psd(usize),
}

impl Cone {
    /// Number of rows this cone occupies in the packed constraint vector.
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::Nonneg(n) => n,
            Cone::Psd(n) => svec_len(n),
        }
    }

    /// Euclidean projection onto the cone, in place.
    pub fn project(&self, v: &mut [f64]) {
        match *self {
            Cone::Zero(_) => v.iter_mut().for_each(|x| *x = 0.0),
            Cone::Nonneg(_) => v.iter_mut().for_each(|x| *x = x.max(0.0)),
            Cone::Psd(n) => project_psd(v, n),
        }
    }

    /// Euclidean projection onto the dual cone, in place.
    pub fn project_dual(&self, v: &mut [f64]) {
        match *self {
            // The dual of {0} is the whole space.
            Cone::Zero(_) => {}
            Cone::Nonneg(_) | Cone::Psd(_) => self.project(v),
        }
    }
}

/// Length of the svec packing of an `n x n` symmetric matrix.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Recover the matrix order from an svec length.
pub fn svec_order(len: usize) -> Option<usize> {
    let n = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    (svec_len(n) == len).then_some(n)
}

/// Packed index of entry `(i, j)` (any order) of an `n x n` symmetric matrix.
#[inline]
pub fn svec_index(n: usize, i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    // Columns 0..c hold n + (n-1) + ... + (n-c+1) entries.
    c * n - c * (c.saturating_sub(1)) / 2 - c + r
}

/// Pack a symmetric matrix (only the lower triangle is read).
pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(svec_len(n));
    for j in 0..n {
        out.push(m[(j, j)]);
        for i in (j + 1)..n {
            out.push(SQRT_2 * m[(i, j)]);
        }
    }
    out
}

/// Unpack an svec vector into a full symmetric matrix.
pub fn smat(v: &[f64], n: usize) -> DMatrix<f64> {
    debug_assert_eq!(v.len(), svec_len(n));
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        m[(j, j)] = v[k];
        k += 1;
        for i in (j + 1)..n {
            let x = v[k] / SQRT_2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
    }
    m
}

fn project_psd(v: &mut [f64], n: usize) {
    if n == 0 {
        return;
    }
    if n == 1 {
        v[0] = v[0].max(0.0);
        return;
    }
    let m = smat(v, n);
    let eig = SymmetricEigen::new(m);
    let vals = &eig.eigenvalues;
    if vals.iter().all(|&l| l >= 0.0) {
        return;
    }
    let q = &eig.eigenvectors;
    let mut out = DMatrix::<f64>::zeros(n, n);
    // Reconstruct from whichever half of the spectrum is smaller.
    let positive = vals.iter().filter(|&&l| l > 0.0).count();
    if positive <= n / 2 {
        for (k, &l) in vals.iter().enumerate() {
            if l > 0.0 {
                let col = q.column(k);
                out.ger(l, &col, &col, 1.0);
            }
        }
    } else {
        out.copy_from(&smat(v, n));
        for (k, &l) in vals.iter().enumerate() {
            if l < 0.0 {
                let col = q.column(k);
                out.ger(-l, &col, &col, 1.0);
            }
        }
    }
    let packed = svec(&out);
    v.copy_from_slice(&packed);
}

/// Apply `f` to each cone's slice of a packed vector.
pub(crate) fn for_each_block<F>(cones: &[Cone], v: &mut [f64], mut f: F)
where
    F: FnMut(&Cone, &mut [f64]),
{
    let mut start = 0;
    for cone in cones {
        let end = start + cone.dim();
        f(cone, &mut v[start..end]);
        start = end;
    }
}
