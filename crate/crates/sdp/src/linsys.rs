//! Solvers for the ADMM x-update system `(sigma I + A' R A) x = rhs`.

use crate::error::SolverError;
use crate::sparse::CscMatrix;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

pub(crate) enum LinearSystem {
    Dense {
        gram_rows: Vec<DMatrix<f64>>,
        chol: Cholesky<f64, Dyn>,
    },
    Cg {
        precond: Vec<f64>,
        work: CgWork,
    },
}

pub(crate) struct CgWork {
    ax: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    pub iterations: usize,
}

/// Row groups that share a penalty value; the Gram matrix is kept per group
/// so a penalty update only needs a cheap weighted sum and a refactor.
pub(crate) struct RhoGroups {
    pub ranges: Vec<(usize, usize)>,
}

impl LinearSystem {
    pub fn dense(a: &CscMatrix, groups: &RhoGroups, rho: &[f64], sigma: f64) -> Result<Self, SolverError> {
        let gram_rows: Vec<DMatrix<f64>> = groups
            .ranges
            .iter()
            .map(|&(lo, hi)| row_slice(a, lo, hi).gram())
            .collect();
        let chol = factor(&gram_rows, rho, sigma, a.ncols)?;
        Ok(LinearSystem::Dense { gram_rows, chol })
    }

    pub fn cg(a: &CscMatrix, rho_rows: &[f64], sigma: f64) -> Self {
        let precond = cg_diagonal(a, rho_rows, sigma);
        let n = a.ncols;
        LinearSystem::Cg {
            precond,
            work: CgWork {
                ax: vec![0.0; a.nrows],
                r: vec![0.0; n],
                z: vec![0.0; n],
                p: vec![0.0; n],
                q: vec![0.0; n],
                iterations: 0,
            },
        }
    }

    /// Refresh after a change of penalty.
    pub fn update_rho(&mut self, a: &CscMatrix, rho: &[f64], rho_rows: &[f64], sigma: f64) -> Result<(), SolverError> {
        match self {
            LinearSystem::Dense { gram_rows, chol } => {
                *chol = factor(gram_rows, rho, sigma, a.ncols)?;
            }
            LinearSystem::Cg { precond, .. } => {
                *precond = cg_diagonal(a, rho_rows, sigma);
            }
        }
        Ok(())
    }

    /// Solve in place; `x` holds the warm start on entry (used by CG only).
    pub fn solve(
        &mut self,
        a: &CscMatrix,
        rho_rows: &[f64],
        sigma: f64,
        rhs: &[f64],
        x: &mut [f64],
        rel_tol: f64,
    ) -> Result<(), SolverError> {
        match self {
            LinearSystem::Dense { chol, .. } => {
                let sol = chol.solve(&DVector::from_column_slice(rhs));
                x.copy_from_slice(sol.as_slice());
                Ok(())
            }
            LinearSystem::Cg { precond, work } => pcg(a, rho_rows, sigma, precond, rhs, x, rel_tol, work),
        }
    }

    pub fn cg_iterations(&self) -> usize {
        match self {
            LinearSystem::Dense { .. } => 0,
            LinearSystem::Cg { work, .. } => work.iterations,
        }
    }
}

fn row_slice(a: &CscMatrix, lo: usize, hi: usize) -> CscMatrix {
    let mut trip = Vec::new();
    for c in 0..a.ncols {
        for k in a.col_ptr[c]..a.col_ptr[c + 1] {
            let r = a.row_idx[k];
            if r >= lo && r < hi {
                trip.push((r - lo, c, a.values[k]));
            }
        }
    }
    CscMatrix::from_triplets(hi - lo, a.ncols, &trip)
}

fn factor(gram_rows: &[DMatrix<f64>], rho: &[f64], sigma: f64, n: usize) -> Result<Cholesky<f64, Dyn>, SolverError> {
    let mut k = DMatrix::<f64>::identity(n, n) * sigma;
    for (g, &r) in gram_rows.iter().zip(rho) {
        k += g * r;
    }
    Cholesky::new(k).ok_or_else(|| SolverError::Numerical("Cholesky factorization of the KKT system failed".into()))
}

fn cg_diagonal(a: &CscMatrix, rho_rows: &[f64], sigma: f64) -> Vec<f64> {
    (0..a.ncols)
        .map(|c| {
            sigma
                + (a.col_ptr[c]..a.col_ptr[c + 1])
                    .map(|k| rho_rows[a.row_idx[k]] * a.values[k] * a.values[k])
                    .sum::<f64>()
        })
        .collect()
}

fn apply(a: &CscMatrix, rho_rows: &[f64], sigma: f64, v: &[f64], ax: &mut [f64], out: &mut [f64]) {
    a.mul_vec(v, ax);
    for (y, r) in ax.iter_mut().zip(rho_rows) {
        *y *= r;
    }
    a.mul_t_vec(ax, out);
    for (o, vi) in out.iter_mut().zip(v) {
        *o += sigma * vi;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[allow(clippy::too_many_arguments)]
fn pcg(
    a: &CscMatrix,
    rho_rows: &[f64],
    sigma: f64,
    precond: &[f64],
    rhs: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    w: &mut CgWork,
) -> Result<(), SolverError> {
    let n = x.len();
    let rhs_norm = dot(rhs, rhs).sqrt();
    if rhs_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(());
    }
    let tol = rel_tol * rhs_norm;
    apply(a, rho_rows, sigma, x, &mut w.ax, &mut w.q);
    for i in 0..n {
        w.r[i] = rhs[i] - w.q[i];
        w.z[i] = w.r[i] / precond[i];
        w.p[i] = w.z[i];
    }
    let mut rz = dot(&w.r, &w.z);
    for _ in 0..(10 * n).max(50) {
        if dot(&w.r, &w.r).sqrt() <= tol {
            return Ok(());
        }
        apply(a, rho_rows, sigma, &w.p, &mut w.ax, &mut w.q);
        let pq = dot(&w.p, &w.q);
        if pq <= 0.0 || !pq.is_finite() {
            return Err(SolverError::Numerical("conjugate gradient breakdown".into()));
        }
        let step = rz / pq;
        for i in 0..n {
            x[i] += step * w.p[i];
            w.r[i] -= step * w.q[i];
            w.z[i] = w.r[i] / precond[i];
        }
        let rz_new = dot(&w.r, &w.z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            w.p[i] = w.z[i] + beta * w.p[i];
        }
        w.iterations += 1;
    }
    Ok(())
}
