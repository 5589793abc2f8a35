//! EKF and UKF baselines on the Euler-discretized model
//! `x+ = x + T (A x + f(x) + B_u u)` with a linear measurement `y = C x`.

use crate::error::{check_len, Error, Result};
use crate::linalg::symmetrize;
use crate::model::ModeledSystem;
use crate::sim::InputSchedule;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct KfConfig {
    /// Sampling period (s).
    pub t: f64,
    /// Scalar multiples of the identity.
    pub q: f64,
    pub r: f64,
    pub p0: f64,
}

impl Default for KfConfig {
    fn default() -> Self {
        Self {
            t: 0.1,
            q: 1e-8,
            r: 1e-8,
            p0: 1e-6,
        }
    }
}

impl KfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::Config(format!("sampling period must be positive, got {}", self.t)));
        }
        for (name, v) in [("Q", self.q), ("R", self.r), ("P0", self.p0)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} scale must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct UkfConfig {
    pub alpha_sigma: f64,
    pub beta_sigma: f64,
    pub kappa_sigma: f64,
}

impl Default for UkfConfig {
    fn default() -> Self {
        Self {
            alpha_sigma: 0.1,
            beta_sigma: 2.0,
            kappa_sigma: -4.0,
        }
    }
}

/// Sigma-point weights for an `n`-dimensional state.
#[derive(Debug, Clone)]
pub struct SigmaWeights {
    /// `n + lambda`.
    pub spread: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

impl UkfConfig {
    pub fn weights(&self, n: usize) -> Result<SigmaWeights> {
        let nf = n as f64;
        let lambda = self.alpha_sigma * self.alpha_sigma * (nf + self.kappa_sigma) - nf;
        let spread = nf + lambda;
        if spread.abs() < 1e-14 || !spread.is_finite() {
            return Err(Error::Config(format!("sigma-point scaling gives n + lambda = {spread}")));
        }
        let wi = 1.0 / (2.0 * spread);
        let mut mean = vec![wi; 2 * n + 1];
        let mut cov = mean.clone();
        mean[0] = lambda / spread;
        cov[0] = mean[0] + 1.0 - self.alpha_sigma * self.alpha_sigma + self.beta_sigma;
        Ok(SigmaWeights { spread, mean, cov })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FilterDiagnostics {
    /// Innovation covariances that needed the `1e-12 I` regularization.
    pub regularized_innovations: usize,
    /// Covariance square roots with negative eigenvalues clipped.
    pub clipped_sqrt: usize,
    /// Updated UKF covariances pushed back to PSD.
    pub clipped_updates: usize,
    /// Smallest covariance eigenvalue seen after an update.
    pub min_cov_eig: f64,
    pub diverged: bool,
}

/// One filter's estimate and covariance.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
}

/// `x + T (A x + f(x) + B_u u)`.
pub fn discretize(sys: &ModeledSystem, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    x + sys.rhs(x, u) * t
}

/// Kalman update through a linear sensor; shared by both filters.
fn linear_update(
    x: &DVector<f64>,
    p: &DMatrix<f64>,
    y: &DVector<f64>,
    c: &DMatrix<f64>,
    r: f64,
    diag: &mut FilterDiagnostics,
) -> Result<FilterState> {
    let pm = c.nrows();
    let mut s = c * p * c.transpose() + DMatrix::identity(pm, pm) * r;
    s = symmetrize(&s);
    let chol = match s.clone().cholesky() {
        Some(ch) => ch,
        None => {
            diag.regularized_innovations += 1;
            (s + DMatrix::identity(pm, pm) * 1e-12)
                .cholesky()
                .ok_or_else(|| Error::Numerical("innovation covariance is singular".into()))?
        }
    };
    // K = P C' S^-1
    let pct = p * c.transpose();
    let k = chol.solve(&pct.transpose()).transpose();
    let x_new = x + &k * (y - c * x);
    let n = x.len();
    let p_new = symmetrize(&((DMatrix::identity(n, n) - &k * c) * p));
    Ok(FilterState { x: x_new, p: p_new })
}

pub fn ekf_step(
    st: &FilterState,
    u: &DVector<f64>,
    y: &DVector<f64>,
    cfg: &KfConfig,
    sys: &ModeledSystem,
    c: &DMatrix<f64>,
    diag: &mut FilterDiagnostics,
) -> Result<FilterState> {
    let n = sys.n();
    let f = DMatrix::identity(n, n) + (&sys.a + sys.jacobian(&st.x)) * cfg.t;
    let x_pred = discretize(sys, cfg.t, &st.x, u);
    let p_pred = &f * &st.p * f.transpose() + DMatrix::identity(n, n) * cfg.q;
    linear_update(&x_pred, &p_pred, y, c, cfg.r, diag)
}

/// Symmetric square root by eigendecomposition, clipping negative
/// eigenvalues to zero. Returns whether clipping happened.
pub fn psd_sqrt(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let eig = symmetrize(m).symmetric_eigen();
    let mut clipped = false;
    let d = eig.eigenvalues.map(|v| {
        if v < 0.0 {
            clipped = true;
            0.0
        } else {
            v.sqrt()
        }
    });
    let v = &eig.eigenvectors;
    (v * DMatrix::from_diagonal(&d) * v.transpose(), clipped)
}

#[allow(clippy::too_many_arguments)]
pub fn ukf_step(
    st: &FilterState,
    u: &DVector<f64>,
    y: &DVector<f64>,
    ucfg: &UkfConfig,
    cfg: &KfConfig,
    sys: &ModeledSystem,
    c: &DMatrix<f64>,
    diag: &mut FilterDiagnostics,
) -> Result<FilterState> {
    let n = sys.n();
    let w = ucfg.weights(n)?;
    let (root, clipped) = psd_sqrt(&(&st.p * w.spread));
    if clipped {
        diag.clipped_sqrt += 1;
        if diag.clipped_sqrt == 1 {
            log::warn!("UKF covariance had negative eigenvalues; clipped to zero");
        }
    }
    let mut chi = Vec::with_capacity(2 * n + 1);
    chi.push(discretize(sys, cfg.t, &st.x, u));
    for i in 0..n {
        let col = root.column(i);
        chi.push(discretize(sys, cfg.t, &(&st.x + col), u));
    }
    for i in 0..n {
        let col = root.column(i);
        chi.push(discretize(sys, cfg.t, &(&st.x - col), u));
    }
    let mut mean = DVector::zeros(n);
    for (wi, c) in w.mean.iter().zip(&chi) {
        mean.axpy(*wi, c, 1.0);
    }
    let mut p_pred = DMatrix::identity(n, n) * cfg.q;
    for (wi, c) in w.cov.iter().zip(&chi) {
        let d = c - &mean;
        p_pred.ger(*wi, &d, &d, 1.0);
    }
    let mut out = linear_update(&mean, &symmetrize(&p_pred), y, c, cfg.r, diag)?;
    let eig = out.p.clone().symmetric_eigen();
    if eig.eigenvalues.min() < 0.0 {
        diag.clipped_updates += 1;
        let d = eig.eigenvalues.map(|v| v.max(0.0));
        let v = &eig.eigenvectors;
        out.p = symmetrize(&(v * DMatrix::from_diagonal(&d) * v.transpose()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Ekf,
    Ukf,
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    pub kind: FilterKind,
    /// Sample times, starting at 0.
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub diagnostics: FilterDiagnostics,
    pub elapsed: Duration,
}

/// Run a filter over measurements `ys[k]` taken at `k T`. The first sample
/// only fixes the time origin; each later sample triggers predict+update
/// with the input held over the preceding period. A non-finite estimate
/// stops the run and marks it diverged; the remaining samples keep the
/// last finite estimate.
#[allow(clippy::too_many_arguments)]
pub fn run_filter(
    kind: FilterKind,
    sys: &ModeledSystem,
    c: &DMatrix<f64>,
    inputs: &InputSchedule,
    ys: &[DVector<f64>],
    x0: &DVector<f64>,
    cfg: &KfConfig,
    ucfg: &UkfConfig,
) -> Result<FilterRun> {
    cfg.validate()?;
    let n = sys.n();
    check_len("filter initial state", n, x0.len())?;
    check_len("output matrix columns", n, c.ncols())?;
    inputs.validate(sys.m())?;
    if kind == FilterKind::Ukf {
        ucfg.weights(n)?;
    }
    for y in ys {
        check_len("measurement", c.nrows(), y.len())?;
    }
    let mut diag = FilterDiagnostics {
        min_cov_eig: cfg.p0,
        ..FilterDiagnostics::default()
    };
    let mut st = FilterState {
        x: x0.clone(),
        p: DMatrix::identity(n, n) * cfg.p0,
    };
    let mut t = Vec::with_capacity(ys.len());
    let mut xs = Vec::with_capacity(ys.len());
    let mut elapsed = Duration::ZERO;
    if !ys.is_empty() {
        t.push(0.0);
        xs.push(st.x.clone());
    }
    for (k, y) in ys.iter().enumerate().skip(1) {
        let tk = k as f64 * cfg.t;
        if !diag.diverged {
            let u = inputs.at(tk - cfg.t);
            let started = Instant::now();
            let next = match kind {
                FilterKind::Ekf => ekf_step(&st, &u, y, cfg, sys, c, &mut diag),
                FilterKind::Ukf => ukf_step(&st, &u, y, ucfg, cfg, sys, c, &mut diag),
            };
            elapsed += started.elapsed();
            match next {
                Ok(next) if next.x.iter().all(|v| v.is_finite()) && next.p.iter().all(|v| v.is_finite()) => {
                    let emin = next.p.clone().symmetric_eigenvalues().min();
                    diag.min_cov_eig = diag.min_cov_eig.min(emin);
                    st = next;
                }
                Ok(_) | Err(Error::Numerical(_)) => {
                    log::warn!("{kind:?} diverged at t = {tk:.1} s");
                    diag.diverged = true;
                }
                Err(e) => return Err(e),
            }
        }
        t.push(tk);
        xs.push(st.x.clone());
    }
    Ok(FilterRun {
        kind,
        t,
        x: xs,
        diagnostics: diag,
        elapsed,
    })
}
