//! ADMM operator-splitting solver.
//!
//! Iterates, in the equilibrated space,
//!
//! ```text
//! (sigma I + A' R A) x~ = sigma x - c + A'(R (b - s) - y)
//! s~ = b - A x~
//! x  <- a x~ + (1 - a) x,        s^ = a s~ + (1 - a) s
//! s  <- Proj_K(s^ - R^-1 y)
//! y  <- y + R (s - s^)
//! ```
//!
//! so that `y` stays in the dual cone and, at a fixed point, `c + A'y = 0`.

use crate::cone::{for_each_block, svec_index, Cone};
use crate::error::SolverError;
use crate::linsys::{LinearSystem, RhoGroups};
use crate::problem::ConicProblem;
use crate::sparse::CscMatrix;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearSolverKind {
    /// Dense Cholesky below `dense_limit` variables, CG above.
    Auto,
    Dense,
    ConjugateGradient,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub max_iter: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_infeasible: f64,
    pub rho: f64,
    pub sigma: f64,
    pub relaxation: f64,
    pub adaptive_rho: bool,
    pub adaptive_rho_interval: usize,
    pub check_interval: usize,
    pub scaling_iters: usize,
    pub linear_solver: LinearSolverKind,
    pub dense_limit: usize,
    pub time_limit: Option<Duration>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            max_iter: 200_000,
            eps_abs: 1e-9,
            eps_rel: 1e-7,
            eps_infeasible: 1e-8,
            rho: 0.1,
            sigma: 1e-6,
            relaxation: 1.6,
            adaptive_rho: true,
            adaptive_rho_interval: 50,
            check_interval: 25,
            scaling_iters: 10,
            linear_solver: LinearSolverKind::Auto,
            dense_limit: 3000,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Solved,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: Status,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    /// Dual variable, in the dual cone, with `c + A'y = 0` at optimality.
    pub y: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// For infeasible problems, the normalized residual of the certificate
    /// (`|A'dy| / |dy|` or `|dist(-A dx, K)| / |dx|`).
    pub certificate_residual: Option<f64>,
    /// Primal infeasibility certificate in the original space, if found.
    pub certificate: Option<Vec<f64>>,
    pub solve_time: Duration,
    pub rho_updates: usize,
    pub cg_iterations: usize,
}

struct Scaling {
    d: Vec<f64>,
    e: Vec<f64>,
    cost: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn clamp_norm(v: f64) -> f64 {
    if v < 1e-4 {
        1.0
    } else {
        v.min(1e4)
    }
}

/// Modified Ruiz equilibration. Rows of nonnegative and zero cones are
/// scaled individually; a PSD block of order `k` is scaled by a diagonal
/// congruence `S -> D S D`, so entry `(i, j)` gets `d_i d_j` and the scaled
/// cone is the same cone.
fn equilibrate(a: &mut CscMatrix, c: &mut [f64], b: &mut [f64], cones: &[Cone], iters: usize) -> Scaling {
    let mut d = vec![1.0; a.ncols];
    let mut e = vec![1.0; a.nrows];
    for _ in 0..iters {
        let dc: Vec<f64> = a.col_inf_norms().into_iter().map(|v| 1.0 / clamp_norm(v).sqrt()).collect();
        let norms = a.row_inf_norms();
        let mut er: Vec<f64> = norms.iter().map(|&v| 1.0 / clamp_norm(v).sqrt()).collect();
        let mut lo = 0;
        for cone in cones {
            let dim = cone.dim();
            if let Cone::Psd(k) = *cone {
                let mut peak = vec![0.0f64; k];
                for j in 0..k {
                    for i in j..k {
                        let v = norms[lo + svec_index(k, i, j)];
                        peak[i] = peak[i].max(v);
                        peak[j] = peak[j].max(v);
                    }
                }
                let dk: Vec<f64> = peak.iter().map(|&v| 1.0 / clamp_norm(v).powf(0.25)).collect();
                for j in 0..k {
                    for i in j..k {
                        er[lo + svec_index(k, i, j)] = dk[i] * dk[j];
                    }
                }
            }
            lo += dim;
        }
        a.scale(&er, &dc);
        for (di, s) in d.iter_mut().zip(&dc) {
            *di *= s;
        }
        for (ei, s) in e.iter_mut().zip(&er) {
            *ei *= s;
        }
    }
    for (ci, di) in c.iter_mut().zip(&d) {
        *ci *= di;
    }
    for (bi, ei) in b.iter_mut().zip(&e) {
        *bi *= ei;
    }
    let cost = 1.0 / clamp_norm(inf_norm(c));
    c.iter_mut().for_each(|v| *v *= cost);
    Scaling { d, e, cost }
}

struct Workspace {
    xt: Vec<f64>,
    st: Vec<f64>,
    rhs: Vec<f64>,
    tmp_m: Vec<f64>,
}

/// One relaxed ADMM sweep, `[x; s; y] -> [x+; s+; y+]`.
struct Sweep<'a> {
    a: &'a CscMatrix,
    b: &'a [f64],
    c: &'a [f64],
    cones: &'a [Cone],
    rho_rows: &'a [f64],
    sigma: f64,
    alpha: f64,
    cg_tol: f64,
}

impl Sweep<'_> {
    fn apply(&self, lin: &mut LinearSystem, u: &[f64], out: &mut [f64], ws: &mut Workspace) -> Result<(), SolverError> {
        let n = self.c.len();
        let m = self.b.len();
        let (x, rest) = u.split_at(n);
        let (s, y) = rest.split_at(m);
        let (xo, rest) = out.split_at_mut(n);
        let (so, yo) = rest.split_at_mut(m);
        let (alpha, rho) = (self.alpha, self.rho_rows);
        for i in 0..m {
            ws.tmp_m[i] = rho[i] * (self.b[i] - s[i]) - y[i];
        }
        self.a.mul_t_vec(&ws.tmp_m, &mut ws.rhs);
        for i in 0..n {
            ws.rhs[i] += self.sigma * x[i] - self.c[i];
        }
        lin.solve(self.a, rho, self.sigma, &ws.rhs, &mut ws.xt, self.cg_tol)?;
        self.a.mul_vec(&ws.xt, &mut ws.st);
        for i in 0..m {
            ws.st[i] = alpha * (self.b[i] - ws.st[i]) + (1.0 - alpha) * s[i];
        }
        for i in 0..n {
            xo[i] = alpha * ws.xt[i] + (1.0 - alpha) * x[i];
        }
        for i in 0..m {
            so[i] = ws.st[i] - y[i] / rho[i];
        }
        project(self.cones, so);
        for i in 0..m {
            yo[i] = y[i] + rho[i] * (so[i] - ws.st[i]);
        }
        Ok(())
    }
}

fn project(cones: &[Cone], v: &mut [f64]) {
    for_each_block(cones, v, |cone, blk| cone.project(blk));
}

fn project_dual(cones: &[Cone], v: &mut [f64]) {
    for_each_block(cones, v, |cone, blk| cone.project_dual(blk));
}

struct Residuals {
    primal: f64,
    dual: f64,
    gap: f64,
    eps_primal: f64,
    eps_dual: f64,
    eps_gap: f64,
    pobj: f64,
    dobj: f64,
    // Scaled-space ratios used for penalty adaptation.
    primal_scaled_rel: f64,
    dual_scaled_rel: f64,
}

impl Residuals {
    fn converged(&self) -> bool {
        self.primal <= self.eps_primal && self.dual <= self.eps_dual && self.gap <= self.eps_gap
    }

    fn merit(&self) -> f64 {
        (self.primal / self.eps_primal).max(self.dual / self.eps_dual).max(self.gap / self.eps_gap)
    }
}

/// Solve a conic program. Returns `Err` only on malformed data or
/// numerical breakdown; infeasibility and iteration limits are reported
/// through [`Solution::status`].
pub fn solve(problem: &ConicProblem, settings: &Settings) -> Result<Solution, SolverError> {
    let start = Instant::now();
    let n = problem.num_vars();
    let m = problem.num_rows();
    let cones = &problem.cones;

    let mut a = problem.a.clone();
    let mut c = problem.c.clone();
    let mut b = problem.b.clone();
    let sc = equilibrate(&mut a, &mut c, &mut b, cones, settings.scaling_iters);

    // One penalty per cone; equality rows get a much stiffer one.
    let mut ranges = Vec::with_capacity(cones.len());
    let mut lo = 0;
    for cone in cones {
        ranges.push((lo, lo + cone.dim()));
        lo += cone.dim();
    }
    let groups = RhoGroups { ranges };
    let stiff: Vec<f64> = cones
        .iter()
        .map(|c| if matches!(c, Cone::Zero(_)) { 1e3 } else { 1.0 })
        .collect();
    let mut rho_base = settings.rho;
    let mut rho: Vec<f64> = stiff.iter().map(|s| s * rho_base).collect();
    let expand = |rho: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; m];
        for (&(lo, hi), r) in groups.ranges.iter().zip(rho) {
            out[lo..hi].iter_mut().for_each(|v| *v = *r);
        }
        out
    };
    let mut rho_rows = expand(&rho);
    let sigma = settings.sigma;

    let use_dense = match settings.linear_solver {
        LinearSolverKind::Dense => true,
        LinearSolverKind::ConjugateGradient => false,
        LinearSolverKind::Auto => n <= settings.dense_limit,
    };
    let mut lin = if use_dense {
        LinearSystem::dense(&a, &groups, &rho, sigma)?
    } else {
        LinearSystem::cg(&a, &rho_rows, sigma)
    };

    let alpha = settings.relaxation;
    let dim = n + 2 * m;
    // State u = [x; s; y]; f = T(u) is one ADMM sweep from u.
    let mut u = vec![0.0; dim];
    let mut f = vec![0.0; dim];
    let mut ws = Workspace {
        xt: vec![0.0; n],
        st: vec![0.0; m],
        rhs: vec![0.0; n],
        tmp_m: vec![0.0; m],
    };
    let mut tmp_m = vec![0.0; m];
    let mut tmp_n = vec![0.0; n];

    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut last_res: Option<Residuals> = None;
    let mut rho_updates = 0usize;
    let mut last_rho_update = 0usize;
    let mut status = Status::MaxIterations;
    let mut certificate = None;
    let mut certificate_residual = None;
    let mut iter = 0usize;
    let mut cg_tol = 1e-4;
    let rho_lo = (settings.rho * 1e-3).max(1e-6);
    let rho_hi = (settings.rho * 1e3).min(1e6);

    while iter < settings.max_iter {
        if iter > 0 {
            std::mem::swap(&mut u, &mut f);
        }
        iter += 1;
        let sweep = Sweep {
            a: &a,
            b: &b,
            c: &c,
            cones,
            rho_rows: &rho_rows,
            sigma,
            alpha,
            cg_tol,
        };
        sweep.apply(&mut lin, &u, &mut f, &mut ws)?;

        let check = iter.is_multiple_of(settings.check_interval) || iter == settings.max_iter;
        if check {
            if f.iter().any(|v| !v.is_finite()) {
                return Err(SolverError::Numerical(format!("non-finite iterate at iteration {iter}")));
            }
            let (x, rest) = f.split_at(n);
            let (s, y) = rest.split_at(m);
            let res = residuals(&a, &c, &b, &sc, x, s, y, &problem.b, settings, &mut tmp_m, &mut tmp_n);
            cg_tol = (1e-4 / (1.0 + iter as f64 / 100.0).powf(1.5)).max(1e-12);
            log::trace!(
                "iter {iter}: rp {:.3e}, rd {:.3e}, gap {:.3e}, pobj {:.6e}, rho {:.2e}",
                res.primal,
                res.dual,
                res.gap,
                res.pobj,
                rho_base
            );

            if best.as_ref().is_none_or(|bst| res.merit() < bst.0) {
                best = Some((res.merit(), f.clone(), iter));
            }
            if res.converged() {
                status = Status::Solved;
                last_res = Some(res);
                break;
            }

            let y_prev = &u[n + m..];
            let x_prev = &u[..n];
            if let Some(r) = primal_infeasibility(&a, &b, &sc, cones, y, y_prev, settings.eps_infeasible) {
                status = Status::PrimalInfeasible;
                certificate_residual = Some(r);
                let dy: Vec<f64> = y.iter().zip(y_prev).zip(&sc.e).map(|((a, b), e)| (a - b) * e).collect();
                let nrm = inf_norm(&dy);
                certificate = Some(dy.iter().map(|v| v / nrm).collect());
                last_res = Some(res);
                break;
            }
            if let Some(r) = dual_infeasibility(&a, &c, &sc, cones, x, x_prev, settings.eps_infeasible) {
                status = Status::DualInfeasible;
                certificate_residual = Some(r);
                last_res = Some(res);
                break;
            }

            if settings.adaptive_rho && iter - last_rho_update >= settings.adaptive_rho_interval {
                let ratio = (res.primal_scaled_rel / res.dual_scaled_rel.max(1e-30)).sqrt();
                if ratio.is_finite() && !(0.2..=5.0).contains(&ratio) {
                    let new = (rho_base * ratio).clamp(rho_lo, rho_hi);
                    if new != rho_base {
                        rho_base = new;
                        rho = stiff.iter().map(|s| s * rho_base).collect();
                        rho_rows = expand(&rho);
                        lin.update_rho(&a, &rho, &rho_rows, sigma)?;
                        rho_updates += 1;
                        last_rho_update = iter;
                    }
                }
            }
            if let Some(limit) = settings.time_limit {
                if start.elapsed() > limit {
                    status = Status::TimeLimit;
                    last_res = Some(res);
                    break;
                }
            }
            last_res = Some(res);
        }
    }

    let (mut x, rest) = f.split_at(n);
    let (mut s, mut y) = rest.split_at(m);
    let best_state;
    if matches!(status, Status::MaxIterations | Status::TimeLimit) {
        if let Some((_, bf, _)) = best.take() {
            best_state = bf;
            x = &best_state[..n];
            s = &best_state[n..n + m];
            y = &best_state[n + m..];
            last_res = Some(residuals(&a, &c, &b, &sc, x, s, y, &problem.b, settings, &mut tmp_m, &mut tmp_n));
        }
    }
    let res = match last_res {
        Some(r) => r,
        None => residuals(&a, &c, &b, &sc, x, s, y, &problem.b, settings, &mut tmp_m, &mut tmp_n),
    };
    log::debug!(
        "sdp: status {:?} after {} iterations, rp {:.3e}, rd {:.3e}, gap {:.3e}, rho {:.3e}",
        status,
        iter,
        res.primal,
        res.dual,
        res.gap,
        rho_base
    );

    let x_out: Vec<f64> = x.iter().zip(&sc.d).map(|(v, d)| v * d).collect();
    let s_out: Vec<f64> = s.iter().zip(&sc.e).map(|(v, e)| v / e).collect();
    let y_out: Vec<f64> = y.iter().zip(&sc.e).map(|(v, e)| v * e / sc.cost).collect();
    Ok(Solution {
        status,
        x: x_out,
        s: s_out,
        y: y_out,
        iterations: iter,
        primal_residual: res.primal,
        dual_residual: res.dual,
        gap: res.gap,
        primal_objective: res.pobj,
        dual_objective: res.dobj,
        certificate_residual,
        certificate,
        solve_time: start.elapsed(),
        rho_updates,
        cg_iterations: lin.cg_iterations(),
    })
}

#[allow(clippy::too_many_arguments)]
fn residuals(
    a: &CscMatrix,
    c: &[f64],
    b: &[f64],
    sc: &Scaling,
    x: &[f64],
    s: &[f64],
    y: &[f64],
    b_orig: &[f64],
    settings: &Settings,
    tmp_m: &mut [f64],
    tmp_n: &mut [f64],
) -> Residuals {
    let m = b.len();
    a.mul_vec(x, tmp_m);
    let ax_norm = tmp_m.iter().zip(&sc.e).fold(0.0f64, |acc, (v, e)| acc.max((v / e).abs()));
    let ax_scaled = inf_norm(tmp_m);
    let mut rp = 0.0f64;
    let mut rp_scaled = 0.0f64;
    for i in 0..m {
        let r = tmp_m[i] + s[i] - b[i];
        rp = rp.max((r / sc.e[i]).abs());
        rp_scaled = rp_scaled.max(r.abs());
    }
    let s_norm = s.iter().zip(&sc.e).fold(0.0f64, |acc, (v, e)| acc.max((v / e).abs()));
    let s_scaled = inf_norm(s);
    let b_norm = inf_norm(b_orig);

    a.mul_t_vec(y, tmp_n);
    let aty_norm = tmp_n.iter().zip(&sc.d).fold(0.0f64, |acc, (v, d)| acc.max((v / d).abs())) / sc.cost;
    let aty_scaled = inf_norm(tmp_n);
    let c_norm = c.iter().zip(&sc.d).fold(0.0f64, |acc, (v, d)| acc.max((v / d).abs())) / sc.cost;
    let c_scaled = inf_norm(c);
    let mut rd = 0.0f64;
    let mut rd_scaled = 0.0f64;
    for j in 0..c.len() {
        let r = c[j] + tmp_n[j];
        rd = rd.max((r / sc.d[j]).abs());
        rd_scaled = rd_scaled.max(r.abs());
    }
    rd /= sc.cost;

    let pobj = dot(c, x) / sc.cost;
    let dobj = -dot(b, y) / sc.cost;
    let gap = (pobj - dobj).abs();

    Residuals {
        primal: rp,
        dual: rd,
        gap,
        eps_primal: settings.eps_abs + settings.eps_rel * ax_norm.max(s_norm).max(b_norm),
        eps_dual: settings.eps_abs + settings.eps_rel * aty_norm.max(c_norm),
        eps_gap: settings.eps_abs + settings.eps_rel * pobj.abs().max(dobj.abs()).max(1.0),
        pobj,
        dobj,
        primal_scaled_rel: rp_scaled / ax_scaled.max(s_scaled).max(1e-30),
        dual_scaled_rel: rd_scaled / aty_scaled.max(c_scaled).max(1e-30),
    }
}

/// Look for `dy` with `A'dy = 0`, `dy in K*`, `b'dy < 0`.
fn primal_infeasibility(
    a: &CscMatrix,
    b: &[f64],
    sc: &Scaling,
    cones: &[Cone],
    y: &[f64],
    y_prev: &[f64],
    eps: f64,
) -> Option<f64> {
    let dy: Vec<f64> = y.iter().zip(y_prev).map(|(a, b)| a - b).collect();
    let dy_orig: Vec<f64> = dy.iter().zip(&sc.e).map(|(v, e)| v * e).collect();
    let norm = inf_norm(&dy_orig);
    if norm < 1e-30 {
        return None;
    }
    let bty = dot(b, &dy);
    if bty >= -eps * norm {
        return None;
    }
    let mut aty = vec![0.0; a.ncols];
    a.mul_t_vec(&dy, &mut aty);
    let aty_norm = aty.iter().zip(&sc.d).fold(0.0f64, |acc, (v, d)| acc.max((v / d).abs()));
    if aty_norm > eps * norm {
        return None;
    }
    let mut proj = dy_orig.clone();
    project_dual(cones, &mut proj);
    let dist = inf_norm(&proj.iter().zip(&dy_orig).map(|(p, v)| p - v).collect::<Vec<_>>());
    if dist > eps * norm {
        return None;
    }
    Some(aty_norm / norm)
}

/// Look for `dx` with `-A dx in K` and `c'dx < 0`.
fn dual_infeasibility(
    a: &CscMatrix,
    c: &[f64],
    sc: &Scaling,
    cones: &[Cone],
    x: &[f64],
    x_prev: &[f64],
    eps: f64,
) -> Option<f64> {
    let dx: Vec<f64> = x.iter().zip(x_prev).map(|(a, b)| a - b).collect();
    let norm = dx.iter().zip(&sc.d).fold(0.0f64, |acc, (v, d)| acc.max((v * d).abs()));
    if norm < 1e-30 {
        return None;
    }
    if dot(c, &dx) / sc.cost >= -eps * norm {
        return None;
    }
    let mut adx = vec![0.0; a.nrows];
    a.mul_vec(&dx, &mut adx);
    let neg: Vec<f64> = adx.iter().zip(&sc.e).map(|(v, e)| -v / e).collect();
    let mut proj = neg.clone();
    project(cones, &mut proj);
    let dist = inf_norm(&proj.iter().zip(&neg).map(|(p, v)| p - v).collect::<Vec<_>>());
    if dist > eps * norm {
        return None;
    }
    Some(dist / norm)
}
