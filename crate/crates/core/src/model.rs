//! Nonlinear state-space density model of a stretched highway.
//!
//! States are ordered as mainline segments, then on-ramps, then off-ramps,
//! each group sorted by segment. All densities are in veh/m.

use crate::error::{check_len, Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenshieldParams {
    /// Free-flow speed (m/s).
    pub v_f: f64,
    /// Jam density (veh/m).
    pub rho_m: f64,
    /// Segment length (m).
    pub l: f64,
}

impl GreenshieldParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("v_f", self.v_f), ("rho_m", self.rho_m), ("l", self.l)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn rho_c(&self) -> f64 {
        self.rho_m / 2.0
    }

    pub fn delta(&self) -> f64 {
        self.v_f / (self.l * self.rho_m)
    }

    /// `v_f / l`, the magnitude of every nonzero entry of `A1`.
    pub fn rate(&self) -> f64 {
        self.v_f / self.l
    }

    /// Greenshield flow `Q(rho) = v_f rho (1 - rho / rho_m)` (veh/s).
    pub fn flow(&self, rho: f64) -> f64 {
        self.v_f * rho - self.v_f / self.rho_m * rho * rho
    }

    pub fn capacity(&self) -> f64 {
        self.v_f * self.rho_m / 4.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffRamp {
    /// 1-based segment number.
    pub segment: usize,
    /// Exit ratio.
    pub alpha: f64,
}

/// Declarative highway description. Segment numbers are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighwayConfig {
    #[serde(rename = "N")]
    pub segments: usize,
    #[serde(default)]
    pub on_ramps: Vec<usize>,
    #[serde(default)]
    pub off_ramps: Vec<OffRamp>,
    #[serde(flatten)]
    pub params: GreenshieldParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficMode {
    Uncongested,
    Congested,
}

/// A highway plus the traffic mode it operates in; the on-disk format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighwaySpec {
    #[serde(flatten)]
    pub config: HighwayConfig,
    pub mode: TrafficMode,
}

impl HighwaySpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut spec: HighwaySpec = serde_json::from_str(text)?;
        spec.config.normalize()?;
        Ok(spec)
    }
}

impl HighwayConfig {
    pub fn new(segments: usize, on_ramps: Vec<usize>, off_ramps: Vec<OffRamp>, params: GreenshieldParams) -> Result<Self> {
        let mut cfg = Self {
            segments,
            on_ramps,
            off_ramps,
            params,
        };
        cfg.normalize()?;
        Ok(cfg)
    }

    /// Highway without ramps.
    pub fn plain(segments: usize, params: GreenshieldParams) -> Result<Self> {
        Self::new(segments, Vec::new(), Vec::new(), params)
    }

    /// Sort ramps by segment and check every invariant.
    pub fn normalize(&mut self) -> Result<()> {
        self.on_ramps.sort_unstable();
        self.off_ramps.sort_by_key(|r| r.segment);
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let n = self.segments;
        if n < 2 {
            return Err(Error::Config(format!("a highway needs at least 2 segments, got {n}")));
        }
        let interior = |s: usize| s >= 2 && s < n;
        for w in self.on_ramps.windows(2) {
            if w[0] == w[1] {
                return Err(Error::Config(format!("duplicate on-ramp on segment {}", w[0])));
            }
        }
        for w in self.off_ramps.windows(2) {
            if w[0].segment == w[1].segment {
                return Err(Error::Config(format!("duplicate off-ramp on segment {}", w[0].segment)));
            }
        }
        for &s in &self.on_ramps {
            if !interior(s) {
                return Err(Error::Config(format!("on-ramp segment {s} outside 2..={}", n - 1)));
            }
        }
        for r in &self.off_ramps {
            if !interior(r.segment) {
                return Err(Error::Config(format!("off-ramp segment {} outside 2..={}", r.segment, n - 1)));
            }
            if !(0.0..=1.0).contains(&r.alpha) {
                return Err(Error::Config(format!("exit ratio {} on segment {} outside [0, 1]", r.alpha, r.segment)));
            }
        }
        Ok(())
    }

    pub fn n_on(&self) -> usize {
        self.on_ramps.len()
    }

    pub fn n_off(&self) -> usize {
        self.off_ramps.len()
    }

    /// Number of segments carrying both an on-ramp and an off-ramp.
    pub fn n_shared(&self) -> usize {
        self.off_ramps.iter().filter(|r| self.on_ramps.contains(&r.segment)).count()
    }

    pub fn state_dim(&self) -> usize {
        self.segments + self.n_on() + self.n_off()
    }

    pub fn input_dim(&self) -> usize {
        1 + self.n_on() + self.n_off()
    }

    /// 0-based state index of the `k`-th on-ramp.
    pub fn on_state(&self, k: usize) -> usize {
        self.segments + k
    }

    /// 0-based state index of the `k`-th off-ramp.
    pub fn off_state(&self, k: usize) -> usize {
        self.segments + self.n_on() + k
    }

    /// Exit ratio of the off-ramp on a segment, if any.
    pub fn off_ramp_on(&self, segment: usize) -> Option<f64> {
        self.off_ramps.iter().find(|r| r.segment == segment).map(|r| r.alpha)
    }
}

/// Assembled model `x' = A x + f(x) + B_u u`.
#[derive(Debug, Clone)]
pub struct ModeledSystem {
    pub mode: TrafficMode,
    pub config: HighwayConfig,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    /// Diagonal of `A3`.
    pub a3: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b_u: DMatrix<f64>,
    pub delta: f64,
    /// `f_i(x) = delta * sum_k c_ik x_k^2`, stored as `(k, c_ik)` per row.
    quad: Vec<Vec<(usize, f64)>>,
}

pub fn build_model(config: &HighwayConfig, mode: TrafficMode) -> Result<ModeledSystem> {
    config.validate()?;
    let ns = config.segments;
    let ni = config.n_on();
    let no = config.n_off();
    let n = config.state_dim();
    let a_rate = config.params.rate();
    let inv_l = 1.0 / config.params.l;

    let mut a1 = DMatrix::zeros(ns, ns);
    for i in 0..ns {
        match mode {
            TrafficMode::Uncongested => {
                a1[(i, i)] = -a_rate;
                if i > 0 {
                    a1[(i, i - 1)] = a_rate;
                }
            }
            TrafficMode::Congested => {
                a1[(i, i)] = a_rate;
                if i + 1 < ns {
                    a1[(i, i + 1)] = -a_rate;
                }
            }
        }
    }

    let mut a2 = DMatrix::zeros(ns, ni + no);
    let mut a3 = DVector::zeros(ni + no);
    for (j, &seg) in config.on_ramps.iter().enumerate() {
        a2[(seg - 1, j)] = a_rate;
        a3[j] = -a_rate;
    }
    for (k, r) in config.off_ramps.iter().enumerate() {
        a2[(r.segment - 1, ni + k)] = -r.alpha * a_rate;
        a3[ni + k] = r.alpha * a_rate;
    }

    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (ns, ns)).copy_from(&a1);
    a.view_mut((0, ns), (ns, ni + no)).copy_from(&a2);
    for j in 0..(ni + no) {
        a[(ns + j, ns + j)] = a3[j];
    }

    let mut b_u = DMatrix::zeros(n, 1 + ni + no);
    match mode {
        TrafficMode::Uncongested => b_u[(0, 0)] = inv_l,
        TrafficMode::Congested => b_u[(ns - 1, 0)] = -inv_l,
    }
    for j in 0..ni {
        b_u[(config.on_state(j), 1 + j)] = inv_l;
    }
    for k in 0..no {
        b_u[(config.off_state(k), 1 + ni + k)] = -inv_l;
    }

    let mut quad: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, row) in quad.iter_mut().enumerate().take(ns) {
        match mode {
            TrafficMode::Uncongested => {
                row.push((i, 1.0));
                if i > 0 {
                    row.push((i - 1, -1.0));
                }
            }
            TrafficMode::Congested => {
                row.push((i, -1.0));
                if i + 1 < ns {
                    row.push((i + 1, 1.0));
                }
            }
        }
    }
    for (j, &seg) in config.on_ramps.iter().enumerate() {
        quad[seg - 1].push((config.on_state(j), -1.0));
        quad[config.on_state(j)].push((config.on_state(j), 1.0));
    }
    for (k, r) in config.off_ramps.iter().enumerate() {
        quad[r.segment - 1].push((config.off_state(k), r.alpha));
        quad[config.off_state(k)].push((config.off_state(k), -r.alpha));
    }

    Ok(ModeledSystem {
        mode,
        config: config.clone(),
        a1,
        a2,
        a3,
        a,
        b_u,
        delta: config.params.delta(),
        quad,
    })
}

pub fn eval_nonlinearity(sys: &ModeledSystem, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("state", sys.n(), x.len())?;
    Ok(sys.f(x))
}

pub fn eval_dynamics(sys: &ModeledSystem, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("state", sys.n(), x.len())?;
    check_len("input", sys.m(), u.len())?;
    Ok(sys.rhs(x, u))
}

pub fn jacobian_f(sys: &ModeledSystem, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_len("state", sys.n(), x.len())?;
    Ok(sys.jacobian(x))
}

impl ModeledSystem {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension `1 + N_I + N_O`.
    pub fn m(&self) -> usize {
        self.b_u.ncols()
    }

    pub fn segments(&self) -> usize {
        self.config.segments
    }

    /// Unchecked `f(x)`.
    pub fn f(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.n(),
            self.quad
                .iter()
                .map(|row| self.delta * row.iter().map(|&(k, c)| c * x[k] * x[k]).sum::<f64>()),
        )
    }

    /// Unchecked `A x + f(x) + B_u u`.
    pub fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + self.f(x) + &self.b_u * u
    }

    /// Unchecked Jacobian of `f`.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let mut j = DMatrix::zeros(n, n);
        for (i, row) in self.quad.iter().enumerate() {
            for &(k, c) in row {
                j[(i, k)] += 2.0 * self.delta * c * x[k];
            }
        }
        j
    }

    /// Quadratic coefficients of row `i` of `f`, without the factor `delta`.
    pub fn quadratic_terms(&self, i: usize) -> &[(usize, f64)] {
        &self.quad[i]
    }

    /// Copy with the nonlinearity switched off (`delta = 0`).
    pub fn linearized(&self) -> Self {
        Self {
            delta: 0.0,
            ..self.clone()
        }
    }

    /// Lower and upper corners of the operating box of the mode.
    pub fn operating_box(&self) -> (DVector<f64>, DVector<f64>) {
        let p = &self.config.params;
        let n = self.n();
        let ns = self.segments();
        let (seg_lo, seg_hi) = match self.mode {
            TrafficMode::Uncongested => (0.0, p.rho_c()),
            TrafficMode::Congested => (p.rho_c(), p.rho_m),
        };
        let lo = DVector::from_fn(n, |i, _| if i < ns { seg_lo } else { 0.0 });
        let hi = DVector::from_fn(n, |i, _| if i < ns { seg_hi } else { p.rho_m });
        (lo, hi)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        let (lo, hi) = self.operating_box();
        x.iter().zip(lo.iter().zip(hi.iter())).all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }

    /// Default starting point for equilibrium search.
    pub fn default_guess(&self) -> DVector<f64> {
        let ns = self.segments();
        let rho_m = self.config.params.rho_m;
        DVector::from_fn(self.n(), |i, _| match self.mode {
            TrafficMode::Congested if i < ns => rho_m,
            _ => 0.0,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EquilibriumOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200 }
    }
}

/// Damped Newton iteration on `A x + f(x) + B_u u = 0`, projected onto the
/// operating box, started from [`ModeledSystem::default_guess`].
pub fn find_equilibrium(sys: &ModeledSystem, u: &DVector<f64>) -> Result<DVector<f64>> {
    find_equilibrium_from(sys, u, &sys.default_guess(), EquilibriumOptions::default())
}

pub fn find_equilibrium_from(
    sys: &ModeledSystem,
    u: &DVector<f64>,
    x0: &DVector<f64>,
    opts: EquilibriumOptions,
) -> Result<DVector<f64>> {
    check_len("input", sys.m(), u.len())?;
    check_len("initial guess", sys.n(), x0.len())?;
    let (lo, hi) = sys.operating_box();
    let clamp = |x: &mut DVector<f64>| {
        for i in 0..x.len() {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
    };
    let mut x = x0.clone();
    clamp(&mut x);
    let mut g = sys.rhs(&x, u);
    let mut gnorm = g.norm();
    for _ in 0..opts.max_iter {
        if gnorm <= opts.tol {
            return Ok(x);
        }
        let jac = &sys.a + sys.jacobian(&x);
        let step = match jac.clone().lu().solve(&(-&g)) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => {
                // Singular Jacobian (e.g. at the capacity fold): regularize.
                let jt = jac.transpose();
                let lambda = 1e-12 * (jt.norm_squared() + 1.0);
                let h = &jt * &jac + DMatrix::identity(sys.n(), sys.n()) * lambda;
                h.cholesky()
                    .ok_or_else(|| Error::Equilibrium("singular Newton system".into()))?
                    .solve(&(-(&jt * &g)))
            }
        };
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-10 {
            let mut trial = &x + &step * t;
            clamp(&mut trial);
            let gt = sys.rhs(&trial, u);
            let gn = gt.norm();
            if gn < (1.0 - 1e-4 * t) * gnorm {
                x = trial;
                g = gt;
                gnorm = gn;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::Equilibrium(format!(
                "line search stalled at residual {gnorm:.3e}; the input may be inconsistent with the {:?} mode",
                sys.mode
            )));
        }
    }
    if gnorm <= opts.tol {
        return Ok(x);
    }
    Err(Error::Equilibrium(format!(
        "no convergence in {} iterations (residual {gnorm:.3e})",
        opts.max_iter
    )))
}
