//! Fixed-step RK4 simulation of the plant and the L-infinity observer under
//! proportional disturbances and parametric uncertainty.

use crate::error::{check_len, Error, Result};
use crate::io::DISPLAY_SCALE;
use crate::model::{ModeledSystem, TrafficMode};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    None,
    #[default]
    RandomProportional,
    /// `r` taken from [`DisturbanceSpec::custom_r`], one value per step, last
    /// value held.
    Custom,
}

/// `w = [g_u u r; g_x x r]` entering through `B_w = [B_u O]` and
/// `D_w = [O C]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DisturbanceSpec {
    pub kind: DisturbanceKind,
    pub gain_u: f64,
    pub gain_x: f64,
    /// veh/m to veh/km; only applied when reporting.
    pub display_scale: f64,
    pub seed: u64,
    pub custom_r: Vec<f64>,
}

impl Default for DisturbanceSpec {
    fn default() -> Self {
        Self {
            kind: DisturbanceKind::RandomProportional,
            gain_u: 0.15,
            gain_x: 0.15,
            display_scale: DISPLAY_SCALE,
            seed: 0,
            custom_r: Vec::new(),
        }
    }
}

impl DisturbanceSpec {
    pub fn none() -> Self {
        Self {
            kind: DisturbanceKind::None,
            ..Self::default()
        }
    }

    pub fn random(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// Relative perturbation of the plant: `(1 + kappa)(A x + f(x) + B_u u)`.
/// The observer keeps the nominal model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UncertaintySpec {
    pub kappa: f64,
}

impl Default for UncertaintySpec {
    fn default() -> Self {
        Self { kappa: 0.2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputSegment {
    /// Start time (s).
    pub start: f64,
    /// veh/s.
    pub u: Vec<f64>,
}

/// Piecewise-constant input, sorted by start time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputSchedule {
    Constant(Vec<f64>),
    Piecewise(Vec<InputSegment>),
}

impl InputSchedule {
    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            InputSchedule::Constant(u) => check_len("input", m, u.len()),
            InputSchedule::Piecewise(segs) => {
                if segs.is_empty() {
                    return Err(Error::Config("input schedule is empty".into()));
                }
                for w in segs.windows(2) {
                    if !(w[1].start > w[0].start) {
                        return Err(Error::Config("input schedule start times must increase".into()));
                    }
                }
                for s in segs {
                    check_len("input", m, s.u.len())?;
                }
                Ok(())
            }
        }
    }

    pub fn at(&self, t: f64) -> DVector<f64> {
        match self {
            InputSchedule::Constant(u) => DVector::from_column_slice(u),
            InputSchedule::Piecewise(segs) => {
                let idx = segs.iter().rposition(|s| s.start <= t).unwrap_or(0);
                DVector::from_column_slice(&segs[idx].u)
            }
        }
    }
}

/// Observer `x^' = A x^ + f(x^) + B_u u + L (y - C x^)` with performance
/// output `z = Z e`.
#[derive(Debug, Clone)]
pub struct ObserverGains {
    pub l: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    pub t_f: f64,
    pub dt: f64,
    /// Store every k-th step.
    pub record_every: usize,
    /// Clamp plant densities to `[0, rho_m]` after each step.
    pub clamp: bool,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            t_f: 500.0,
            dt: 0.01,
            record_every: 10,
            clamp: true,
        }
    }
}

impl SimSettings {
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_f > 0.0 && self.t_f.is_finite()) {
            return Err(Error::Config(format!("t_f must be positive, got {}", self.t_f)));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        let k = (self.t_f / self.dt).round();
        if (k * self.dt - self.t_f).abs() > 1e-9 * self.t_f {
            return Err(Error::Config(format!("t_f = {} is not a multiple of dt = {}", self.t_f, self.dt)));
        }
        Ok(k as usize)
    }
}

/// Recorded trajectories, all in SI units (veh/m).
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    /// Empty when no observer was simulated.
    pub xhat: Vec<DVector<f64>>,
    /// Measurement `C x + D_w w` at each record.
    pub y: Vec<DVector<f64>>,
    pub e_norm: Vec<f64>,
    pub z_norm: Vec<f64>,
    pub w_norm: Vec<f64>,
    /// Disturbance realization, one value per step.
    pub r: Vec<f64>,
    /// `sup_t |w(t)|` over every integration step.
    pub w_linf: f64,
    pub clamp_events: usize,
    pub observer_time: Duration,
    pub t_f: f64,
    pub dt: f64,
    pub gain_x: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ErrorMetrics {
    /// `sum_i sqrt(mean_t e_i(t)^2)` over whole seconds, veh/km.
    pub rmse: f64,
    /// Mean `|e(t)|` over whole seconds in `[t_f - 100, t_f]`, veh/km.
    pub me: f64,
    /// `|e(t_f)|`, veh/km.
    pub final_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceSummary {
    pub schema_version: u32,
    pub t_f: f64,
    pub dt: f64,
    pub records: usize,
    /// veh/km.
    pub w_linf: f64,
    pub mu: Option<f64>,
    /// `mu |w|_Linf`, veh/km.
    pub zeta: Option<f64>,
    pub metrics: Option<ErrorMetrics>,
    pub clamp_events: usize,
}

/// Pieces of the right-hand side shared by RK4 stages.
struct Dynamics<'a> {
    sys: &'a ModeledSystem,
    obs: Option<&'a ObserverGains>,
    b_w: DMatrix<f64>,
    d_w: Option<DMatrix<f64>>,
    scale: f64,
    gain_u: f64,
    gain_x: f64,
}

impl Dynamics<'_> {
    fn w(&self, x: &DVector<f64>, u: &DVector<f64>, r: f64) -> DVector<f64> {
        let m = u.len();
        DVector::from_fn(m + x.len(), |i, _| {
            if i < m {
                self.gain_u * u[i] * r
            } else {
                self.gain_x * x[i - m] * r
            }
        })
    }

    fn plant(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.sys.rhs(x, u) * self.scale + &self.b_w * w
    }

    fn observer(&self, xh: &DVector<f64>, u: &DVector<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
        let obs = self.obs?;
        Some(self.sys.rhs(xh, u) + &obs.l * (y - &obs.c * xh))
    }

    fn measure(&self, x: &DVector<f64>, w: &DVector<f64>) -> Option<DVector<f64>> {
        let obs = self.obs?;
        Some(&obs.c * x + self.d_w.as_ref()? * w)
    }
}

/// Integrate the coupled plant and observer. With `obs = None` only the
/// plant is integrated and `xhat` stays empty; the measurement is then
/// taken through `sensors` if given.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    sys: &ModeledSystem,
    obs: Option<&ObserverGains>,
    dist: &DisturbanceSpec,
    unc: Option<UncertaintySpec>,
    x0: &DVector<f64>,
    xhat0: Option<&DVector<f64>>,
    inputs: &InputSchedule,
    settings: &SimSettings,
) -> Result<SimulationTrace> {
    let n = sys.n();
    let m = sys.m();
    check_len("initial state", n, x0.len())?;
    inputs.validate(m)?;
    let steps = settings.steps()?;
    if let Some(o) = obs {
        check_len("observer gain rows", n, o.l.nrows())?;
        check_len("observer gain columns", o.c.nrows(), o.l.ncols())?;
        check_len("output matrix columns", n, o.c.ncols())?;
        check_len("performance matrix columns", n, o.z.ncols())?;
        match xhat0 {
            Some(v) => check_len("observer initial state", n, v.len())?,
            None => return Err(Error::Config("observer initial state is required".into())),
        }
    }
    if !sys.contains(x0, 1e-12) {
        log::warn!("initial plant state lies outside the operating box of the {:?} mode", sys.mode);
    }
    if let (Some(_), Some(xh)) = (obs, xhat0) {
        if !sys.contains(xh, 1e-12) {
            log::warn!("initial observer state lies outside the operating box");
        }
    }

    let c = obs.map(|o| o.c.clone());
    let (b_w, d_w) = {
        let mut b_w = DMatrix::zeros(n, m + n);
        b_w.view_mut((0, 0), (n, m)).copy_from(&sys.b_u);
        let d_w = c.as_ref().map(|c| {
            let mut d = DMatrix::zeros(c.nrows(), m + n);
            d.view_mut((0, m), (c.nrows(), n)).copy_from(c);
            d
        });
        (b_w, d_w)
    };
    let dy = Dynamics {
        sys,
        obs,
        b_w,
        d_w,
        scale: 1.0 + unc.map_or(0.0, |u| u.kappa),
        gain_u: dist.gain_u,
        gain_x: dist.gain_x,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(dist.seed);
    let mut draw = |k: usize| -> f64 {
        match dist.kind {
            DisturbanceKind::None => 0.0,
            DisturbanceKind::RandomProportional => rng.random_range(-1.0..=1.0),
            DisturbanceKind::Custom => dist.custom_r.get(k).or(dist.custom_r.last()).copied().unwrap_or(0.0),
        }
    };

    let rho_m = sys.config.params.rho_m;
    let h = settings.dt;
    let cap = steps / settings.record_every + 2;
    let mut trace = SimulationTrace {
        t: Vec::with_capacity(cap),
        x: Vec::with_capacity(cap),
        xhat: Vec::with_capacity(if obs.is_some() { cap } else { 0 }),
        y: Vec::with_capacity(cap),
        e_norm: Vec::with_capacity(cap),
        z_norm: Vec::with_capacity(cap),
        w_norm: Vec::with_capacity(cap),
        r: Vec::with_capacity(steps),
        w_linf: 0.0,
        clamp_events: 0,
        observer_time: Duration::ZERO,
        t_f: settings.t_f,
        dt: h,
        gain_x: dist.gain_x,
    };

    let mut x = x0.clone();
    let mut xh = xhat0.cloned().unwrap_or_else(|| DVector::zeros(n));
    let mut observer_time = Duration::ZERO;

    let record = |trace: &mut SimulationTrace, t: f64, x: &DVector<f64>, xh: &DVector<f64>, w: &DVector<f64>| {
        trace.t.push(t);
        trace.x.push(x.clone());
        trace.w_norm.push(w.norm());
        if let Some(o) = obs {
            let e = x - xh;
            trace.e_norm.push(e.norm());
            trace.z_norm.push((&o.z * &e).norm());
            trace.xhat.push(xh.clone());
            trace.y.push(dy.measure(x, w).unwrap_or_else(|| DVector::zeros(0)));
        }
    };

    for k in 0..steps {
        let t = k as f64 * h;
        let r = draw(k);
        trace.r.push(r);
        let u = inputs.at(t);
        let w0 = dy.w(&x, &u, r);
        trace.w_linf = trace.w_linf.max(w0.norm());
        if k % settings.record_every == 0 {
            record(&mut trace, t, &x, &xh, &w0);
        }

        // Plant stages; the measurement at each stage feeds the observer.
        let stage = |xs: &DVector<f64>| {
            let w = dy.w(xs, &u, r);
            (dy.plant(xs, &u, &w), dy.measure(xs, &w))
        };
        let (k1, y1) = stage(&x);
        let x2 = &x + &k1 * (0.5 * h);
        let (k2, y2) = stage(&x2);
        let x3 = &x + &k2 * (0.5 * h);
        let (k3, y3) = stage(&x3);
        let x4 = &x + &k3 * h;
        let (k4, y4) = stage(&x4);
        let x_next = &x + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);

        if let (Some(y1), Some(y2), Some(y3), Some(y4)) = (y1, y2, y3, y4) {
            let started = Instant::now();
            let o1 = dy.observer(&xh, &u, &y1).expect("observer present");
            let o2 = dy.observer(&(&xh + &o1 * (0.5 * h)), &u, &y2).expect("observer present");
            let o3 = dy.observer(&(&xh + &o2 * (0.5 * h)), &u, &y3).expect("observer present");
            let o4 = dy.observer(&(&xh + &o3 * h), &u, &y4).expect("observer present");
            xh += (o1 + (o2 + o3) * 2.0 + o4) * (h / 6.0);
            observer_time += started.elapsed();
        }
        x = x_next;

        if settings.clamp {
            let mut hit = false;
            for v in x.iter_mut() {
                if *v < 0.0 || *v > rho_m {
                    *v = v.clamp(0.0, rho_m);
                    hit = true;
                }
            }
            if hit {
                if trace.clamp_events == 0 {
                    log::warn!("plant state left [0, rho_m] at t = {:.2} s and was clamped", t + h);
                }
                trace.clamp_events += 1;
            }
        }
        if x.iter().chain(xh.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "state became non-finite at t = {:.3} s",
                t + h
            )));
        }
    }
    let t_end = steps as f64 * h;
    let u = inputs.at(t_end);
    let r = *trace.r.last().unwrap_or(&0.0);
    let w_end = dy.w(&x, &u, r);
    if steps % settings.record_every == 0 {
        record(&mut trace, t_end, &x, &xh, &w_end);
    }
    trace.observer_time = observer_time;
    Ok(trace)
}

impl SimulationTrace {
    pub fn has_observer(&self) -> bool {
        !self.xhat.is_empty()
    }

    /// Noisy samples `C x (1 + g_x r)` at every record, for estimators that
    /// run on the recorded plant trajectory.
    pub fn measurements(&self, c: &DMatrix<f64>) -> Vec<DVector<f64>> {
        self.t
            .iter()
            .zip(&self.x)
            .map(|(t, x)| {
                let k = ((t / self.dt).round() as usize).min(self.r.len().saturating_sub(1));
                let r = self.r.get(k).copied().unwrap_or(0.0);
                c * x * (1.0 + self.gain_x * r)
            })
            .collect()
    }

    pub fn metrics(&self) -> Option<ErrorMetrics> {
        self.has_observer().then(|| error_metrics(&self.t, &self.x, &self.xhat, self.t_f))
    }

    pub fn summary(&self, mu: Option<f64>) -> TraceSummary {
        TraceSummary {
            schema_version: crate::io::SCHEMA_VERSION,
            t_f: self.t_f,
            dt: self.dt,
            records: self.t.len(),
            w_linf: self.w_linf * DISPLAY_SCALE,
            mu,
            zeta: mu.map(|m| m * self.w_linf * DISPLAY_SCALE),
            metrics: self.metrics(),
            clamp_events: self.clamp_events,
        }
    }

    /// One row per record: `t, x..., xhat..., |e|, |z|, |w|`, densities in
    /// veh/km.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_trace_csv(out, &self.t, &self.x, &self.xhat, &self.e_norm, &self.z_norm, &self.w_norm)
    }
}

/// CSV with a unit header comment. `xhat`, `e`, `z` may be empty.
pub fn write_trace_csv<W: Write>(
    mut out: W,
    t: &[f64],
    x: &[DVector<f64>],
    xhat: &[DVector<f64>],
    e: &[f64],
    z: &[f64],
    w: &[f64],
) -> Result<()> {
    let s = DISPLAY_SCALE;
    let n = x.first().map_or(0, |v| v.len());
    writeln!(out, "# units: t in s; densities, |e|, |z| and |w| in veh/km (internal veh/m x {s})")?;
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{}", i + 1)));
    if !xhat.is_empty() {
        header.extend((0..n).map(|i| format!("xhat{}", i + 1)));
    }
    if !e.is_empty() {
        header.push("e_norm".into());
    }
    if !z.is_empty() {
        header.push("z_norm".into());
    }
    header.push("w_norm".into());
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(&header).map_err(csv_err)?;
    for k in 0..t.len() {
        let mut row = vec![format!("{}", t[k])];
        row.extend(x[k].iter().map(|v| format!("{:e}", v * s)));
        if let Some(xh) = xhat.get(k) {
            row.extend(xh.iter().map(|v| format!("{:e}", v * s)));
        }
        if let Some(v) = e.get(k) {
            row.push(format!("{:e}", v * s));
        }
        if let Some(v) = z.get(k) {
            row.push(format!("{:e}", v * s));
        }
        row.push(format!("{:e}", w[k] * s));
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// RMSE and ME over the whole-second samples of a trace.
pub fn error_metrics(t: &[f64], x: &[DVector<f64>], xhat: &[DVector<f64>], t_f: f64) -> ErrorMetrics {
    let whole: Vec<usize> = t
        .iter()
        .enumerate()
        .filter(|(_, &ti)| ti >= 1.0 - 1e-9 && (ti - ti.round()).abs() < 1e-9)
        .map(|(k, _)| k)
        .collect();
    let n = x.first().map_or(0, |v| v.len());
    let s = DISPLAY_SCALE;
    let rmse = if whole.is_empty() {
        0.0
    } else {
        (0..n)
            .map(|i| {
                let sum: f64 = whole.iter().map(|&k| (x[k][i] - xhat[k][i]).powi(2)).sum();
                (sum / t_f).sqrt()
            })
            .sum::<f64>()
            * s
    };
    let start = (t_f - 100.0).max(0.0);
    let window: Vec<f64> = t
        .iter()
        .enumerate()
        .filter(|(_, &ti)| ti >= start - 1e-9 && (ti - ti.round()).abs() < 1e-9)
        .map(|(k, _)| (&x[k] - &xhat[k]).norm())
        .collect();
    let me = if window.is_empty() {
        0.0
    } else {
        window.iter().sum::<f64>() / window.len() as f64 * s
    };
    let final_error = match (x.last(), xhat.last()) {
        (Some(a), Some(b)) => (a - b).norm() * s,
        _ => 0.0,
    };
    ErrorMetrics { rmse, me, final_error }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinfCheck {
    pub holds: bool,
    /// `min_t (mu |w|_Linf - |z(t)|)` over the checked window (veh/m).
    pub margin: f64,
    pub bound: f64,
}

/// Check `|z(t)| <= mu |w|_Linf` for every record after
/// `settle_fraction * t_f`.
pub fn check_linf_bound(trace: &SimulationTrace, mu: f64, settle_fraction: f64) -> LinfCheck {
    let bound = mu * trace.w_linf;
    let t0 = settle_fraction * trace.t_f;
    let worst = trace
        .t
        .iter()
        .zip(&trace.z_norm)
        .filter(|(t, _)| **t >= t0)
        .fold(0.0f64, |acc, (_, z)| acc.max(*z));
    let margin = bound - worst;
    LinfCheck {
        holds: margin >= 0.0,
        margin,
        bound,
    }
}

/// Seeded uniform draw inside the density range of the mode: `[0, rho_c]`
/// when uncongested and `(rho_c, rho_m]` when congested, for every state.
pub fn random_initial_state(sys: &ModeledSystem, seed: u64) -> DVector<f64> {
    let p = &sys.config.params;
    let (lo, hi) = match sys.mode {
        TrafficMode::Uncongested => (0.0, p.rho_c()),
        TrafficMode::Congested => (p.rho_c(), p.rho_m),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(sys.n(), |_, _| {
        let v: f64 = rng.random_range(lo..=hi);
        if v <= lo && sys.mode == TrafficMode::Congested {
            hi
        } else {
            v
        }
    })
}
