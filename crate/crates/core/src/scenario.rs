//! Scenario files and the end-to-end runner: model, Lipschitz constant,
//! observer design, simulation and the Kalman baselines on one trace.

use crate::error::{Error, Result};
use crate::filters::{run_filter, FilterKind, FilterRun, KfConfig, UkfConfig};
use crate::io::{MatrixJson, SCHEMA_VERSION};
use crate::lipschitz::{self, GammaBound};
use crate::model::{build_model, HighwayConfig, ModeledSystem, TrafficMode};
use crate::presets;
use crate::sim::{
    error_metrics, random_initial_state, simulate, DisturbanceSpec, ErrorMetrics, InputSchedule, ObserverGains,
    SimSettings, SimulationTrace, UncertaintySpec,
};
use crate::synthesis::{disturbance_maps, selection_matrix, synthesize, SynthesisOptions, SynthesisProblem, SynthesisResult};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Duration;

/// ME above this (veh/km) marks an estimator as not converging.
pub const DIVERGENCE_ME: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HighwayRef {
    /// `"highway_a"` or `"highway_b"`; the exit ratios follow the mode.
    Preset { preset: String },
    Inline(HighwayConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Linf,
    Ekf,
    Ukf,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Linf => "linf",
            EstimatorKind::Ekf => "ekf",
            EstimatorKind::Ukf => "ukf",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisSpec {
    pub alpha: f64,
    pub mu1: f64,
    /// Identity when absent.
    pub z: Option<MatrixJson>,
    /// Gains in `B_w = [g_u B_u O]`, `D_w = [O g_y C]`.
    pub b_w_gain: f64,
    pub d_w_gain: f64,
    pub max_iter: Option<usize>,
    /// Uncongested Lipschitz bound; `rowwise` stays defined when off-ramps
    /// outnumber on-ramps.
    pub gamma_bound: GammaBound,
}

impl Default for SynthesisSpec {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            mu1: 1e4,
            z: None,
            b_w_gain: 1.0,
            d_w_gain: 1.0,
            max_iter: None,
            gamma_bound: GammaBound::Printed,
        }
    }
}

/// Observer gain computed earlier, reused instead of solving again.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CachedGain {
    pub l: MatrixJson,
    pub mu: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialSpec {
    /// Drawn inside the mode's density range from the seed when absent.
    pub x0: Option<Vec<f64>>,
    pub xhat0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub highway: HighwayRef,
    pub mode: TrafficMode,
    /// 0-based state indices; preset sensors when absent.
    #[serde(default)]
    pub sensors: Option<Vec<usize>>,
    /// veh/s; preset input when absent.
    #[serde(default)]
    pub inputs: Option<InputSchedule>,
    #[serde(default)]
    pub disturbance: DisturbanceSpec,
    #[serde(default)]
    pub uncertainty: Option<UncertaintySpec>,
    #[serde(default = "all_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub sim: SimSettings,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub synthesis: SynthesisSpec,
    #[serde(default)]
    pub gain: Option<CachedGain>,
    #[serde(default)]
    pub kf: KfConfig,
    #[serde(default)]
    pub ukf: UkfConfig,
}

fn all_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Linf, EstimatorKind::Ekf, EstimatorKind::Ukf]
}

impl ScenarioFile {
    /// Default setup on a preset highway.
    pub fn preset(preset: &str, mode: TrafficMode, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: Some(format!("{preset}_{}", mode_name(mode))),
            highway: HighwayRef::Preset { preset: preset.into() },
            mode,
            sensors: None,
            inputs: None,
            disturbance: DisturbanceSpec::default(),
            uncertainty: None,
            estimators: all_estimators(),
            sim: SimSettings::default(),
            seed,
            initial: InitialSpec::default(),
            synthesis: SynthesisSpec::default(),
            gain: None,
            kf: KfConfig::default(),
            ukf: UkfConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        if s.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                s.schema_version
            )));
        }
        Ok(s)
    }

    pub fn highway_config(&self) -> Result<HighwayConfig> {
        match &self.highway {
            HighwayRef::Inline(c) => {
                let mut c = c.clone();
                c.normalize()?;
                Ok(c)
            }
            HighwayRef::Preset { preset } => match preset.as_str() {
                "highway_a" => Ok(presets::highway_a(self.mode)),
                "highway_b" => Ok(presets::highway_b(self.mode)),
                other => Err(Error::Config(format!("unknown highway preset '{other}'"))),
            },
        }
    }

    pub fn sensor_list(&self) -> Result<Vec<usize>> {
        if let Some(s) = &self.sensors {
            return Ok(s.clone());
        }
        match &self.highway {
            HighwayRef::Preset { preset } if preset == "highway_a" => Ok(presets::highway_a_sensors()),
            HighwayRef::Preset { preset } if preset == "highway_b" => Ok(presets::highway_b_sensors()),
            _ => Err(Error::Config("sensors must be listed for an inline highway".into())),
        }
    }

    pub fn input_schedule(&self) -> Result<InputSchedule> {
        if let Some(u) = &self.inputs {
            return Ok(u.clone());
        }
        match &self.highway {
            HighwayRef::Preset { preset } if preset == "highway_a" => {
                Ok(InputSchedule::Constant(presets::highway_a_input(self.mode)))
            }
            HighwayRef::Preset { preset } if preset == "highway_b" => {
                Ok(InputSchedule::Constant(presets::highway_b_input(self.mode)))
            }
            _ => Err(Error::Config("inputs must be given for an inline highway".into())),
        }
    }

    /// Design problem for the scenario's model and sensors.
    pub fn synthesis_problem(&self, sys: &ModeledSystem, c: &DMatrix<f64>, gamma: f64) -> Result<SynthesisProblem> {
        let s = &self.synthesis;
        let (b_w, d_w) = disturbance_maps(&sys.b_u, c, s.b_w_gain, s.d_w_gain);
        let z = match &s.z {
            Some(m) => m.to_matrix().map_err(Error::Config)?,
            None => DMatrix::identity(sys.n(), sys.n()),
        };
        Ok(SynthesisProblem {
            a: sys.a.clone(),
            c: c.clone(),
            b_w,
            d_w,
            z,
            gamma,
            alpha: s.alpha,
            mu1: s.mu1,
        })
    }
}

pub fn mode_name(mode: TrafficMode) -> &'static str {
    match mode {
        TrafficMode::Uncongested => "uncongested",
        TrafficMode::Congested => "congested",
    }
}

/// Independent sub-seeds for the initial states.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow {
    pub estimator: String,
    /// Wall-clock seconds spent in the estimator.
    pub delta_t: f64,
    #[serde(flatten)]
    pub metrics: ErrorMetrics,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub system: ModeledSystem,
    pub c: DMatrix<f64>,
    pub gamma: f64,
    pub synthesis: Option<SynthesisResult>,
    pub mu: Option<f64>,
    pub trace: SimulationTrace,
    pub filters: Vec<FilterRun>,
    pub table: Vec<MetricsRow>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub synthesis: SynthesisOptions,
    /// Replaces the scenario seed.
    pub seed: Option<u64>,
}

pub fn run_scenario(sc: &ScenarioFile, opts: &RunOptions) -> Result<ScenarioOutput> {
    let config = sc.highway_config()?;
    let sys = build_model(&config, sc.mode)?;
    let c = selection_matrix(sys.n(), &sc.sensor_list()?)?;
    let inputs = sc.input_schedule()?;
    inputs.validate(sys.m())?;
    let gamma = lipschitz::gamma_with(&config, sc.mode, sc.synthesis.gamma_bound)?;
    let seed = opts.seed.unwrap_or(sc.seed);
    let n = sys.n();

    let want = |k| sc.estimators.contains(&k);
    let sample_period = sc.sim.dt * sc.sim.record_every as f64;
    if (want(EstimatorKind::Ekf) || want(EstimatorKind::Ukf)) && (sample_period - sc.kf.t).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "filter sampling period {} s must equal the record interval {} s",
            sc.kf.t, sample_period
        )));
    }

    let (synthesis, gains, mu) = if want(EstimatorKind::Linf) {
        let z = match &sc.synthesis.z {
            Some(m) => m.to_matrix().map_err(Error::Config)?,
            None => DMatrix::identity(n, n),
        };
        match &sc.gain {
            Some(g) => {
                let l = g.l.to_matrix().map_err(Error::Config)?;
                (None, Some(ObserverGains { l, c: c.clone(), z }), Some(g.mu))
            }
            None => {
                let prob = sc.synthesis_problem(&sys, &c, gamma)?;
                let mut so = opts.synthesis.clone();
                if let Some(it) = sc.synthesis.max_iter {
                    so.solver.max_iter = it;
                }
                let r = synthesize(&prob, &so)?;
                let g = ObserverGains {
                    l: r.l.clone(),
                    c: c.clone(),
                    z,
                };
                let mu = r.mu;
                (Some(r), Some(g), Some(mu))
            }
        }
    } else {
        (None, None, None)
    };

    let vec_or = |v: &Option<Vec<f64>>, stream: u64| -> DVector<f64> {
        match v {
            Some(v) => DVector::from_column_slice(v),
            None => random_initial_state(&sys, derive_seed(seed, stream)),
        }
    };
    let x0 = vec_or(&sc.initial.x0, 1);
    let xhat0 = vec_or(&sc.initial.xhat0, 2);
    let dist = DisturbanceSpec {
        seed,
        ..sc.disturbance.clone()
    };
    let trace = simulate(&sys, gains.as_ref(), &dist, sc.uncertainty, &x0, Some(&xhat0), &inputs, &sc.sim)?;

    let mut table = Vec::new();
    if let Some(m) = trace.metrics() {
        table.push(MetricsRow {
            estimator: EstimatorKind::Linf.name().into(),
            delta_t: trace.observer_time.as_secs_f64(),
            metrics: m,
            diverged: !(m.me < DIVERGENCE_ME),
        });
    }
    let mut filters = Vec::new();
    let ys = trace.measurements(&c);
    for (est, kind) in [(EstimatorKind::Ekf, FilterKind::Ekf), (EstimatorKind::Ukf, FilterKind::Ukf)] {
        if !want(est) {
            continue;
        }
        let run = run_filter(kind, &sys, &c, &inputs, &ys, &xhat0, &sc.kf, &sc.ukf)?;
        let m = error_metrics(&trace.t, &trace.x, &run.x, trace.t_f);
        table.push(MetricsRow {
            estimator: est.name().into(),
            delta_t: run.elapsed.as_secs_f64(),
            metrics: m,
            diverged: run.diagnostics.diverged || !(m.me < DIVERGENCE_ME),
        });
        filters.push(run);
    }
    Ok(ScenarioOutput {
        system: sys,
        c,
        gamma,
        synthesis,
        mu,
        trace,
        filters,
        table,
    })
}

/// Metrics table as CSV: estimator, delta_t, RMSE, ME.
pub fn write_metrics_csv<W: Write>(mut out: W, table: &[MetricsRow]) -> Result<()> {
    writeln!(out, "# units: delta_t in s (wall clock); rmse, me and final_error in veh/km")?;
    writeln!(out, "estimator,delta_t,rmse,me,final_error,diverged")?;
    for r in table {
        writeln!(
            out,
            "{},{:e},{:.6},{:.6},{:.6},{}",
            r.estimator, r.delta_t, r.metrics.rmse, r.metrics.me, r.metrics.final_error, r.diverged
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub schema_version: u32,
    pub units: String,
    pub scenario: Option<String>,
    pub seed: u64,
    pub gamma: f64,
    pub mu: Option<f64>,
    pub rows: Vec<MetricsRow>,
}

impl ScenarioOutput {
    pub fn metrics_document(&self, scenario: Option<String>, seed: u64) -> MetricsDocument {
        MetricsDocument {
            schema_version: SCHEMA_VERSION,
            units: "delta_t: s; rmse, me, final_error: veh/km".into(),
            scenario,
            seed,
            gamma: self.gamma,
            mu: self.mu,
            rows: self.table.clone(),
        }
    }

    /// Wall-clock time spent in all estimators.
    pub fn wall_time(&self) -> Duration {
        self.filters.iter().map(|f| f.elapsed).sum::<Duration>() + self.trace.observer_time
    }
}
