//! Analytical Lipschitz constants of the model nonlinearity and a sampling
//! lower bound used to falsify them.

use crate::model::{build_model, GreenshieldParams, HighwayConfig, ModeledSystem, OffRamp, TrafficMode};
use crate::error::{Error, Result};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

/// Lipschitz constant on the uncongested operating box, as printed. The
/// radicand carries `(6 + 4 sqrt2)(N_I - N_O + N_IO)`, which turns negative
/// when off-ramps outnumber on-ramps; that case is an error. See
/// [`gamma_uncongested_rowwise`] for the bound obtained by summing the
/// row-wise estimates.
pub fn gamma_uncongested(config: &HighwayConfig) -> Result<f64> {
    config.validate()?;
    let n = config.segments as f64;
    let ni = config.n_on() as f64;
    let no = config.n_off() as f64;
    let nio = config.n_shared() as f64;
    let inner = 2.0 * n + 2.0 * ni - 1.0 + (6.0 + 4.0 * SQRT_2) * (ni - no + nio) + ramp_terms(config);
    if inner < 0.0 {
        return Err(Error::Config(format!(
            "uncongested Lipschitz formula has a negative radicand ({inner:.4}) for {} on-ramps and {} off-ramps",
            config.n_on(),
            config.n_off()
        )));
    }
    Ok(config.params.rate() * inner.sqrt())
}

/// Sum of the squared row bounds `|f_i(x) - f_i(x')| <= g_i |x - x'|` over
/// the uncongested cases. Differs from [`gamma_uncongested`] only in the
/// on-ramp term, `(6 + 4 sqrt2) N_I`, and is a valid bound for every layout.
pub fn gamma_uncongested_rowwise(config: &HighwayConfig) -> Result<f64> {
    config.validate()?;
    let n = config.segments as f64;
    let ni = config.n_on() as f64;
    let inner = 2.0 * n + 2.0 * ni - 1.0 + (6.0 + 4.0 * SQRT_2) * ni + ramp_terms(config);
    Ok(config.params.rate() * inner.sqrt())
}

fn ramp_terms(config: &HighwayConfig) -> f64 {
    let mut sum = 0.0;
    for r in &config.off_ramps {
        let a = r.alpha;
        if config.on_ramps.contains(&r.segment) {
            sum += (8.0 + 4.0 * SQRT_2) * a + 4.0 * a * a;
        } else {
            sum += 4.0 * SQRT_2 * a + 4.0 * a * a;
        }
        sum += 4.0 * a * a;
    }
    sum
}

/// Lipschitz constant on the congested operating box.
pub fn gamma_congested(config: &HighwayConfig) -> Result<f64> {
    config.validate()?;
    let n = config.segments as f64;
    let ni = config.n_on() as f64;
    let mut inner = 2.0 * n + 3.0 * ni - 1.0;
    for r in &config.off_ramps {
        let a = r.alpha;
        if config.on_ramps.contains(&r.segment) {
            inner += 4.0 * a + a * a;
        } else {
            inner += 2.0 * SQRT_2 * a + a * a;
        }
        inner += a * a;
    }
    Ok(2.0 * config.params.rate() * inner.sqrt())
}

pub fn gamma(config: &HighwayConfig, mode: TrafficMode) -> Result<f64> {
    gamma_with(config, mode, GammaBound::Printed)
}

/// Which uncongested bound to use; the congested one has a single form.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaBound {
    #[default]
    Printed,
    Rowwise,
}

pub fn gamma_with(config: &HighwayConfig, mode: TrafficMode, bound: GammaBound) -> Result<f64> {
    match (mode, bound) {
        (TrafficMode::Uncongested, GammaBound::Printed) => gamma_uncongested(config),
        (TrafficMode::Uncongested, GammaBound::Rowwise) => gamma_uncongested_rowwise(config),
        (TrafficMode::Congested, _) => gamma_congested(config),
    }
}

/// Largest difference quotient `|f(x) - f(x')| / |x - x'|` over `samples`
/// uniform pairs drawn from the operating box. Pairs closer than `1e-12`
/// are skipped.
pub fn empirical_gamma(sys: &ModeledSystem, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = sys.operating_box();
    let n = sys.n();
    let draw = |rng: &mut ChaCha8Rng| {
        DVector::from_fn(n, |i, _| {
            if hi[i] > lo[i] {
                rng.random_range(lo[i]..=hi[i])
            } else {
                lo[i]
            }
        })
    };
    let mut best = 0.0f64;
    for _ in 0..samples {
        let x = draw(&mut rng);
        let xh = draw(&mut rng);
        let dx = (&x - &xh).norm();
        if dx < 1e-12 {
            continue;
        }
        let df = (sys.f(&x) - sys.f(&xh)).norm();
        best = best.max(df / dx);
    }
    best
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub mode: TrafficMode,
    /// 1/s.
    pub gamma_analytic: f64,
    pub gamma_empirical_lower_bound: f64,
    pub samples: usize,
    pub seed: u64,
}

pub fn report(config: &HighwayConfig, mode: TrafficMode, samples: usize, seed: u64) -> Result<LipschitzReport> {
    let sys = build_model(config, mode)?;
    Ok(LipschitzReport {
        mode,
        gamma_analytic: gamma(config, mode)?,
        gamma_empirical_lower_bound: empirical_gamma(&sys, samples, seed),
        samples,
        seed,
    })
}

/// Single on-ramp at segment 2 and single off-ramp at segment `N - 1`.
pub fn sweep_config(segments: usize, alpha: f64, params: GreenshieldParams) -> Result<HighwayConfig> {
    HighwayConfig::new(
        segments,
        vec![2],
        vec![OffRamp {
            segment: segments - 1,
            alpha,
        }],
        params,
    )
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepRow {
    pub segments: usize,
    pub gamma_u: f64,
}

/// `gamma_u` for each segment count.
pub fn gamma_sweep(segment_counts: &[usize], alpha: f64, params: GreenshieldParams) -> Result<Vec<SweepRow>> {
    segment_counts
        .iter()
        .map(|&n| {
            Ok(SweepRow {
                segments: n,
                gamma_u: gamma_uncongested(&sweep_config(n, alpha, params)?)?,
            })
        })
        .collect()
}
