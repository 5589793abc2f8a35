//! Highway fixtures from the experiments: Highway A (30 states), Highway B
//! (7 states) and the single-ramp-pair sweep family.

use crate::error::Result;
use crate::model::{GreenshieldParams, HighwayConfig, OffRamp, TrafficMode};

/// I-15 NB parameters used throughout.
pub const PARAMS: GreenshieldParams = GreenshieldParams {
    v_f: 31.3,
    rho_m: 0.053,
    l: 500.0,
};

/// Exit ratio for the sweep family.
pub const SWEEP_ALPHA: f64 = 0.05;

pub const SWEEP_SEGMENTS: [usize; 10] = [20, 40, 60, 80, 100, 120, 140, 160, 180, 200];

/// Printed gamma_u column of the sweep table.
pub const SWEEP_GAMMA_U: [f64; 10] = [0.4023, 0.5645, 0.6895, 0.7951, 0.8882, 0.9724, 1.0499, 1.1221, 1.1899, 1.2540];

/// 25 segments, on-ramps at 2, 3, 4, off-ramps at 22, 24.
pub fn highway_a(mode: TrafficMode) -> HighwayConfig {
    let alpha = match mode {
        TrafficMode::Uncongested => 0.05,
        TrafficMode::Congested => 0.8,
    };
    HighwayConfig::new(
        25,
        vec![2, 3, 4],
        vec![OffRamp { segment: 22, alpha }, OffRamp { segment: 24, alpha }],
        PARAMS,
    )
    .expect("fixture is valid")
}

/// Segments 1, 7, 15, 25, the first on-ramp and both off-ramps.
pub fn highway_a_sensors() -> Vec<usize> {
    vec![0, 6, 14, 24, 25, 28, 29]
}

pub fn highway_a_input(mode: TrafficMode) -> Vec<f64> {
    match mode {
        TrafficMode::Uncongested => vec![0.2, 0.05, 0.05, 0.05, 0.013, 0.013],
        TrafficMode::Congested => vec![0.25, 0.1, 0.1, 0.1, 0.025, 0.025],
    }
}

/// 5 segments, on-ramp at 2, off-ramp at 4.
pub fn highway_b(mode: TrafficMode) -> HighwayConfig {
    let alpha = match mode {
        TrafficMode::Uncongested => 0.2,
        TrafficMode::Congested => 0.15,
    };
    HighwayConfig::new(5, vec![2], vec![OffRamp { segment: 4, alpha }], PARAMS).expect("fixture is valid")
}

/// Segments 1 and 5.
pub fn highway_b_sensors() -> Vec<usize> {
    vec![0, 4]
}

pub fn highway_b_input(mode: TrafficMode) -> Vec<f64> {
    match mode {
        TrafficMode::Uncongested => vec![0.1, 0.05, 0.011],
        TrafficMode::Congested => vec![0.34, 0.13, 0.05],
    }
}

/// Every mainline segment except the three around the middle.
pub fn sweep_sensors(segments: usize) -> Vec<usize> {
    let mid = segments / 2;
    (0..segments).filter(|&i| i + 1 < mid || i > mid + 1).collect()
}

pub fn sweep_highway(segments: usize) -> Result<HighwayConfig> {
    crate::lipschitz::sweep_config(segments, SWEEP_ALPHA, PARAMS)
}
