use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::SQRT_2;
use traffic_est_core::lipschitz::{
    empirical_gamma, gamma, gamma_congested, gamma_sweep, gamma_uncongested, gamma_uncongested_rowwise, report,
};
use traffic_est_core::presets::{self, PARAMS};
use traffic_est_core::{build_model, GreenshieldParams, HighwayConfig, OffRamp, TrafficMode};

fn random_config(rng: &mut ChaCha8Rng) -> HighwayConfig {
    let n = rng.random_range(3..=15);
    let mut on = Vec::new();
    let mut off = Vec::new();
    for s in 2..n {
        if rng.random_bool(0.35) {
            on.push(s);
        }
        if rng.random_bool(0.35) {
            off.push(OffRamp {
                segment: s,
                alpha: rng.random_range(0.0..=1.0),
            });
        }
    }
    HighwayConfig::new(n, on, off, PARAMS).unwrap()
}

#[test]
fn highway_a_uncongested_constant() {
    let g = gamma_uncongested(&presets::highway_a(TrafficMode::Uncongested)).unwrap();
    assert!((g - 0.5134).abs() <= 1e-4, "{g}");
}

#[test]
fn highway_a_congested_constant_follows_formula() {
    let g = gamma_congested(&presets::highway_a(TrafficMode::Congested)).unwrap();
    let a: f64 = 0.8;
    let oracle = 2.0 * 31.3 / 500.0 * (58.0 + 2.0 * (2.0 * SQRT_2 * a + a * a) + 2.0 * a * a).sqrt();
    assert!((g - oracle).abs() <= 1e-12);
    assert!((g - 1.0101).abs() <= 1e-3, "{g}");
}

#[test]
fn scalability_table() {
    let printed = [
        (20, 0.4023),
        (40, 0.5645),
        (60, 0.6895),
        (80, 0.7951),
        (100, 0.8882),
        (120, 0.9724),
        (140, 1.0499),
        (160, 1.1221),
        (180, 1.1899),
        (200, 1.2540),
    ];
    let counts: Vec<usize> = printed.iter().map(|p| p.0).collect();
    let rows = gamma_sweep(&counts, 0.05, PARAMS).unwrap();
    for (row, (n, g)) in rows.iter().zip(printed) {
        assert_eq!(row.segments, n);
        assert!((row.gamma_u - g).abs() <= 1e-3, "N = {n}: {} vs {g}", row.gamma_u);
    }
}

#[test]
fn plain_two_segment_formulas() {
    let cfg = HighwayConfig::plain(2, PARAMS).unwrap();
    let r = 31.3 / 500.0;
    assert!((gamma_uncongested(&cfg).unwrap() - r * 3f64.sqrt()).abs() < 1e-15);
    assert!((gamma_congested(&cfg).unwrap() - 2.0 * r * 3f64.sqrt()).abs() < 1e-15);
}

#[test]
fn two_segment_empirical_below_analytic() {
    let cfg = HighwayConfig::plain(2, PARAMS).unwrap();
    let sys = build_model(&cfg, TrafficMode::Uncongested).unwrap();
    let e = empirical_gamma(&sys, 20_000, 1);
    // The Jacobian of f on [0, rho_c]^2 is (v_f / l) [[-s, 0], [s, -t]] with
    // s, t in [0, 1]; its spectral norm peaks at s = t = 1 with the golden ratio.
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let jac_bound = phi * 31.3 / 500.0;
    assert!(e > 0.9 * jac_bound && e <= jac_bound + 1e-12, "{e} vs {jac_bound}");
    assert!(e <= gamma_uncongested(&cfg).unwrap());
}

/// Squared row bounds of the uncongested vector field, summed directly from
/// the layout, in units of (v_f / l)^2.
fn rowwise_radicand(cfg: &HighwayConfig) -> f64 {
    let mut sum = 1.0;
    for s in 1..cfg.segments {
        let on = cfg.on_ramps.contains(&s);
        let off = cfg.off_ramps.iter().find(|r| r.segment == s).map(|r| r.alpha);
        sum += match (on, off) {
            (false, None) => 2.0,
            (true, None) => (2.0 + SQRT_2).powi(2),
            (false, Some(a)) => (SQRT_2 + 2.0 * a).powi(2),
            (true, Some(a)) => (2.0 + SQRT_2 + 2.0 * a).powi(2),
        };
    }
    sum += 4.0 * cfg.n_on() as f64;
    sum += cfg.off_ramps.iter().map(|r| 4.0 * r.alpha * r.alpha).sum::<f64>();
    sum
}

#[test]
fn rowwise_bound_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let r = 31.3 / 500.0;
    for _ in 0..300 {
        let cfg = random_config(&mut rng);
        let g = gamma_uncongested_rowwise(&cfg).unwrap();
        let oracle = r * rowwise_radicand(&cfg).sqrt();
        assert!((g - oracle).abs() <= 1e-12 * oracle, "{cfg:?}: {g} vs {oracle}");
    }
}

#[test]
fn printed_uncongested_form_agrees_without_lone_off_ramps() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..300 {
        let cfg = random_config(&mut rng);
        let rowwise = gamma_uncongested_rowwise(&cfg).unwrap();
        match gamma_uncongested(&cfg) {
            Ok(g) => {
                assert!(g <= rowwise + 1e-15);
                if cfg.n_off() == cfg.n_shared() {
                    assert!((g - rowwise).abs() <= 1e-14);
                } else {
                    assert!(g < rowwise);
                }
            }
            Err(_) => assert!(cfg.n_off() > cfg.n_shared()),
        }
    }
}

#[test]
fn printed_uncongested_form_rejects_negative_radicand() {
    let cfg = HighwayConfig::new(3, vec![], vec![OffRamp { segment: 2, alpha: 0.57 }], PARAMS).unwrap();
    assert!(gamma_uncongested(&cfg).is_err());
    assert!(gamma_uncongested_rowwise(&cfg).unwrap() > 0.0);
}

#[test]
fn empirical_never_exceeds_rowwise_or_congested() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in 0..30 {
        let cfg = random_config(&mut rng);
        let sys = build_model(&cfg, TrafficMode::Uncongested).unwrap();
        assert!(empirical_gamma(&sys, 2_000, k) <= gamma_uncongested_rowwise(&cfg).unwrap(), "{cfg:?}");
        let sys = build_model(&cfg, TrafficMode::Congested).unwrap();
        assert!(empirical_gamma(&sys, 2_000, k) <= gamma_congested(&cfg).unwrap(), "{cfg:?}");
    }
}

#[test]
fn empirical_is_deterministic_and_skips_degenerate_pairs() {
    let sys = build_model(&presets::highway_b(TrafficMode::Congested), TrafficMode::Congested).unwrap();
    assert_eq!(empirical_gamma(&sys, 500, 9), empirical_gamma(&sys, 500, 9));
    assert_eq!(empirical_gamma(&sys, 0, 9), 0.0);
    let r = report(&presets::highway_b(TrafficMode::Congested), TrafficMode::Congested, 500, 9).unwrap();
    assert!(r.gamma_empirical_lower_bound <= r.gamma_analytic);
}

fn bounds(cfg: &HighwayConfig) -> [f64; 2] {
    [gamma_uncongested_rowwise(cfg).unwrap(), gamma_congested(cfg).unwrap()]
}

#[test]
fn constants_are_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let cfg = random_config(&mut rng);
        let g = bounds(&cfg);
        let longer = HighwayConfig::new(cfg.segments + 1, cfg.on_ramps.clone(), cfg.off_ramps.clone(), PARAMS).unwrap();
        let gl = bounds(&longer);
        if let (Ok(a), Ok(b)) = (gamma_uncongested(&cfg), gamma_uncongested(&longer)) {
            assert!(b >= a);
        }
        for i in 0..2 {
            assert!(gl[i] >= g[i]);
        }
        if let Some(s) = (2..cfg.segments).find(|s| !cfg.on_ramps.contains(s)) {
            let mut on = cfg.on_ramps.clone();
            on.push(s);
            let more = HighwayConfig::new(cfg.segments, on, cfg.off_ramps.clone(), PARAMS).unwrap();
            let gm = bounds(&more);
            for i in 0..2 {
                assert!(gm[i] >= g[i] - 1e-15);
            }
        }
        if !cfg.off_ramps.is_empty() {
            let mut off = cfg.off_ramps.clone();
            off[0].alpha = (off[0].alpha + 0.1).min(1.0);
            let more = HighwayConfig::new(cfg.segments, cfg.on_ramps.clone(), off, PARAMS).unwrap();
            let gm = bounds(&more);
            for i in 0..2 {
                assert!(gm[i] >= g[i] - 1e-15);
            }
        }
    }
}

#[test]
fn constants_scale_with_free_flow_speed() {
    let cfg = presets::highway_a(TrafficMode::Uncongested);
    let fast = HighwayConfig {
        params: GreenshieldParams {
            v_f: 2.0 * PARAMS.v_f,
            ..PARAMS
        },
        ..cfg.clone()
    };
    for mode in [TrafficMode::Uncongested, TrafficMode::Congested] {
        let a = gamma(&cfg, mode).unwrap();
        let b = gamma(&fast, mode).unwrap();
        assert!((b - 2.0 * a).abs() <= 1e-14);
    }
}
