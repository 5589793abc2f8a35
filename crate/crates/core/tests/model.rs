use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use traffic_est_core::model::{eval_dynamics, eval_nonlinearity, find_equilibrium, jacobian_f};
use traffic_est_core::presets::{self, PARAMS};
use traffic_est_core::{build_model, Error, GreenshieldParams, HighwayConfig, HighwaySpec, OffRamp, TrafficMode};

fn q(p: &GreenshieldParams, rho: f64) -> f64 {
    p.v_f * rho * (1.0 - rho / p.rho_m)
}

/// Cell-by-cell flux balance, written without the matrix form.
fn flux_rhs(cfg: &HighwayConfig, mode: TrafficMode, x: &[f64], u: &[f64]) -> Vec<f64> {
    let p = &cfg.params;
    let ns = cfg.segments;
    let ni = cfg.on_ramps.len();
    let mut dx = vec![0.0; x.len()];
    for i in 0..ns {
        let net = match mode {
            TrafficMode::Uncongested => {
                let inflow = if i == 0 { u[0] } else { q(p, x[i - 1]) };
                inflow - q(p, x[i])
            }
            TrafficMode::Congested => {
                let downstream = if i == ns - 1 { u[0] } else { q(p, x[i + 1]) };
                q(p, x[i]) - downstream
            }
        };
        dx[i] += net / p.l;
    }
    for (j, &seg) in cfg.on_ramps.iter().enumerate() {
        let s = ns + j;
        let merge = q(p, x[s]);
        dx[seg - 1] += merge / p.l;
        dx[s] += (u[1 + j] - merge) / p.l;
    }
    for (k, r) in cfg.off_ramps.iter().enumerate() {
        let s = ns + ni + k;
        let exit = r.alpha * q(p, x[s]);
        dx[r.segment - 1] -= exit / p.l;
        dx[s] += (exit - u[1 + ni + k]) / p.l;
    }
    dx
}

fn random_config(rng: &mut ChaCha8Rng) -> HighwayConfig {
    let n = rng.random_range(2..=12);
    let interior: Vec<usize> = (2..n).collect();
    let mut on = Vec::new();
    let mut off = Vec::new();
    for &s in &interior {
        if rng.random_bool(0.3) {
            on.push(s);
        }
        if rng.random_bool(0.3) {
            off.push(OffRamp {
                segment: s,
                alpha: rng.random_range(0.0..=1.0),
            });
        }
    }
    HighwayConfig::new(n, on, off, PARAMS).unwrap()
}

fn random_point(sys: &traffic_est_core::ModeledSystem, rng: &mut ChaCha8Rng) -> (DVector<f64>, DVector<f64>) {
    let (lo, hi) = sys.operating_box();
    let x = DVector::from_fn(sys.n(), |i, _| rng.random_range(lo[i]..=hi[i]));
    let u = DVector::from_fn(sys.m(), |_, _| rng.random_range(0.0..0.5));
    (x, u)
}

#[test]
fn uncongested_three_segments_without_ramps() {
    let cfg = HighwayConfig::plain(3, PARAMS).unwrap();
    let sys = build_model(&cfg, TrafficMode::Uncongested).unwrap();
    let r = PARAMS.v_f / PARAMS.l;
    let a = DMatrix::from_row_slice(3, 3, &[-r, 0.0, 0.0, r, -r, 0.0, 0.0, r, -r]);
    assert_eq!(sys.a, a);
    assert_eq!(sys.b_u, DMatrix::from_column_slice(3, 1, &[1.0 / PARAMS.l, 0.0, 0.0]));
}

#[test]
fn congested_two_segments_without_ramps() {
    let cfg = HighwayConfig::plain(2, PARAMS).unwrap();
    let sys = build_model(&cfg, TrafficMode::Congested).unwrap();
    let r = PARAMS.v_f / PARAMS.l;
    assert_eq!(sys.a1, DMatrix::from_row_slice(2, 2, &[r, -r, 0.0, r]));
    assert_eq!(sys.b_u, DMatrix::from_column_slice(2, 1, &[0.0, -1.0 / PARAMS.l]));
}

#[test]
fn highway_a_layout() {
    let sys = build_model(&presets::highway_a(TrafficMode::Uncongested), TrafficMode::Uncongested).unwrap();
    assert_eq!(sys.n(), 30);
    assert_eq!((sys.b_u.nrows(), sys.b_u.ncols()), (30, 6));
    let r = PARAMS.v_f / PARAMS.l;
    for row in 0..25 {
        let nonzero: Vec<(usize, f64)> = (0..5).map(|j| (j, sys.a2[(row, j)])).filter(|(_, v)| *v != 0.0).collect();
        match row + 1 {
            2 => assert_eq!(nonzero, vec![(0, r)]),
            3 => assert_eq!(nonzero, vec![(1, r)]),
            4 => assert_eq!(nonzero, vec![(2, r)]),
            22 => assert_eq!(nonzero, vec![(3, -0.05 * r)]),
            24 => assert_eq!(nonzero, vec![(4, -0.05 * r)]),
            _ => assert!(nonzero.is_empty(), "row {row}"),
        }
    }
}

#[test]
fn highway_b_has_seven_states() {
    for mode in [TrafficMode::Uncongested, TrafficMode::Congested] {
        let sys = build_model(&presets::highway_b(mode), mode).unwrap();
        assert_eq!(sys.n(), 7);
        assert_eq!(sys.m(), 3);
    }
}

#[test]
fn nonlinearity_two_segment_example() {
    let cfg = HighwayConfig::plain(2, PARAMS).unwrap();
    let sys = build_model(&cfg, TrafficMode::Uncongested).unwrap();
    let delta = 31.3 / (500.0 * 0.053);
    assert_relative_eq!(sys.delta, delta, max_relative = 1e-15);
    assert_relative_eq!(delta, 1.181132, epsilon = 1e-6);
    let f = eval_nonlinearity(&sys, &DVector::from_vec(vec![0.02, 0.01])).unwrap();
    assert_relative_eq!(f[0], delta * 0.02 * 0.02, max_relative = 1e-14);
    assert_relative_eq!(f[1], delta * (0.01 * 0.01 - 0.02 * 0.02), max_relative = 1e-14);
    assert_relative_eq!(f[0], 4.724528e-4, epsilon = 1e-9);
    assert_relative_eq!(f[1], -3.543396e-4, epsilon = 1e-9);
}

#[test]
fn congested_jam_example() {
    let cfg = HighwayConfig::plain(2, PARAMS).unwrap();
    let sys = build_model(&cfg, TrafficMode::Congested).unwrap();
    let rm = PARAMS.rho_m;
    let f = sys.f(&DVector::from_vec(vec![rm, rm]));
    assert_eq!(f[0], 0.0);
    assert_relative_eq!(f[1], -sys.delta * rm * rm, max_relative = 1e-15);
}

#[test]
fn dynamics_two_segment_example() {
    let cfg = HighwayConfig::plain(2, PARAMS).unwrap();
    let sys = build_model(&cfg, TrafficMode::Uncongested).unwrap();
    let dx = eval_dynamics(&sys, &DVector::from_vec(vec![0.02, 0.01]), &DVector::from_vec(vec![0.2])).unwrap();
    let expected = 0.2 / 500.0 - 31.3 / 500.0 * 0.02 + sys.delta * 0.02 * 0.02;
    assert_relative_eq!(dx[0], expected, max_relative = 1e-13);
    assert_relative_eq!(dx[0], -3.7955e-4, epsilon = 1e-8);
}

#[test]
fn origin_is_unforced_equilibrium() {
    let sys = build_model(&presets::highway_a(TrafficMode::Congested), TrafficMode::Congested).unwrap();
    let x = DVector::zeros(sys.n());
    assert_eq!(sys.f(&x).amax(), 0.0);
    assert_eq!(eval_dynamics(&sys, &x, &DVector::zeros(sys.m())).unwrap().amax(), 0.0);
}

#[test]
fn dimension_errors() {
    let sys = build_model(&presets::highway_b(TrafficMode::Congested), TrafficMode::Congested).unwrap();
    assert!(matches!(eval_nonlinearity(&sys, &DVector::zeros(3)), Err(Error::Dimension { .. })));
    assert!(matches!(
        eval_dynamics(&sys, &DVector::zeros(7), &DVector::zeros(2)),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(HighwayConfig::plain(1, PARAMS).is_err());
    assert!(HighwayConfig::new(5, vec![1], vec![], PARAMS).is_err());
    assert!(HighwayConfig::new(5, vec![5], vec![], PARAMS).is_err());
    assert!(HighwayConfig::new(5, vec![2, 2], vec![], PARAMS).is_err());
    let off = |segment, alpha| OffRamp { segment, alpha };
    assert!(HighwayConfig::new(5, vec![], vec![off(3, 1.5)], PARAMS).is_err());
    assert!(HighwayConfig::new(5, vec![], vec![off(3, 0.1), off(3, 0.2)], PARAMS).is_err());
    assert!(HighwayConfig::new(5, vec![], vec![off(5, 0.1)], PARAMS).is_err());
    let bad = GreenshieldParams { v_f: -1.0, ..PARAMS };
    assert!(HighwayConfig::plain(3, bad).is_err());
}

#[test]
fn matches_flux_balance_on_random_configs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let cfg = random_config(&mut rng);
        for mode in [TrafficMode::Uncongested, TrafficMode::Congested] {
            let sys = build_model(&cfg, mode).unwrap();
            let ns = cfg.segments;
            // Block form [A1 A2; O A3] with A3 diagonal.
            assert_eq!(sys.a.view((ns, 0), (sys.n() - ns, ns)).amax(), 0.0);
            let a3 = sys.a.view((ns, ns), (sys.n() - ns, sys.n() - ns)).into_owned();
            assert_eq!(a3.clone() - DMatrix::from_diagonal(&a3.diagonal()), DMatrix::zeros(a3.nrows(), a3.ncols()));
            let inv_l = 1.0 / PARAMS.l;
            assert!(sys.b_u.iter().all(|&v| v == 0.0 || v == inv_l || v == -inv_l));
            let touched: Vec<usize> = (0..sys.n()).filter(|&i| sys.b_u[(i, 0)] != 0.0).collect();
            let expect = if mode == TrafficMode::Uncongested { 0 } else { ns - 1 };
            assert_eq!(touched, vec![expect]);

            let (x, u) = random_point(&sys, &mut rng);
            let dx = sys.rhs(&x, &u);
            let reference = flux_rhs(&cfg, mode, x.as_slice(), u.as_slice());
            for i in 0..sys.n() {
                assert!((dx[i] - reference[i]).abs() <= 1e-15 + 1e-12 * reference[i].abs(), "state {i}");
            }
        }
    }
}

#[test]
fn vehicle_conservation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let cfg = random_config(&mut rng);
        let ni = cfg.on_ramps.len();
        for mode in [TrafficMode::Uncongested, TrafficMode::Congested] {
            let sys = build_model(&cfg, mode).unwrap();
            let (x, u) = random_point(&sys, &mut rng);
            let total: f64 = sys.rhs(&x, &u).iter().sum::<f64>() * PARAMS.l;
            let on: f64 = u.iter().skip(1).take(ni).sum();
            let off: f64 = u.iter().skip(1 + ni).sum();
            let boundary = match mode {
                TrafficMode::Uncongested => u[0] - q(&PARAMS, x[cfg.segments - 1]),
                TrafficMode::Congested => q(&PARAMS, x[0]) - u[0],
            };
            assert!((total - (boundary + on - off)).abs() <= 1e-12, "{mode:?}: {total} vs {}", boundary + on - off);
        }
    }
}

#[test]
fn nonlinearity_is_homogeneous_quadratic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sys = build_model(&presets::highway_a(TrafficMode::Uncongested), TrafficMode::Uncongested).unwrap();
    for _ in 0..50 {
        let (x, _) = random_point(&sys, &mut rng);
        let lambda: f64 = rng.random_range(-3.0..3.0);
        let lhs = sys.f(&(&x * lambda));
        let rhs = sys.f(&x) * (lambda * lambda);
        assert!((lhs - rhs).amax() <= 1e-15);
    }
}

#[test]
fn greenshield_relationships() {
    let p = PARAMS;
    assert_relative_eq!(p.flow(p.rho_c()), p.v_f * p.rho_m / 4.0, max_relative = 1e-15);
    assert_relative_eq!(p.capacity(), p.v_f * p.rho_m / 4.0, max_relative = 1e-15);
    assert_eq!(p.flow(0.0), 0.0);
    assert!(p.flow(p.rho_m).abs() < 1e-15 * p.capacity());
}

#[test]
fn jacobian_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for mode in [TrafficMode::Uncongested, TrafficMode::Congested] {
        let sys = build_model(&presets::highway_a(mode), mode).unwrap();
        assert_eq!(jacobian_f(&sys, &DVector::zeros(sys.n())).unwrap().amax(), 0.0);
        for _ in 0..100 {
            let (x, _) = random_point(&sys, &mut rng);
            let j = jacobian_f(&sys, &x).unwrap();
            let h = 1e-6;
            let mut fd = DMatrix::zeros(sys.n(), sys.n());
            for k in 0..sys.n() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                fd.set_column(k, &((sys.f(&xp) - sys.f(&xm)) / (2.0 * h)));
            }
            assert!((j - fd).norm() <= 1e-6);
        }
    }
}

#[test]
fn jacobian_pattern_for_plain_segment() {
    let cfg = HighwayConfig::plain(4, PARAMS).unwrap();
    let sys = build_model(&cfg, TrafficMode::Uncongested).unwrap();
    let x = DVector::from_vec(vec![0.01, 0.012, 0.015, 0.02]);
    let j = sys.jacobian(&x);
    assert_relative_eq!(j[(2, 2)], 2.0 * sys.delta * x[2], max_relative = 1e-15);
    assert_relative_eq!(j[(2, 1)], -2.0 * sys.delta * x[1], max_relative = 1e-15);
}

#[test]
fn equilibrium_without_input_is_origin() {
    let cfg = HighwayConfig::plain(2, PARAMS).unwrap();
    let sys = build_model(&cfg, TrafficMode::Uncongested).unwrap();
    let x = find_equilibrium(&sys, &DVector::zeros(1)).unwrap();
    assert!(x.amax() < 1e-12);
}

#[test]
fn equilibrium_is_greenshield_root() {
    let p = PARAMS;
    let f_in: f64 = 0.2;
    // v_f rho - (v_f / rho_m) rho^2 = f_in
    let a = p.v_f / p.rho_m;
    let disc = (p.v_f * p.v_f - 4.0 * a * f_in).sqrt();
    let small = (p.v_f - disc) / (2.0 * a);
    let large = (p.v_f + disc) / (2.0 * a);

    let cfg = HighwayConfig::plain(2, p).unwrap();
    let sys = build_model(&cfg, TrafficMode::Uncongested).unwrap();
    let x = find_equilibrium(&sys, &DVector::from_vec(vec![f_in])).unwrap();
    assert!(sys.rhs(&x, &DVector::from_vec(vec![f_in])).norm() <= 1e-10);
    for i in 0..2 {
        assert_relative_eq!(x[i], small, max_relative = 1e-6);
    }

    let sys = build_model(&cfg, TrafficMode::Congested).unwrap();
    let x = find_equilibrium(&sys, &DVector::from_vec(vec![f_in])).unwrap();
    for i in 0..2 {
        assert_relative_eq!(x[i], large, max_relative = 1e-6);
    }
    assert!(sys.contains(&x, 0.0));
}

#[test]
fn highway_file_round_trip() {
    let text = r#"{"N": 5, "v_f": 31.3, "rho_m": 0.053, "l": 500.0,
        "on_ramps": [2], "off_ramps": [{"segment": 4, "alpha": 0.15}], "mode": "congested"}"#;
    let spec = HighwaySpec::from_json(text).unwrap();
    assert_eq!(spec.config, presets::highway_b(TrafficMode::Congested));
    let again = HighwaySpec::from_json(&serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(again, spec);
    assert!(HighwaySpec::from_json(r#"{"N": 5, "mode": "congested"}"#).is_err());
}
