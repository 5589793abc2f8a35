use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use traffic_sdp::{solve, smat, svec, svec_index, svec_len, Cone, ConicProblem, CscMatrix, LinearSolverKind, Settings, Status};

fn dense_to_csc(m: &DMatrix<f64>) -> CscMatrix {
    let mut trip = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != 0.0 {
                trip.push((i, j, m[(i, j)]));
            }
        }
    }
    CscMatrix::from_triplets(m.nrows(), m.ncols(), &trip)
}

#[test]
fn scalar_lower_bound() {
    // min x  s.t.  x >= 3, written as -x + s = -3 with s in a 1x1 PSD cone.
    let a = CscMatrix::from_triplets(1, 1, &[(0, 0, -1.0)]);
    let p = ConicProblem::new(vec![1.0], a, vec![-3.0], vec![Cone::Psd(1)]).unwrap();
    let sol = solve(&p, &Settings::default()).unwrap();
    assert_eq!(sol.status, Status::Solved);
    assert!((sol.x[0] - 3.0).abs() < 1e-6, "x = {}", sol.x[0]);
    assert!((sol.y[0] - 1.0).abs() < 1e-6);
}

#[test]
fn trace_minimization_over_shifted_psd_cone() {
    // Variables: svec(P) for 2x2 P. min trace(P) s.t. P - I in PSD.
    let n = 2;
    let k = svec_len(n);
    let mut c = vec![0.0; k];
    for i in 0..n {
        c[svec_index(n, i, i)] = 1.0;
    }
    // s = svec(P) - svec(I)  =>  -svec(P) + s = -svec(I)
    let trip: Vec<_> = (0..k).map(|i| (i, i, -1.0)).collect();
    let a = CscMatrix::from_triplets(k, k, &trip);
    let b: Vec<f64> = svec(&DMatrix::identity(n, n)).into_iter().map(|v| -v).collect();
    let p = ConicProblem::new(c, a, b, vec![Cone::Psd(n)]).unwrap();
    let sol = solve(&p, &Settings::default()).unwrap();
    assert_eq!(sol.status, Status::Solved);
    let pm = smat(&sol.x, n);
    assert!((pm - DMatrix::<f64>::identity(n, n)).amax() < 1e-6);
    assert!((sol.primal_objective - 2.0).abs() < 1e-6);
}

/// Builds an SDP with a known optimum from a complementary primal/dual pair.
fn planted_problem(seed: u64, n: usize, k: usize, nonneg: usize) -> (ConicProblem, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = {
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        g.qr().q()
    };
    let r = n / 2;
    let mut ds = DMatrix::zeros(n, n);
    let mut dy = DMatrix::zeros(n, n);
    for i in 0..n {
        if i < r {
            ds[(i, i)] = rng.random_range(0.5..2.0);
        } else {
            dy[(i, i)] = rng.random_range(0.5..2.0);
        }
    }
    let s_mat = &q * ds * q.transpose();
    let y_mat = &q * dy * q.transpose();
    let mut s_star = svec(&s_mat);
    let mut y_star = svec(&y_mat);
    for i in 0..nonneg {
        if i % 2 == 0 {
            s_star.push(rng.random_range(0.5..2.0));
            y_star.push(0.0);
        } else {
            s_star.push(0.0);
            y_star.push(rng.random_range(0.5..2.0));
        }
    }
    let m = s_star.len();
    let a = DMatrix::from_fn(m, k, |_, _| if rng.random_bool(0.5) { rng.random_range(-1.0..1.0) } else { 0.0 });
    let x_star: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ax = &a * nalgebra::DVector::from_column_slice(&x_star);
    let b: Vec<f64> = (0..m).map(|i| ax[i] + s_star[i]).collect();
    let aty = a.transpose() * nalgebra::DVector::from_column_slice(&y_star);
    let c: Vec<f64> = aty.iter().map(|v| -v).collect();
    let opt: f64 = c.iter().zip(&x_star).map(|(a, b)| a * b).sum();
    let mut cones = vec![Cone::Psd(n)];
    if nonneg > 0 {
        cones.push(Cone::Nonneg(nonneg));
    }
    (ConicProblem::new(c, dense_to_csc(&a), b, cones).unwrap(), opt)
}

#[test]
fn planted_random_sdps_recover_known_optimum() {
    for seed in 0..5 {
        let (p, opt) = planted_problem(seed, 6, 12, 4);
        let sol = solve(&p, &Settings::default()).unwrap();
        assert_eq!(sol.status, Status::Solved, "seed {seed}");
        assert!(
            (sol.primal_objective - opt).abs() <= 1e-5 * opt.abs().max(1.0),
            "seed {seed}: got {} expected {}",
            sol.primal_objective,
            opt
        );
    }
}

#[test]
fn conjugate_gradient_backend_agrees_with_dense() {
    let (p, opt) = planted_problem(11, 5, 8, 2);
    let dense = solve(&p, &Settings { linear_solver: LinearSolverKind::Dense, ..Settings::default() }).unwrap();
    let cg = solve(
        &p,
        &Settings {
            linear_solver: LinearSolverKind::ConjugateGradient,
            ..Settings::default()
        },
    )
    .unwrap();
    assert_eq!(dense.status, Status::Solved);
    assert_eq!(cg.status, Status::Solved);
    assert!((dense.primal_objective - opt).abs() < 1e-5 * opt.abs().max(1.0));
    assert!((cg.primal_objective - opt).abs() < 1e-5 * opt.abs().max(1.0));
}

#[test]
fn equality_rows_are_respected() {
    // min x1 + x2  s.t. x1 - x2 = 1, x >= 0  => x = (1, 0).
    let a = CscMatrix::from_triplets(3, 2, &[(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (2, 1, -1.0)]);
    let p = ConicProblem::new(vec![1.0, 1.0], a, vec![1.0, 0.0, 0.0], vec![Cone::Zero(1), Cone::Nonneg(2)]).unwrap();
    let sol = solve(&p, &Settings::default()).unwrap();
    assert_eq!(sol.status, Status::Solved);
    assert!((sol.x[0] - 1.0).abs() < 1e-6 && sol.x[1].abs() < 1e-6, "{:?}", sol.x);
}

#[test]
fn detects_primal_infeasibility() {
    // x >= 1 and x <= -1.
    let a = CscMatrix::from_triplets(2, 1, &[(0, 0, -1.0), (1, 0, 1.0)]);
    let p = ConicProblem::new(vec![0.0], a, vec![-1.0, -1.0], vec![Cone::Nonneg(2)]).unwrap();
    let sol = solve(&p, &Settings::default()).unwrap();
    assert_eq!(sol.status, Status::PrimalInfeasible);
    let cert = sol.certificate.unwrap();
    assert!(cert.iter().all(|v| *v >= -1e-8));
}

#[test]
fn detects_psd_infeasibility() {
    // [[x, 1], [1, -x]] PSD has no solution (determinant -x^2 - 1 < 0).
    let n = 2;
    let k = svec_len(n);
    // s = svec([[x,1],[1,-x]]) = b - A x
    let a = vec![(svec_index(n, 0, 0), 0, -1.0), (svec_index(n, 1, 1), 0, 1.0)];
    let a = CscMatrix::from_triplets(k, 1, &a);
    let mut b = vec![0.0; k];
    b[svec_index(n, 1, 0)] = std::f64::consts::SQRT_2;
    let p = ConicProblem::new(vec![0.0], a, b, vec![Cone::Psd(n)]).unwrap();
    let sol = solve(&p, &Settings::default()).unwrap();
    assert_eq!(sol.status, Status::PrimalInfeasible);
}

#[test]
fn detects_unboundedness() {
    // min -x s.t. x >= 0.
    let a = CscMatrix::from_triplets(1, 1, &[(0, 0, -1.0)]);
    let p = ConicProblem::new(vec![-1.0], a, vec![0.0], vec![Cone::Nonneg(1)]).unwrap();
    let sol = solve(&p, &Settings::default()).unwrap();
    assert_eq!(sol.status, Status::DualInfeasible);
}

#[test]
fn iteration_cap_returns_best_iterate() {
    let (p, _) = planted_problem(3, 6, 12, 0);
    let sol = solve(&p, &Settings { max_iter: 30, ..Settings::default() }).unwrap();
    assert_eq!(sol.status, Status::MaxIterations);
    assert!(sol.primal_residual.is_finite() && sol.dual_residual.is_finite());
}

#[test]
fn solves_are_deterministic() {
    let (p, _) = planted_problem(7, 5, 9, 3);
    let a = solve(&p, &Settings::default()).unwrap();
    let b = solve(&p, &Settings::default()).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn rejects_malformed_problems() {
    let a = CscMatrix::from_triplets(2, 1, &[(0, 0, 1.0)]);
    assert!(ConicProblem::new(vec![1.0], a.clone(), vec![0.0], vec![Cone::Nonneg(2)]).is_err());
    assert!(ConicProblem::new(vec![f64::NAN], a, vec![0.0, 0.0], vec![Cone::Nonneg(2)]).is_err());
}
