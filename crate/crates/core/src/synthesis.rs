//! L-infinity observer synthesis.
//!
//! With the decay rate `alpha` and the weight `mu1` fixed, the design
//! conditions are linear in `(P, Y, eps, mu0, mu2)`:
//!
//! ```text
//! minimize  mu0 * mu1 + mu2
//! s.t.  [ Psi            P       (Bw'P - Dw'Y')' ]
//!       [ P              -eps I  0               ]  <= 0
//!       [ Bw'P - Dw'Y'   0       -alpha mu0 I    ]
//!
//!       [ -P  0       Z'     ]
//!       [ 0   -mu2 I  0      ]  <= 0,     P > 0,  eps, mu0, mu2 >= 0
//!       [ Z   0       -mu1 I ]
//!
//! Psi = A'P + PA - C'Y' - YC + alpha P + eps gamma^2 I
//! ```
//!
//! The gain is `L = P^-1 Y` and the performance level `mu = sqrt(mu0 mu1 + mu2)`.

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, jacobi_eigenvalues, null_space, rank_complex, symmetrize};
use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;
use traffic_sdp::{solve, svec_index, svec_len, Cone, ConicProblem, CscMatrix, Settings, Status};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisProblem {
    #[serde(with = "crate::io::matrix")]
    pub a: DMatrix<f64>,
    #[serde(with = "crate::io::matrix")]
    pub c: DMatrix<f64>,
    #[serde(with = "crate::io::matrix")]
    pub b_w: DMatrix<f64>,
    #[serde(with = "crate::io::matrix")]
    pub d_w: DMatrix<f64>,
    #[serde(with = "crate::io::matrix")]
    pub z: DMatrix<f64>,
    pub gamma: f64,
    pub alpha: f64,
    pub mu1: f64,
}

impl SynthesisProblem {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }
    pub fn q(&self) -> usize {
        self.b_w.ncols()
    }
    pub fn nz(&self) -> usize {
        self.z.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p, q) = (self.n(), self.p(), self.q());
        let dims = [
            ("A columns", n, self.a.ncols()),
            ("C columns", n, self.c.ncols()),
            ("B_w rows", n, self.b_w.nrows()),
            ("D_w rows", p, self.d_w.nrows()),
            ("D_w columns", q, self.d_w.ncols()),
            ("Z columns", n, self.z.ncols()),
        ];
        for (what, expected, got) in dims {
            if expected != got {
                return Err(Error::Dimension { what, expected, got });
            }
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.mu1 > 0.0 && self.mu1.is_finite()) {
            return Err(Error::Config(format!("mu1 must be positive, got {}", self.mu1)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be nonnegative, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Decision variables of the program.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmiVariables {
    #[serde(with = "crate::io::matrix")]
    pub p: DMatrix<f64>,
    #[serde(with = "crate::io::matrix")]
    pub y: DMatrix<f64>,
    pub eps: f64,
    pub mu0: f64,
    pub mu2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverStats {
    /// Solver termination status; a design returned after hitting the
    /// iteration cap is feasible (certificate checked) but not proven optimal.
    pub status: String,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub solve_seconds: f64,
    pub rho_updates: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisResult {
    #[serde(flatten)]
    pub vars: LmiVariables,
    #[serde(with = "crate::io::matrix")]
    pub l: DMatrix<f64>,
    pub mu: f64,
    pub mu1: f64,
    pub alpha: f64,
    pub residuals: CertificateReport,
    pub solver_stats: SolverStats,
}

/// Dense assembly of both matrix inequalities exactly as written.
pub fn assemble_lmis(prob: &SynthesisProblem, vars: &LmiVariables) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    prob.validate()?;
    let (n, p, q, nz) = (prob.n(), prob.p(), prob.q(), prob.nz());
    for (what, expected, got) in [
        ("P rows", n, vars.p.nrows()),
        ("P columns", n, vars.p.ncols()),
        ("Y rows", n, vars.y.nrows()),
        ("Y columns", p, vars.y.ncols()),
    ] {
        if expected != got {
            return Err(Error::Dimension { what, expected, got });
        }
    }
    let pm = &vars.p;
    let yc = &vars.y * &prob.c;
    let psi = prob.a.transpose() * pm + pm * &prob.a - yc.transpose() - &yc
        + pm * prob.alpha
        + DMatrix::identity(n, n) * (vars.eps * prob.gamma * prob.gamma);
    let m31 = prob.b_w.transpose() * pm - prob.d_w.transpose() * vars.y.transpose();

    let mut b = DMatrix::zeros(2 * n + q, 2 * n + q);
    b.view_mut((0, 0), (n, n)).copy_from(&psi);
    b.view_mut((n, 0), (n, n)).copy_from(pm);
    b.view_mut((0, n), (n, n)).copy_from(pm);
    b.view_mut((n, n), (n, n)).copy_from(&(DMatrix::identity(n, n) * -vars.eps));
    b.view_mut((2 * n, 0), (q, n)).copy_from(&m31);
    b.view_mut((0, 2 * n), (n, q)).copy_from(&m31.transpose());
    b.view_mut((2 * n, 2 * n), (q, q))
        .copy_from(&(DMatrix::identity(q, q) * (-prob.alpha * vars.mu0)));

    let mut c = DMatrix::zeros(n + q + nz, n + q + nz);
    c.view_mut((0, 0), (n, n)).copy_from(&(-pm));
    c.view_mut((n, n), (q, q)).copy_from(&(DMatrix::identity(q, q) * -vars.mu2));
    c.view_mut((n + q, 0), (nz, n)).copy_from(&prob.z);
    c.view_mut((0, n + q), (n, nz)).copy_from(&prob.z.transpose());
    c.view_mut((n + q, n + q), (nz, nz))
        .copy_from(&(DMatrix::identity(nz, nz) * -prob.mu1));
    Ok((b, c))
}

/// PBH test: every eigenvalue with nonnegative real part must keep
/// `[A - lambda I; C]` at full column rank.
pub fn check_detectability(a: &DMatrix<f64>, c: &DMatrix<f64>, rank_tol: f64) -> Result<()> {
    let n = a.nrows();
    let p = c.nrows();
    let mut seen: Vec<Complex<f64>> = Vec::new();
    for lambda in eigenvalues(a) {
        if lambda.re < 0.0 {
            continue;
        }
        if seen.iter().any(|s| (s - lambda).norm() <= 1e-12 * (1.0 + lambda.norm())) {
            continue;
        }
        seen.push(lambda);
        let m = DMatrix::from_fn(n + p, n, |i, j| {
            if i < n {
                Complex::new(a[(i, j)], 0.0) - if i == j { lambda } else { Complex::new(0.0, 0.0) }
            } else {
                Complex::new(c[(i - n, j)], 0.0)
            }
        });
        let r = rank_complex(&m, rank_tol);
        if r < n {
            return Err(Error::NotDetectable {
                re: lambda.re,
                im: lambda.im,
                deficit: n - r,
            });
        }
    }
    Ok(())
}

/// Necessary condition for the first inequality: for every unit `v` with
/// `C v = 0`, `gamma <= |(A + alpha/2 I) v|`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectionBound {
    /// `sigma_min((A + alpha/2 I) N)` over an orthonormal basis `N` of ker C;
    /// infinite when `C` has trivial kernel.
    pub bound: f64,
    pub gamma: f64,
    /// Unit vector in ker C attaining the bound.
    pub witness: Vec<f64>,
}

impl InjectionBound {
    pub fn violated(&self) -> bool {
        self.gamma > self.bound * (1.0 + 1e-9)
    }
}

pub fn output_injection_bound(prob: &SynthesisProblem) -> InjectionBound {
    let n = prob.n();
    let ker = null_space(&prob.c, 1e-9);
    if ker.ncols() == 0 {
        return InjectionBound {
            bound: f64::INFINITY,
            gamma: prob.gamma,
            witness: Vec::new(),
        };
    }
    let shifted = &prob.a + DMatrix::identity(n, n) * (prob.alpha / 2.0);
    let m = shifted * &ker;
    // Smallest singular value via the Gram matrix so the right singular
    // vector is always available.
    let eig = (m.transpose() * &m).symmetric_eigen();
    let (k, lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let v = &ker * eig.eigenvectors.column(k);
    InjectionBound {
        bound: lmin.max(0.0).sqrt(),
        gamma: prob.gamma,
        witness: v.iter().copied().collect(),
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    pub solver: Settings,
    /// Margin `d` in `P >= d I` realizing strict positivity.
    pub pd_margin: f64,
    /// Relative tolerance for the independent certificate check.
    pub verify_tol: f64,
    pub rank_tol: f64,
    /// Skip the detectability and output-injection prechecks.
    pub skip_prechecks: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            solver: Settings::default(),
            pd_margin: 1e-8,
            verify_tol: 1e-6,
            rank_tol: 1e-9,
            skip_prechecks: false,
        }
    }
}

struct Layout {
    n: usize,
    p: usize,
}

impl Layout {
    fn p_var(&self, i: usize, j: usize) -> usize {
        svec_index(self.n, i, j)
    }
    fn y_var(&self, i: usize, j: usize) -> usize {
        svec_len(self.n) + j * self.n + i
    }
    fn eps(&self) -> usize {
        svec_len(self.n) + self.n * self.p
    }
    fn mu0(&self) -> usize {
        self.eps() + 1
    }
    fn mu2(&self) -> usize {
        self.eps() + 2
    }
    fn count(&self) -> usize {
        self.eps() + 3
    }
}

/// Lower-triangle accumulator of a symmetric matrix that is linear in the
/// decision variables: `(row, col) -> [(var, coeff)]`.
struct SymLinear {
    dim: usize,
    entries: BTreeMap<(usize, usize), BTreeMap<usize, f64>>,
}

impl SymLinear {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
        }
    }

    /// Add `v * var` to entries `(r, c)` and `(c, r)` of the matrix.
    fn add(&mut self, r: usize, c: usize, var: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        let key = if r >= c { (r, c) } else { (c, r) };
        *self.entries.entry(key).or_default().entry(var).or_insert(0.0) += v;
    }

    /// Add `v * var` to entry `(r, c)` of `T` in `M = T + T'`.
    fn add_sym_part(&mut self, r: usize, c: usize, var: usize, v: f64) {
        if r == c {
            self.add(r, r, var, 2.0 * v);
        } else {
            self.add(r, c, var, v);
        }
    }

    /// Triplets of `svec(sign * M)` with the given row offset.
    fn triplets(&self, offset: usize, sign: f64, out: &mut Vec<(usize, usize, f64)>) {
        for (&(r, c), vars) in &self.entries {
            let row = offset + svec_index(self.dim, r, c);
            let w = if r == c { 1.0 } else { SQRT_2 };
            for (&var, &v) in vars {
                out.push((row, var, sign * w * v));
            }
        }
    }
}

/// Build the conic program in scaled variables
/// `(P^, Y^, eps^, mu0^) = mu1 (P, Y, eps, mu0)`, with the congruences
/// `diag(I, I, I/sqrt(alpha))` on the first inequality and
/// `diag(sqrt(mu1) I, I, I/sqrt(mu1))` on the second. Both are exact
/// equivalences that bring the data to unit scale; the objective becomes
/// `mu0^ + mu2`.
///
/// Variables: svec(P^), vec(Y^) (column-major), eps^, mu0^, mu2. Every
/// block is written as `s = b - A x` in a PSD or nonnegative cone.
fn build_conic(prob: &SynthesisProblem, pd_margin: f64) -> Result<(ConicProblem, Layout)> {
    let (n, p, q, nz) = (prob.n(), prob.p(), prob.q(), prob.nz());
    let lay = Layout { n, p };
    let a = &prob.a;
    let g2 = prob.gamma * prob.gamma;
    let s3 = 1.0 / prob.alpha.sqrt();

    // First inequality, dimension 2n + q.
    let mut lb = SymLinear::new(2 * n + q);
    for i in 0..n {
        for j in 0..=i {
            let var = lay.p_var(i, j);
            // P = s (E_ij + E_ji), with s = 1/sqrt2 off the diagonal.
            let s = if i == j { 1.0 } else { 1.0 / SQRT_2 };
            let pairs: &[(usize, usize)] = if i == j { &[(i, i)] } else { &[(i, j), (j, i)] };
            for &(r0, c0) in pairs {
                // T = P A: row r0 of T gets s * A[c0, :].
                for k in 0..n {
                    lb.add_sym_part(r0, k, var, s * a[(c0, k)]);
                }
                if r0 >= c0 {
                    lb.add(r0, c0, var, prob.alpha * s);
                }
                // (2,1) block: P.
                lb.add(n + r0, c0, var, s);
                // (3,1) block: Bw' P, column c0 gets s * Bw[r0, :]'.
                for k in 0..q {
                    lb.add(2 * n + k, c0, var, s3 * s * prob.b_w[(r0, k)]);
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..p {
            let var = lay.y_var(i, j);
            // T = Y C: row i of T gets C[j, :]; enters with a minus sign.
            for k in 0..n {
                lb.add_sym_part(i, k, var, -prob.c[(j, k)]);
            }
            // (3,1) block: -Dw' Y', column i gets -Dw[j, :]'.
            for k in 0..q {
                lb.add(2 * n + k, i, var, -s3 * prob.d_w[(j, k)]);
            }
        }
    }
    for i in 0..n {
        lb.add(i, i, lay.eps(), g2);
        lb.add(n + i, n + i, lay.eps(), -1.0);
    }
    for k in 0..q {
        lb.add(2 * n + k, 2 * n + k, lay.mu0(), -1.0);
    }

    // Second inequality, dimension n + q + nz; constant part goes to b.
    let dc = n + q + nz;
    let mut lc = SymLinear::new(dc);
    for i in 0..n {
        for j in 0..=i {
            let var = lay.p_var(i, j);
            let s = if i == j { 1.0 } else { 1.0 / SQRT_2 };
            lc.add(i, j, var, -s);
        }
    }
    for k in 0..q {
        lc.add(n + k, n + k, lay.mu2(), -1.0);
    }

    let m_b = svec_len(2 * n + q);
    let m_c = svec_len(dc);
    let m_p = svec_len(n);
    let nvar = lay.count();
    let mut trip = Vec::new();
    // s = -M(x)  =>  A = svec(M_k), b = -svec(M_0)
    lb.triplets(0, 1.0, &mut trip);
    lc.triplets(m_b, 1.0, &mut trip);
    let mut b = vec![0.0; m_b + m_c + m_p + 3];
    for i in 0..nz {
        for j in 0..n {
            let v = prob.z[(i, j)];
            if v != 0.0 {
                b[m_b + svec_index(dc, n + q + i, j)] = -SQRT_2 * v;
            }
        }
    }
    for i in 0..nz {
        b[m_b + svec_index(dc, n + q + i, n + q + i)] = 1.0;
    }
    // s = svec(P^) - mu1 d svec(I)
    for k in 0..m_p {
        trip.push((m_b + m_c + k, k, -1.0));
    }
    for i in 0..n {
        b[m_b + m_c + svec_index(n, i, i)] = -pd_margin * prob.mu1;
    }
    // eps, mu0, mu2 >= 0
    for (k, var) in [lay.eps(), lay.mu0(), lay.mu2()].into_iter().enumerate() {
        trip.push((m_b + m_c + m_p + k, var, -1.0));
    }
    let a_mat = CscMatrix::from_triplets(b.len(), nvar, &trip);
    let mut cvec = vec![0.0; nvar];
    cvec[lay.mu0()] = 1.0;
    cvec[lay.mu2()] = 1.0;
    let cones = vec![Cone::Psd(2 * n + q), Cone::Psd(dc), Cone::Psd(n), Cone::Nonneg(3)];
    Ok((ConicProblem::new(cvec, a_mat, b, cones)?, lay))
}

/// Map the scaled solution back to the original variables.
fn extract(x: &[f64], lay: &Layout, mu1: f64) -> LmiVariables {
    let n = lay.n;
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = x[lay.p_var(i, j)] / if i == j { 1.0 } else { SQRT_2 } / mu1;
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
    let y = DMatrix::from_fn(n, lay.p, |i, j| x[lay.y_var(i, j)] / mu1);
    LmiVariables {
        p,
        y,
        eps: x[lay.eps()].max(0.0) / mu1,
        mu0: x[lay.mu0()].max(0.0) / mu1,
        mu2: x[lay.mu2()].max(0.0),
    }
}

/// Solve the design program. Runs the PBH detectability test and the
/// output-injection bound first; both failures are reported without
/// calling the solver.
pub fn synthesize(prob: &SynthesisProblem, opts: &SynthesisOptions) -> Result<SynthesisResult> {
    prob.validate()?;
    if !opts.skip_prechecks {
        check_detectability(&prob.a, &prob.c, opts.rank_tol)?;
        let inj = output_injection_bound(prob);
        if inj.violated() {
            let (idx, _) = inj
                .witness
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
            return Err(Error::Infeasible(format!(
                "output-injection bound violated: gamma = {:.6} exceeds sigma_min((A + alpha/2 I) ker C) = {:.6}; \
                 witness direction in ker C concentrated on state {} (0-based)",
                inj.gamma, inj.bound, idx
            )));
        }
    }
    let (conic, lay) = build_conic(prob, opts.pd_margin)?;
    let sol = solve(&conic, &opts.solver)?;
    let stats = SolverStats {
        status: format!("{:?}", sol.status),
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        gap: sol.gap,
        solve_seconds: sol.solve_time.as_secs_f64(),
        rho_updates: sol.rho_updates,
    };
    let not_converged = || {
        Error::NotConverged(format!(
            "{:?} after {} iterations: primal {:.3e}, dual {:.3e}, gap {:.3e}",
            sol.status, sol.iterations, sol.primal_residual, sol.dual_residual, sol.gap
        ))
    };
    let raw = match sol.status {
        Status::Solved | Status::MaxIterations | Status::TimeLimit => extract(&sol.x, &lay, prob.mu1),
        Status::PrimalInfeasible => {
            return Err(Error::Infeasible(format!(
                "solver found a primal infeasibility certificate after {} iterations (certificate residual {:.3e})",
                sol.iterations,
                sol.certificate_residual.unwrap_or(f64::NAN)
            )))
        }
        Status::DualInfeasible => {
            return Err(Error::Numerical(
                "solver reports the program unbounded, which the design program cannot be".into(),
            ))
        }
    };
    let vars = match polish(prob, &raw, opts.pd_margin) {
        Some(v) => v,
        None if sol.status == Status::Solved => raw,
        None => return Err(not_converged()),
    };
    if sol.status != Status::Solved {
        let check = verify_certificate(prob, &vars, opts.verify_tol, opts.pd_margin * 0.5)?;
        if !check.passed {
            return Err(not_converged());
        }
        log::warn!(
            "solver stopped with {:?}; returning the best iterate, which carries a valid certificate",
            sol.status
        );
    }
    let l = vars
        .p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("returned P is not positive definite".into()))?
        .solve(&vars.y);
    let mu = (vars.mu0 * prob.mu1 + vars.mu2).sqrt();
    let residuals = verify_certificate(prob, &vars, opts.verify_tol, opts.pd_margin * 0.5)?;
    Ok(SynthesisResult {
        vars,
        l,
        mu,
        mu1: prob.mu1,
        alpha: prob.alpha,
        residuals,
        solver_stats: stats,
    })
}

/// Restore exact feasibility at an approximate solution. `mu2` sits in its
/// own diagonal block and is optimal at zero, so `(P, Y, eps)` is scaled up
/// until `P >= Z'Z / mu1` and `P >= margin I`, and `mu0` is set to the
/// smallest value that keeps the first inequality, a Schur complement of its
/// leading `2n` block. Returns `None` if that block is not negative definite.
pub fn polish(prob: &SynthesisProblem, vars: &LmiVariables, pd_margin: f64) -> Option<LmiVariables> {
    let n = prob.n();
    let p = symmetrize(&vars.p);
    let chol = p.clone().cholesky()?;
    let lower = chol.l();
    let spread = |w: DMatrix<f64>| -> Option<f64> {
        let t = lower.solve_lower_triangular(&w)?;
        let k = lower.solve_lower_triangular(&t.transpose())?;
        Some(symmetrize(&k).symmetric_eigenvalues().max())
    };
    let need = spread(prob.z.transpose() * &prob.z / prob.mu1)?.max(spread(DMatrix::identity(n, n) * pd_margin)?);
    let t = if need > 1.0 { need * (1.0 + 1e-9) } else { 1.0 };
    let mut out = LmiVariables {
        p: p * t,
        y: &vars.y * t,
        eps: vars.eps * t,
        mu0: 0.0,
        mu2: 0.0,
    };
    let (mb, _) = assemble_lmis(prob, &out).ok()?;
    let m = symmetrize(&mb.view((0, 0), (2 * n, 2 * n)).into_owned());
    let neg = (-m).cholesky()?;
    let q = prob.q();
    if q > 0 {
        let nb = mb.view((2 * n, 0), (q, 2 * n)).into_owned();
        let k = &nb * neg.solve(&nb.transpose());
        let top = symmetrize(&k).symmetric_eigenvalues().max().max(0.0);
        out.mu0 = top / prob.alpha * (1.0 + 1e-9);
    }
    out.mu0.is_finite().then_some(out)
}

/// Try each `alpha` and keep the feasible design with the smallest `mu`.
pub fn synthesize_alpha_search(
    prob: &SynthesisProblem,
    alphas: &[f64],
    opts: &SynthesisOptions,
) -> Result<SynthesisResult> {
    let mut best: Option<SynthesisResult> = None;
    let mut last_err = None;
    for &alpha in alphas {
        let trial = SynthesisProblem {
            alpha,
            ..prob.clone()
        };
        match synthesize(&trial, opts) {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.mu < b.mu) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Config("empty alpha grid".into())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateReport {
    pub lmi_b_max_eig: f64,
    pub lmi_c_max_eig: f64,
    /// Largest eigenvalue divided by the spectral radius of the matrix.
    pub lmi_b_relative: f64,
    pub lmi_c_relative: f64,
    pub p_min_eig: f64,
    pub tol: f64,
    pub tol_pd: f64,
    pub passed: bool,
}

/// Recompute both inequalities at `vars` and check their spectra with a
/// Jacobi eigensolver.
pub fn verify_certificate(
    prob: &SynthesisProblem,
    vars: &LmiVariables,
    tol: f64,
    tol_pd: f64,
) -> Result<CertificateReport> {
    let (mb, mc) = assemble_lmis(prob, vars)?;
    let eb = jacobi_eigenvalues(&symmetrize(&mb));
    let ec = jacobi_eigenvalues(&symmetrize(&mc));
    let ep = jacobi_eigenvalues(&symmetrize(&vars.p));
    let spread = |e: &[f64]| e.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    let bmax = *eb.last().unwrap_or(&0.0);
    let cmax = *ec.last().unwrap_or(&0.0);
    let pmin = *ep.first().unwrap_or(&0.0);
    let brel = bmax / spread(&eb);
    let crel = cmax / spread(&ec);
    Ok(CertificateReport {
        lmi_b_max_eig: bmax,
        lmi_c_max_eig: cmax,
        lmi_b_relative: brel,
        lmi_c_relative: crel,
        p_min_eig: pmin,
        tol,
        tol_pd,
        passed: brel <= tol && crel <= tol && pmin >= tol_pd,
    })
}

/// Spectral abscissa of `A - L C`.
pub fn closed_loop_abscissa(a: &DMatrix<f64>, l: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    let m = a - l * c;
    m.complex_eigenvalues().iter().fold(f64::NEG_INFINITY, |acc, z| acc.max(z.re))
}

/// Selection matrix measuring the listed state indices.
pub fn selection_matrix(n: usize, sensors: &[usize]) -> Result<DMatrix<f64>> {
    if sensors.is_empty() {
        return Err(Error::Config("at least one sensor is required".into()));
    }
    let mut seen = vec![false; n];
    let mut c = DMatrix::zeros(sensors.len(), n);
    for (row, &s) in sensors.iter().enumerate() {
        if s >= n {
            return Err(Error::Config(format!("sensor index {s} out of range for {n} states")));
        }
        if seen[s] {
            return Err(Error::Config(format!("sensor index {s} listed twice")));
        }
        seen[s] = true;
        c[(row, s)] = 1.0;
    }
    Ok(c)
}

/// Disturbance maps `B_w = [g_u B_u  O]` and `D_w = [O  g_y C]` for
/// `w = [input part; state part]`.
pub fn disturbance_maps(b_u: &DMatrix<f64>, c: &DMatrix<f64>, g_u: f64, g_y: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = b_u.nrows();
    let m = b_u.ncols();
    let p = c.nrows();
    let q = m + n;
    let mut b_w = DMatrix::zeros(n, q);
    b_w.view_mut((0, 0), (n, m)).copy_from(&(b_u * g_u));
    let mut d_w = DMatrix::zeros(p, q);
    d_w.view_mut((0, m), (p, n)).copy_from(&(c * g_y));
    (b_w, d_w)
}

/// Relative mismatch in `P L = Y`.
pub fn gain_consistency(vars: &LmiVariables, l: &DMatrix<f64>) -> f64 {
    let lhs = &vars.p * l;
    (lhs - &vars.y).amax() / vars.y.amax().max(f64::MIN_POSITIVE)
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
