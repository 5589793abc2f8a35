use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;
use traffic_est_core::io::{write_atomic, MatrixJson, SCHEMA_VERSION};
use traffic_est_core::scenario::{mode_name, run_scenario, write_metrics_csv, RunOptions, ScenarioFile};
use traffic_est_core::sim::write_trace_csv;
use traffic_est_core::synthesis::{selection_matrix, synthesize, SynthesisOptions, SynthesisProblem};
use traffic_est_core::{build_model, lipschitz, presets, Error, HighwaySpec, TrafficMode};

#[derive(Parser)]
#[command(name = "traffic-est", version, about = "Highway density estimation experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Overrides the seed stored in the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Relative tolerance of the certificate check.
    #[arg(long, global = true, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Build the state-space model of a highway file.
    Build { config: PathBuf },
    /// Lipschitz constant of a highway file, or the scalability table with
    /// `--sweep`.
    Gamma {
        config: Option<PathBuf>,
        #[arg(long)]
        sweep: bool,
        /// Random pairs for the empirical lower bound.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Design the observer for a scenario.
    Synth { scenario: PathBuf },
    /// Simulate a scenario and write the trace.
    Sim {
        scenario: PathBuf,
        /// Observer gain written by `synth`.
        #[arg(long)]
        gain: Option<PathBuf>,
    },
    /// Run every estimator of a scenario on one trace and tabulate metrics.
    Compare {
        scenario: PathBuf,
        #[arg(long)]
        gain: Option<PathBuf>,
    },
    /// Lipschitz constants and design times across highway sizes.
    Sweep {
        /// Also solve the design program for each size.
        #[arg(long)]
        synth: bool,
        #[arg(long, value_delimiter = ',')]
        segments: Option<Vec<usize>>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Dimension { .. } | Error::Json(_) | Error::Io(_) => 2,
        Error::Infeasible(_) | Error::NotDetectable { .. } => 3,
        Error::NotConverged(_) | Error::Numerical(_) | Error::Equilibrium(_) => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let g = &cli.global;
    match &cli.cmd {
        Command::Build { config } => cmd_build(g, config),
        Command::Gamma { config, sweep, samples } => cmd_gamma(g, config.as_deref(), *sweep, *samples),
        Command::Synth { scenario } => cmd_synth(g, scenario),
        Command::Sim { scenario, gain } => cmd_sim(g, scenario, gain.as_deref()),
        Command::Compare { scenario, gain } => cmd_compare(g, scenario, gain.as_deref()),
        Command::Sweep { synth, segments } => cmd_sweep(g, *synth, segments.as_deref()),
    }
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn write(g: &Global, name: &str, contents: &[u8]) -> Result<PathBuf, Error> {
    let path = g.out_dir.join(name);
    write_atomic(&path, contents)?;
    Ok(path)
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<Vec<u8>, Error> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

fn load_scenario(g: &Global, path: &Path, gain: Option<&Path>) -> Result<ScenarioFile, Error> {
    let mut sc = ScenarioFile::from_json(&read(path)?)?;
    if let Some(seed) = g.seed {
        sc.seed = seed;
    }
    if let Some(p) = gain {
        let v: serde_json::Value = serde_json::from_str(&read(p)?)?;
        let l: MatrixJson = serde_json::from_value(v.get("l").cloned().unwrap_or_default())?;
        let mu = v
            .get("mu")
            .and_then(|m| m.as_f64())
            .ok_or_else(|| Error::Config(format!("{} has no mu", p.display())))?;
        sc.gain = Some(traffic_est_core::scenario::CachedGain { l, mu });
    }
    Ok(sc)
}

fn synthesis_options(g: &Global) -> SynthesisOptions {
    SynthesisOptions {
        verify_tol: g.tol,
        ..SynthesisOptions::default()
    }
}

fn cmd_build(g: &Global, path: &Path) -> Result<(), Error> {
    let spec = HighwaySpec::from_json(&read(path)?)?;
    let sys = build_model(&spec.config, spec.mode)?;
    let doc = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "units": "A in 1/s; B_u dimensionless per meter (veh/s in, veh/m/s out); delta in m/(veh s)",
        "mode": spec.mode,
        "config": spec.config,
        "n": sys.n(),
        "n_on": spec.config.n_on(),
        "n_off": spec.config.n_off(),
        "delta": sys.delta,
        "a": MatrixJson::from(&sys.a),
        "b_u": MatrixJson::from(&sys.b_u),
    });
    let out = write(g, "model.json", &to_json(&doc)?)?;
    println!(
        "n = {}, N_I = {}, N_O = {}, delta = {:.6e}",
        sys.n(),
        spec.config.n_on(),
        spec.config.n_off(),
        sys.delta
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_gamma(g: &Global, config: Option<&Path>, sweep: bool, samples: usize) -> Result<(), Error> {
    if sweep {
        let mut csv = String::from("# units: gamma_u in 1/s; seconds is wall clock\nsegments,gamma_u,seconds\n");
        for &n in &presets::SWEEP_SEGMENTS {
            let started = Instant::now();
            let cfg = presets::sweep_highway(n)?;
            let gamma = lipschitz::gamma(&cfg, TrafficMode::Uncongested)?;
            csv.push_str(&format!("{n},{gamma:.6},{:e}\n", started.elapsed().as_secs_f64()));
            println!("N = {n:4}  gamma_u = {gamma:.4}");
        }
        let out = write(g, "gamma_sweep.csv", csv.as_bytes())?;
        println!("wrote {}", out.display());
        return Ok(());
    }
    let path = config.ok_or_else(|| Error::Config("gamma needs a highway file or --sweep".into()))?;
    let spec = HighwaySpec::from_json(&read(path)?)?;
    let report = lipschitz::report(&spec.config, spec.mode, samples, g.seed.unwrap_or(0))?;
    let doc = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "units": "1/s",
        "report": report,
    });
    let out = write(g, "gamma.json", &to_json(&doc)?)?;
    println!(
        "gamma ({}) = {:.6}, empirical lower bound = {:.6} over {} pairs",
        mode_name(spec.mode),
        report.gamma_analytic,
        report.gamma_empirical_lower_bound,
        samples
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_synth(g: &Global, path: &Path) -> Result<(), Error> {
    let sc = load_scenario(g, path, None)?;
    let config = sc.highway_config()?;
    let sys = build_model(&config, sc.mode)?;
    let c = selection_matrix(sys.n(), &sc.sensor_list()?)?;
    let gamma = lipschitz::gamma_with(&config, sc.mode, sc.synthesis.gamma_bound)?;
    let prob = sc.synthesis_problem(&sys, &c, gamma)?;
    let mut opts = synthesis_options(g);
    if let Some(it) = sc.synthesis.max_iter {
        opts.solver.max_iter = it;
    }
    let r = synthesize(&prob, &opts)?;
    let mut doc = serde_json::to_value(&r)?;
    doc["schema_version"] = SCHEMA_VERSION.into();
    doc["gamma"] = gamma.into();
    let out = write(g, "gain.json", &to_json(&doc)?)?;
    println!(
        "mu = {:.6}, certificate {} (relative residuals {:.2e}, {:.2e}), {} iterations",
        r.mu,
        if r.residuals.passed { "verified" } else { "NOT verified" },
        r.residuals.lmi_b_relative,
        r.residuals.lmi_c_relative,
        r.solver_stats.iterations
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn cmd_sim(g: &Global, path: &Path, gain: Option<&Path>) -> Result<(), Error> {
    let sc = load_scenario(g, path, gain)?;
    let opts = RunOptions {
        synthesis: synthesis_options(g),
        seed: Some(sc.seed),
    };
    let out = run_scenario(&sc, &opts)?;
    let mut csv = Vec::new();
    out.trace.write_csv(&mut csv)?;
    let trace_path = write(g, "trace.csv", &csv)?;
    let mut summary = serde_json::to_value(out.trace.summary(out.mu))?;
    summary["seed"] = sc.seed.into();
    summary["gamma"] = out.gamma.into();
    summary["trace_sha256"] = digest(&csv).into();
    write(g, "summary.json", &to_json(&summary)?)?;
    for run in &out.filters {
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &run.t, &run.x, &[], &[], &[], &out.trace.w_norm)?;
        write(g, &format!("{}_estimate.csv", kind_name(run.kind)), &buf)?;
    }
    println!("trace sha256 {}", digest(&csv));
    if let Some(m) = out.trace.metrics() {
        println!("observer RMSE = {:.4} veh/km, ME = {:.4} veh/km", m.rmse, m.me);
    }
    println!("wrote {}", trace_path.display());
    Ok(())
}

fn kind_name(k: traffic_est_core::filters::FilterKind) -> &'static str {
    match k {
        traffic_est_core::filters::FilterKind::Ekf => "ekf",
        traffic_est_core::filters::FilterKind::Ukf => "ukf",
    }
}

fn cmd_compare(g: &Global, path: &Path, gain: Option<&Path>) -> Result<(), Error> {
    let sc = load_scenario(g, path, gain)?;
    let opts = RunOptions {
        synthesis: synthesis_options(g),
        seed: Some(sc.seed),
    };
    let out = run_scenario(&sc, &opts)?;
    let mut csv = Vec::new();
    write_metrics_csv(&mut csv, &out.table)?;
    write(g, "metrics.csv", &csv)?;
    let doc = out.metrics_document(sc.name.clone(), sc.seed);
    let json_path = write(g, "metrics.json", &to_json(&doc)?)?;
    println!("{:<10} {:>12} {:>12} {:>12}", "estimator", "delta_t [s]", "RMSE", "ME");
    for r in &out.table {
        println!(
            "{:<10} {:>12.4e} {:>12.4} {:>12.4}{}",
            r.estimator,
            r.delta_t,
            r.metrics.rmse,
            r.metrics.me,
            if r.diverged { "  (not converging)" } else { "" }
        );
    }
    println!("wrote {}", json_path.display());
    Ok(())
}

fn cmd_sweep(g: &Global, synth: bool, segments: Option<&[usize]>) -> Result<(), Error> {
    let counts = segments.unwrap_or(&presets::SWEEP_SEGMENTS);
    let mut csv = String::from(
        "# units: gamma_u in 1/s; times are wall clock seconds; mu dimensionless\n\
         segments,gamma_u,gamma_seconds,synth_status,mu,synth_seconds\n",
    );
    let opts = synthesis_options(g);
    for &n in counts {
        let started = Instant::now();
        let cfg = presets::sweep_highway(n)?;
        let gamma = lipschitz::gamma(&cfg, TrafficMode::Uncongested)?;
        let gamma_s = started.elapsed().as_secs_f64();
        let (status, mu, secs) = if synth {
            let sys = build_model(&cfg, TrafficMode::Uncongested)?;
            let nn = sys.n();
            let c = selection_matrix(nn, &presets::sweep_sensors(n))?;
            let (b_w, d_w) = traffic_est_core::synthesis::disturbance_maps(&sys.b_u, &c, 0.01, 0.01);
            let prob = SynthesisProblem {
                a: sys.a.clone(),
                c,
                b_w,
                d_w,
                z: DMatrix::identity(nn, nn) * 1e-3,
                gamma,
                alpha: 1e-3,
                mu1: 1e4,
            };
            let t0 = Instant::now();
            let res = synthesize(&prob, &opts);
            let secs = t0.elapsed().as_secs_f64();
            match res {
                Ok(r) => ("solved".to_string(), format!("{:.6}", r.mu), secs),
                Err(e @ (Error::Infeasible(_) | Error::NotDetectable { .. })) => {
                    log::info!("N = {n}: {e}");
                    ("infeasible".to_string(), String::new(), secs)
                }
                Err(e @ (Error::NotConverged(_) | Error::Numerical(_))) => {
                    log::info!("N = {n}: {e}");
                    ("failed".to_string(), String::new(), secs)
                }
                Err(e) => return Err(e),
            }
        } else {
            ("skipped".to_string(), String::new(), 0.0)
        };
        println!("N = {n:4}  gamma_u = {gamma:.4}  synthesis: {status} {mu}");
        csv.push_str(&format!("{n},{gamma:.6},{gamma_s:e},{status},{mu},{secs:e}\n"));
    }
    let out = write(g, "sweep.csv", csv.as_bytes())?;
    println!("wrote {}", out.display());
    Ok(())
}
