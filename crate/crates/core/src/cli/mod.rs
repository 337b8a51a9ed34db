//! The `rps-sim` command-line front end.
//!
//! A JSON document selects one experiment; its results go to an output
//! directory as CSV tables, SVG charts and a `manifest.json` recording the
//! seed and a hash of the configuration.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde_json::json;
use sha2::{Digest, Sha256};

pub use config::{
    parse_config, Block, Command, ConvergeBlock, CouplingBlock, ExperimentConfig, PeriodicityBlock, PullbackBlock,
    ReferenceSpec, SchemeSpec, SimulateBlock, ValidateBlock,
};

use crate::error::{Error, Result};
use crate::msq::{self, ConvergenceStudy, Reference};
use crate::noise::BrownianGrid;
use crate::plot::{Chart, Series};
use crate::problem::HybridSampler;
use crate::rps::{self, ContractionConstants, CouplingConfig, PeriodicityConfig, PullbackConfig};
use crate::schemes::{self, SchemeConfig, StepBoundParams};
use crate::montecarlo;

#[derive(Debug, Parser)]
#[command(name = "rps-sim", version, about = "Projected Milstein experiments for random periodic SDEs")]
pub struct Args {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides `out` in the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, env = "RPS_SIM_THREADS")]
    pub threads: Option<usize>,
}

/// Exit status for an error: 2 for experiment failures, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Experiment { .. } => 2,
        _ => 1,
    }
}

/// Parses `argv`, runs the experiment and returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_args(&args) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("rps-sim: {e}");
            exit_code(&e)
        }
    }
}

pub fn run_args(args: &Args) -> Result<String> {
    let text = fs::read(&args.config).map_err(|e| Error::Io(format!("{}: {e}", args.config.display())))?;
    let text_str = std::str::from_utf8(&text).map_err(|_| Error::Invalid(vec!["configuration is not UTF-8".into()]))?;
    let mut config = parse_config(text_str)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.out.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set \"out\"".into()))?;
    let hash = hex_digest(&text);
    run(&config, &out, args.threads, &hash)
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Runs a parsed configuration on a pool of `threads` workers and writes
/// all artifacts into `out`. Returns the human-readable summary.
pub fn run(config: &ExperimentConfig, out: &Path, threads: Option<usize>, config_sha256: &str) -> Result<String> {
    fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut files = Vec::new();
    let result = pool.install(|| dispatch(config, out, &mut files));
    write_manifest(config, out, config_sha256, &files, result.as_ref().err())?;
    result
}

fn write_file(out: &Path, name: &str, contents: &str, files: &mut Vec<String>) -> Result<()> {
    let path = out.join(name);
    fs::write(&path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    files.push(name.to_string());
    Ok(())
}

fn write_manifest(config: &ExperimentConfig, out: &Path, hash: &str, files: &[String], error: Option<&Error>) -> Result<()> {
    let manifest = json!({
        "tool": "rps-sim",
        "version": env!("CARGO_PKG_VERSION"),
        "rng": "chacha8 counter stream, Box-Muller",
        "command": config.command.as_str(),
        "seed": config.seed,
        "config_sha256": hash,
        "config": config.raw,
        "files": files,
        "status": match error {
            None => "ok".to_string(),
            Some(e) => e.to_string(),
        },
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    let path = out.join("manifest.json");
    fs::write(&path, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn scheme_config(config: &ExperimentConfig) -> Result<SchemeConfig> {
    let s = config.scheme.as_ref().ok_or_else(|| Error::Config("scheme block required".into()))?;
    SchemeConfig::new(s.kind, s.h, s.gamma.unwrap_or(config.problem.gamma()))
}

fn dispatch(config: &ExperimentConfig, out: &Path, files: &mut Vec<String>) -> Result<String> {
    match &config.block {
        Block::Simulate(b) => run_simulate(config, b, out, files),
        Block::Pullback(b) => run_pullback(config, b, out, files),
        Block::Periodicity(b) => run_periodicity(config, b, out, files),
        Block::Coupling(b) => run_coupling(config, b, out, files),
        Block::Converge(b) => run_converge(config, b, out, files),
        Block::Validate(b) => run_validate(config, b, out, files),
    }
}

fn header(d: usize) -> String {
    (1..=d).map(|i| format!(",x{i}")).collect()
}

fn run_simulate(config: &ExperimentConfig, b: &SimulateBlock, out: &Path, files: &mut Vec<String>) -> Result<String> {
    let p = &config.problem;
    let scheme = scheme_config(config)?;
    let h = scheme.h();
    let runs = montecarlo::map_samples(b.samples, |i| {
        let grid = BrownianGrid::sample_stream(config.seed, i as u64, b.t0, b.t_end, h, p.noise_dim())?;
        let stride = b.stride.unwrap_or_else(|| schemes::default_stride(grid.steps()));
        schemes::simulate_strided(p, &scheme, &grid.view(), &b.xi, stride)
    });
    let mut csv = format!("sample,t{}\n", header(p.dim()));
    let mut chart = Chart::new(format!("{} sample paths ({})", p.label(), scheme.kind()), "t", "x1");
    let mut failures = 0;
    for (i, run) in runs.into_iter().enumerate() {
        let traj = match run {
            Ok(t) => t,
            Err(Error::BlowUp { .. }) | Err(Error::Evaluation { .. }) => {
                failures += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        for n in 0..traj.len() {
            let _ = write!(csv, "{i},{}", traj.time(n));
            for v in traj.state(n) {
                let _ = write!(csv, ",{v}");
            }
            csv.push('\n');
        }
        if i < 5 {
            let pts = (0..traj.len()).map(|n| (traj.time(n), traj.state(n)[0])).collect();
            chart = chart.with(Series::new(format!("sample {i}"), pts));
        }
    }
    write_file(out, "simulate.csv", &csv, files)?;
    write_file(out, "simulate.svg", &chart.to_svg(), files)?;
    montecarlo::check_failures(failures, b.samples)?;
    Ok(format!("simulate: {} samples, {failures} blow-ups\n", b.samples))
}

fn run_pullback(config: &ExperimentConfig, b: &PullbackBlock, out: &Path, files: &mut Vec<String>) -> Result<String> {
    let cfg = PullbackConfig {
        problem: config.problem.clone(),
        scheme: scheme_config(config)?,
        k_list: b.k_list.clone(),
        window: b.window,
        xi_list: b.xi_list.clone(),
        seed: config.seed,
    };
    let r = rps::pullback_limit(&cfg, b.samples)?;
    let mut csv = String::from("k,t,value_mean,value_var\n");
    let mut chart = Chart::new(format!("pull-back means, {}", config.problem.label()), "t", "E x1");
    for (ki, k) in r.k_list.iter().enumerate() {
        for (n, t) in r.times.iter().enumerate() {
            let _ = writeln!(csv, "{k},{t},{},{}", r.mean[ki][n], r.variance[ki][n]);
        }
        let pts = r.times.iter().copied().zip(r.mean[ki].iter().copied()).collect();
        chart = chart.with(Series::new(format!("k = {k}"), pts));
    }
    write_file(out, "pullback.csv", &csv, files)?;
    let mut cauchy = String::from("k,k_next,msq,stderr\n");
    for c in &r.cauchy {
        let _ = writeln!(cauchy, "{},{},{},{}", c.k, c.k_next, c.msq, c.stderr);
    }
    write_file(out, "cauchy.csv", &cauchy, files)?;
    write_file(out, "pullback.svg", &chart.to_svg(), files)?;
    let mut s = format!("pullback: {} samples, {} blow-ups\n", r.samples, r.failures);
    for c in &r.cauchy {
        let _ = writeln!(s, "  D({} -> {}) = {:.4e} +/- {:.1e}", c.k, c.k_next, c.msq, c.stderr);
    }
    Ok(s)
}

fn run_periodicity(config: &ExperimentConfig, b: &PeriodicityBlock, out: &Path, files: &mut Vec<String>) -> Result<String> {
    let cfg = PeriodicityConfig {
        problem: config.problem.clone(),
        scheme: scheme_config(config)?,
        depth_k: b.depth_k,
        window: b.window,
        xi: b.xi.clone(),
        seed: config.seed,
    };
    let r = rps::periodicity_check(&cfg, b.shift_count, b.samples)?;
    let mut csv = String::from("t,original,shifted,residual\n");
    for n in 0..r.times.len() {
        let _ = writeln!(csv, "{},{},{},{}", r.times[n], r.original[n], r.shifted[n], r.shifted[n] - r.original[n]);
    }
    write_file(out, "periodicity.csv", &csv, files)?;
    let shift = b.shift_count as f64 * config.problem.period();
    let chart = Chart::new("segments of one path, original and shifted", "t", "x1")
        .with(Series::new("original", r.times.iter().copied().zip(r.original.iter().copied()).collect()))
        .with(Series::new(format!("shifted by {shift}"), r.times.iter().copied().zip(r.shifted.iter().copied()).collect()).dashed());
    write_file(out, "periodicity.svg", &chart.to_svg(), files)?;
    Ok(format!(
        "periodicity: rms residual {:.4e} +/- {:.1e} over {} samples, {} blow-ups\n",
        r.rms_mean, r.rms_stderr, r.samples, r.failures
    ))
}

fn run_coupling(config: &ExperimentConfig, b: &CouplingBlock, out: &Path, files: &mut Vec<String>) -> Result<String> {
    let p = &config.problem;
    let scheme = scheme_config(config)?;
    let cfg = CouplingConfig {
        problem: p.clone(),
        scheme,
        t0: b.t0,
        t_end: b.t_end,
        xi: b.xi.clone(),
        eta: b.eta.clone(),
        seed: config.seed,
    };
    let constants = if b.bound_pairs > 0 {
        let pairs = HybridSampler::new(10.0, config.seed).pairs(p.dim(), p.period(), b.bound_pairs);
        let k2 = p.estimate_monotonicity_constant(1.0, &pairs)?.k2_hat;
        let (_, beta_l) = schemes::estimate_beta(p, scheme.h(), scheme.gamma(), &pairs)?;
        k2.map(|k2| ContractionConstants { k2, beta_l })
    } else {
        None
    };
    let steps = ((b.t_end - b.t0) / scheme.h()).round() as usize;
    let stride = b.stride.unwrap_or_else(|| schemes::default_stride(steps));
    let r = rps::initial_condition_coupling(&cfg, b.samples, stride, constants)?;
    let mut csv = String::from("t,msq_diff\n");
    for (t, m) in r.times.iter().zip(&r.msq_diff) {
        let _ = writeln!(csv, "{t},{m}");
    }
    write_file(out, "coupling.csv", &csv, files)?;
    let mut chart = Chart::new("mean-square difference of coupled solutions", "t", "E|X - Y|^2")
        .log_y()
        .with(Series::new("simulated", r.times.iter().copied().zip(r.msq_diff.iter().copied()).collect()));
    if let Some(bound) = r.bound.as_ref().filter(|b| b.last() < b.first()) {
        chart = chart.with(Series::new("contraction bound", r.times.iter().copied().zip(bound.iter().copied()).collect()).dashed());
    }
    write_file(out, "coupling.svg", &chart.to_svg(), files)?;
    let mut s = format!(
        "coupling: E|X - Y|^2 at t = {} is {:.4e}; {} samples, {} blow-ups\n",
        r.times.last().unwrap(),
        r.msq_diff.last().unwrap(),
        r.samples,
        r.failures
    );
    if let Some(fit) = r.decay {
        let _ = writeln!(s, "  log-linear decay rate {:.4} +/- {:.4}", fit.slope, fit.ci95);
    }
    if let Some(c) = constants {
        let rate = p.linear().lambda_min() - c.k2 - c.beta_l * c.beta_l;
        let _ = writeln!(s, "  bound constants: K2_hat = {:.4}, beta_L = {:.4}, rate {rate:.4}", c.k2, c.beta_l);
    }
    Ok(s)
}

fn run_converge(config: &ExperimentConfig, b: &ConvergeBlock, out: &Path, files: &mut Vec<String>) -> Result<String> {
    let reference = match b.reference {
        ReferenceSpec::FinestPmm => Reference::FinestPmm,
        ReferenceSpec::Exact => Reference::ExactLinear {
            a: config.problem_params.get("a").copied().unwrap_or(-1.0),
            b: config.problem_params.get("b").copied().unwrap_or(0.25),
        },
    };
    let study = ConvergenceStudy {
        problem: config.problem.clone(),
        schemes: b.schemes.clone(),
        ladder: b.ladder.clone(),
        h_ref: b.h_ref,
        reference,
        t0: b.t0,
        t_end: b.t_end,
        samples: b.samples,
        seed: config.seed,
        xi: b.xi.clone(),
        metric: b.metric,
        gamma: b.gamma,
    };
    let table = msq::run_study(&study)?;
    let mut csv = String::from("scheme,h,e_h,stderr,failures\n");
    for r in &table.rows {
        let _ = writeln!(csv, "{},{},{},{},{}", r.scheme, r.h, r.e_h, r.stderr, r.failures);
    }
    write_file(out, "errors.csv", &csv, files)?;

    let mut summary = String::from("converge:\n");
    let mut slope = String::from("scheme,slope,intercept,slope_stderr,ci95,points\n");
    for &scheme in &b.schemes {
        let single = msq::ErrorTable {
            rows: table.rows_for(scheme).cloned().collect(),
            samples: table.samples,
        };
        match msq::slope_fit(&single, b.include_failed_rows) {
            Ok(fits) => {
                let f = &fits[0].fit;
                let _ = writeln!(slope, "{scheme},{},{},{},{},{}", f.slope, f.intercept, f.slope_stderr, f.ci95, f.points);
                let _ = writeln!(summary, "  {scheme} slope {:.3} +/- {:.3}", f.slope, f.ci95);
            }
            Err(e) => {
                let _ = writeln!(summary, "  {scheme} slope unavailable: {e}");
            }
        }
    }
    write_file(out, "slope.csv", &slope, files)?;

    let mut chart = Chart::new(format!("mean-square error, {}", config.problem.label()), "h", "e_h").log_log();
    for &scheme in &b.schemes {
        let pts = table.rows_for(scheme).map(|r| (r.h, r.e_h)).collect();
        chart = chart.with(Series::new(scheme.to_string(), pts));
    }
    if let Some(r) = table.rows.first().filter(|r| r.e_h > 0.0) {
        let h_max = b.ladder.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let h_min = b.ladder.iter().copied().fold(f64::INFINITY, f64::min);
        let c = r.e_h / r.h;
        chart = chart.with(Series::new("order 1", vec![(h_min, c * h_min), (h_max, c * h_max)]).dashed());
    }
    write_file(out, "errors.svg", &chart.to_svg(), files)?;

    for r in &table.rows {
        let _ = writeln!(summary, "  {} h={} e_h={:.4e} +/- {:.1e} failures={}", r.scheme, r.h, r.e_h, r.stderr, r.failures);
    }
    if let Some(worst) = table.rows.iter().max_by_key(|r| r.failures) {
        montecarlo::check_failures(worst.failures, table.samples)?;
    }
    Ok(summary)
}

fn run_validate(config: &ExperimentConfig, b: &ValidateBlock, out: &Path, files: &mut Vec<String>) -> Result<String> {
    let p = &config.problem;
    let scheme = scheme_config(config)?;
    let sampler = HybridSampler::new(b.radius, config.seed);
    let points = sampler.points(p.dim(), p.period(), b.samples);
    let pairs = sampler.pairs(p.dim(), p.period(), b.samples);
    let p_star = b.p_star.unwrap_or(p.p_star());
    let k1 = p.estimate_coercivity_constant(p_star, &points)?;
    let k2 = p.estimate_monotonicity_constant(b.q, &pairs)?;
    let (beta_f, beta_l) = schemes::estimate_beta(p, scheme.h(), scheme.gamma(), &pairs)?;
    let commut = p.check_commutativity(&points, 1e-10)?;
    let periodic = p.check_periodicity(&points)?;
    let lambda1 = p.linear().lambda_min();
    let lambda_d = p.linear().lambda_max();

    let fmt = |v: Option<f64>| v.map_or("unbounded on the sample".to_string(), |v| format!("{v:.6}"));
    let mut s = String::new();
    let _ = writeln!(s, "problem {} (d = {}, m = {}, period {})", p.label(), p.dim(), p.noise_dim(), p.period());
    let _ = writeln!(s, "lambda1 = {lambda1:.6}, lambda_d = {lambda_d:.6}");
    let _ = writeln!(s, "K1_hat = {} (p* = {p_star}, {} points, radius {})", fmt(k1.k1_hat), k1.samples, b.radius);
    let _ = writeln!(s, "K2_hat = {} (q = {}, {} pairs)", fmt(k2.k2_hat), b.q, k2.samples);
    let _ = writeln!(s, "beta_f = {beta_f:.6}, beta_L = {beta_l:.6} (h = {}, gamma = {})", scheme.h(), scheme.gamma());
    let _ = writeln!(s, "commutativity residual {:.3e} ({})", commut.max_scaled_residual, if commut.passed { "ok" } else { "FAILED" });
    let _ = writeln!(s, "periodicity residual {:.3e} ({})", periodic.max_relative_residual, if periodic.passed { "ok" } else { "FAILED" });
    match k2.k2_hat {
        Some(k2_hat) => {
            let w = schemes::admissible_stepsize(&StepBoundParams::new(lambda1, lambda_d, k2_hat, beta_f, beta_l, scheme.gamma()));
            if w.vacuous {
                let _ = writeln!(s, "admissible h window: vacuous for these constants (advisory)");
            } else {
                let _ = writeln!(
                    s,
                    "admissible h window: (0, {:.6e}); h = {} is {} (advisory)",
                    w.upper,
                    scheme.h(),
                    if w.contains(scheme.h()) { "inside" } else { "outside" }
                );
            }
        }
        None => {
            let _ = writeln!(s, "admissible h window: unavailable without a finite K2_hat");
        }
    }
    write_file(out, "validate.txt", &s, files)?;
    Ok(s)
}
