// Validation code uses negated comparisons (`!(a < b)`) so that NaN
// inputs fail closed.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Command-line runner for reshuffling experiments.
//!
//! Every subcommand honors `--seed` (drawing one from entropy when absent
//! and recording it in the manifest), emits JSON to stdout or CSV files,
//! and writes a manifest beside each output file. `--threads` changes
//! wall-clock time only, never output bytes.

mod manifest;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rand::Rng as _;
use serde_json::json;

use reshuffle_core::empirics::{self, TractableTask};
use reshuffle_core::gp::{self, SweepSpec};
use reshuffle_core::regret::{self, RegretInputs};
use reshuffle_core::rng;
use reshuffle_core::splits::{self, SchemeSpec, Variant};
use reshuffle_core::tau;
use reshuffle_core::Error as CoreError;

use manifest::RunManifest;

#[derive(Parser)]
#[command(
    name = "reshuffle",
    version,
    about = "Resampling and reshuffling experiments for hyperparameter optimization"
)]
struct Cli {
    /// Worker threads (default: RESHUFFLE_THREADS env var, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Covariance parameters (sigma^2, tau^2) of a scheme: closed form
    /// and Monte-Carlo estimate.
    Tau(TauArgs),
    /// Loss-surface simulation sweep over (m, kappa, tau) cells.
    Simulate(SimulateArgs),
    /// Regret bound A/B breakdown, optionally swept over tau.
    Bound(BoundArgs),
    /// Grid-density estimates for random grids and their scaling slope.
    Eta(EtaArgs),
    /// Empirical loss covariance of a fixed/reshuffled scheme pair under
    /// the tractable learner.
    Covcheck(CovcheckArgs),
    /// Synthetic random-search harness producing incumbent trajectories.
    Hpo(HpoArgs),
    /// Generate validation index sets and export membership triples.
    Splits(SplitsArgs),
}

#[derive(Args)]
struct TauArgs {
    /// Scheme name (e.g. holdout, reshuffled-mfold-cv).
    #[arg(long)]
    scheme: String,
    /// Dataset size.
    #[arg(long)]
    n: usize,
    /// Validation fraction; defaults to 1/M for CV variants.
    #[arg(long)]
    alpha: Option<f64>,
    /// Fold count.
    #[arg(long = "M", default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the JSON result to this path (with a manifest).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON sweep configuration; inline grid flags are rejected when set.
    #[arg(long, conflicts_with_all = ["m_values", "kappa_values", "tau_values"])]
    config: Option<PathBuf>,
    /// Comma-separated curvature values.
    #[arg(long)]
    m_values: Option<String>,
    /// Comma-separated kappa values.
    #[arg(long)]
    kappa_values: Option<String>,
    /// Comma-separated tau values.
    #[arg(long)]
    tau_values: Option<String>,
    #[arg(long, default_value_t = 51)]
    grid_points: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma_k2: f64,
    #[arg(long, default_value_t = 0.5)]
    minimizer: f64,
    #[arg(long, default_value_t = 10_000)]
    replications: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Sweep CSV path.
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    tau: f64,
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    sigma_lower: f64,
    #[arg(long)]
    kappa: f64,
    /// Curvature of the true loss at its minimum.
    #[arg(long = "m")]
    curvature: f64,
    #[arg(long)]
    eta: f64,
    /// Dimension of the configuration space.
    #[arg(long = "d", default_value_t = 1)]
    dim: usize,
    /// Number of candidate configurations.
    #[arg(long = "J")]
    grid_size: usize,
    /// Evaluate on this many tau values in [0, 1] and write a CSV.
    #[arg(long, requires = "out")]
    tau_sweep: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EtaArgs {
    /// Comma-separated random-grid sizes.
    #[arg(long, default_value = "100,1000,10000")]
    j_values: String,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 8192)]
    probes: usize,
    #[arg(long = "d", default_value_t = 1)]
    dim: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-repetition CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CovcheckArgs {
    /// Base resampling to compare fixed against reshuffled:
    /// holdout, mfold-cv, or mfold-holdout.
    #[arg(long)]
    pair: String,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long = "M", default_value_t = 5)]
    m: usize,
    #[arg(long, default_value_t = 20_000)]
    replications: usize,
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
    /// Comma-separated candidate configuration values.
    #[arg(long, default_value = "0,0.5,1")]
    lambda_grid: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Covariance CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HpoArgs {
    /// Scheme name; combine with --reshuffle/--no-reshuffle to flip the
    /// reshuffling status of the named scheme.
    #[arg(long)]
    scheme: String,
    /// Use the reshuffled variant of the scheme.
    #[arg(long, conflicts_with = "no_reshuffle")]
    reshuffle: bool,
    /// Use the fixed variant of the scheme.
    #[arg(long)]
    no_reshuffle: bool,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "M", default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    #[arg(long, default_value_t = 500)]
    replications: usize,
    /// Candidate grid size (uniform on [lambda-min, lambda-max]).
    #[arg(long, default_value_t = 500)]
    grid_size: usize,
    #[arg(long, default_value_t = 0.8)]
    lambda_min: f64,
    #[arg(long, default_value_t = 1.2)]
    lambda_max: f64,
    /// Data-distribution mean.
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    /// Data-distribution standard deviation.
    #[arg(long, default_value_t = 2.0)]
    noise_sd: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Trajectory CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitsArgs {
    #[arg(long)]
    scheme: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "M", default_value_t = 1)]
    m: usize,
    /// Number of configurations J.
    #[arg(long, default_value_t = 1)]
    configs: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Membership CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(err) = init_threads(cli.threads) {
        eprintln!("error: {err:#}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<CoreError>() {
            return match core {
                CoreError::Numerical(_) => 3,
                _ => 2,
            };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn init_threads(threads: Option<usize>) -> anyhow::Result<()> {
    let n = threads.or_else(|| {
        std::env::var("RESHUFFLE_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configure thread pool")?;
    }
    Ok(())
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    match seed {
        Some(s) => s,
        None => {
            let s: u64 = rand::rng().random();
            eprintln!("seed: {s} (drawn from entropy; recorded in the manifest)");
            s
        }
    }
}

fn parse_f64_list(text: &str) -> anyhow::Result<Vec<f64>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| CoreError::config(format!("invalid number '{p}'")).into())
        })
        .collect()
}

fn parse_usize_list(text: &str) -> anyhow::Result<Vec<usize>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| CoreError::config(format!("invalid integer '{p}'")).into())
        })
        .collect()
}

/// Build a scheme from CLI pieces; alpha defaults to 1/M for CV variants
/// and is required otherwise.
fn build_spec(scheme: &str, n: usize, alpha: Option<f64>, m: usize) -> anyhow::Result<SchemeSpec> {
    let variant = Variant::from_str(scheme)?;
    let alpha = match alpha {
        Some(a) => a,
        None if variant.is_cv() => 1.0 / m as f64,
        None => {
            return Err(
                CoreError::config("--alpha is required for holdout-family schemes").into(),
            )
        }
    };
    Ok(SchemeSpec::new(variant, n, alpha, m)?)
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Tau(args) => cmd_tau(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Bound(args) => cmd_bound(args),
        Command::Eta(args) => cmd_eta(args),
        Command::Covcheck(args) => cmd_covcheck(args),
        Command::Hpo(args) => cmd_hpo(args),
        Command::Splits(args) => cmd_splits(args),
    }
}

fn cmd_tau(args: TauArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let spec = build_spec(&args.scheme, args.n, args.alpha, args.m)?;
    let seed = resolve_seed(args.seed);
    let report = tau::tau_report(&spec, args.draws, seed)?;
    let rendered = serde_json::to_string_pretty(&report)?;
    println!("{rendered}");
    if let Some(out) = &args.out {
        fs::write(out, format!("{rendered}\n"))
            .with_context(|| format!("write {}", out.display()))?;
        let mut m = RunManifest::new("tau", serde_json::to_value(spec)?, seed);
        m.outputs.push(out.display().to_string());
        m.duration_ms = start.elapsed().as_millis();
        manifest::write_beside(out, &m)?;
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let spec = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
            let mut spec: SweepSpec = serde_json::from_str(&text)
                .with_context(|| format!("parse sweep config {}", path.display()))?;
            if let Some(seed) = args.seed {
                spec.seed = seed;
            }
            spec
        }
        None => {
            let defaults = SweepSpec::default();
            SweepSpec {
                m_values: match &args.m_values {
                    Some(t) => parse_f64_list(t)?,
                    None => defaults.m_values,
                },
                kappa_values: match &args.kappa_values {
                    Some(t) => parse_f64_list(t)?,
                    None => defaults.kappa_values,
                },
                tau_values: match &args.tau_values {
                    Some(t) => parse_f64_list(t)?,
                    None => defaults.tau_values,
                },
                sigma_k2: args.sigma_k2,
                grid_points: args.grid_points,
                minimizer: args.minimizer,
                replications: args.replications,
                seed: resolve_seed(args.seed),
            }
        }
    };
    let rows = gp::sweep(&spec)?;
    for row in &rows {
        let degenerate = if row.replications < 2 {
            " (degenerate: stderr undefined at 1 replication)"
        } else {
            ""
        };
        eprintln!(
            "cell m={} kappa={} tau={}: mean_true_risk={} stderr={}{}",
            row.m, row.kappa, row.tau, row.mean_true_risk, row.stderr, degenerate
        );
    }
    let mut buf = Vec::new();
    gp::write_sweep_csv(&rows, &mut buf)?;
    fs::write(&args.out, &buf).with_context(|| format!("write {}", args.out.display()))?;
    let mut m = RunManifest::new("simulate", serde_json::to_value(&spec)?, spec.seed);
    m.outputs.push(args.out.display().to_string());
    m.duration_ms = start.elapsed().as_millis();
    manifest::write_beside(&args.out, &m)?;
    Ok(())
}

fn cmd_bound(args: BoundArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let inputs = RegretInputs {
        sigma: args.sigma,
        sigma_lower: args.sigma_lower,
        tau: args.tau,
        kappa: args.kappa,
        curvature: args.curvature,
        eta: args.eta,
        dim: args.dim,
        grid_size: args.grid_size,
    };
    match args.tau_sweep {
        Some(count) => {
            if count < 2 {
                return Err(CoreError::config("--tau-sweep needs at least 2 points").into());
            }
            let taus: Vec<f64> = (0..count).map(|i| i as f64 / (count - 1) as f64).collect();
            let rows = regret::tau_sweep(&inputs, &taus)?;
            let out = args.out.as_ref().expect("clap enforces --out");
            let mut buf = Vec::new();
            regret::write_tau_sweep_csv(&rows, &mut buf)?;
            fs::write(out, &buf).with_context(|| format!("write {}", out.display()))?;
            let mut m = RunManifest::new("bound", serde_json::to_value(inputs)?, 0);
            m.outputs.push(out.display().to_string());
            m.duration_ms = start.elapsed().as_millis();
            manifest::write_beside(out, &m)?;
        }
        None => {
            let breakdown = regret::bound(&inputs)?;
            let rendered = serde_json::to_string_pretty(&breakdown)?;
            println!("{rendered}");
            if let Some(out) = &args.out {
                fs::write(out, format!("{rendered}\n"))
                    .with_context(|| format!("write {}", out.display()))?;
                let mut m = RunManifest::new("bound", serde_json::to_value(inputs)?, 0);
                m.outputs.push(out.display().to_string());
                m.duration_ms = start.elapsed().as_millis();
                manifest::write_beside(out, &m)?;
            }
        }
    }
    Ok(())
}

fn cmd_eta(args: EtaArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let j_values = parse_usize_list(&args.j_values)?;
    let seed = resolve_seed(args.seed);
    let scaling = regret::eta_scaling(&j_values, args.reps, args.probes, args.dim, seed)?;
    let per_grid: Vec<serde_json::Value> = j_values
        .iter()
        .map(|&j| {
            let etas: Vec<f64> = scaling
                .rows
                .iter()
                .filter(|r| r.grid_size == j)
                .map(|r| r.eta)
                .collect();
            json!({"j": j, "mean_eta": etas.iter().sum::<f64>() / etas.len() as f64})
        })
        .collect();
    let summary = json!({
        "d": args.dim,
        "probes": args.probes,
        "reps": args.reps,
        "slope": scaling.slope,
        "per_grid": per_grid,
        "seed": seed,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if let Some(out) = &args.out {
        let mut buf = Vec::new();
        regret::write_eta_csv(&scaling.rows, &mut buf)?;
        fs::write(out, &buf).with_context(|| format!("write {}", out.display()))?;
        let config = json!({
            "j_values": j_values, "reps": args.reps, "probes": args.probes, "d": args.dim,
        });
        let mut m = RunManifest::new("eta", config, seed);
        m.outputs.push(out.display().to_string());
        m.duration_ms = start.elapsed().as_millis();
        manifest::write_beside(out, &m)?;
    }
    Ok(())
}

fn base_variant(pair: &str) -> anyhow::Result<Variant> {
    match pair {
        "holdout" => Ok(Variant::Holdout),
        "mfold-cv" => Ok(Variant::MfoldCv),
        "mfold-holdout" => Ok(Variant::MfoldHoldout),
        other => Err(CoreError::config(format!(
            "unknown pair '{other}'; valid pairs: holdout, mfold-cv, mfold-holdout"
        ))
        .into()),
    }
}

fn cmd_covcheck(args: CovcheckArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let variant = base_variant(&args.pair)?;
    let m = if variant.is_single_holdout() { 1 } else { args.m };
    let spec = if variant.is_cv() {
        SchemeSpec::cv(variant, args.n, m)?
    } else {
        SchemeSpec::new(variant, args.n, args.alpha, m)?
    };
    let grid = parse_f64_list(&args.lambda_grid)?;
    let task = TractableTask::new(args.theta, args.noise_sd, grid)?;
    let seed = resolve_seed(args.seed);
    let result = empirics::covariance_check(&task, &spec, args.replications, seed)?;
    let summary = json!({
        "pair": args.pair,
        "fixed_scheme": result.fixed_spec.variant().name(),
        "reshuffled_scheme": result.reshuffled_spec.variant().name(),
        "n": result.fixed_spec.n(),
        "alpha": result.fixed_spec.alpha(),
        "M": result.fixed_spec.folds(),
        "replications": result.replications,
        "offdiag_corr_fixed": result.offdiag_corr_fixed,
        "offdiag_corr_reshuffled": result.offdiag_corr_reshuffled,
        "offdiag_corr_ratio": result.offdiag_corr_ratio,
        "diag_var_fixed": result.diag_var_fixed,
        "diag_var_reshuffled": result.diag_var_reshuffled,
        "diag_var_ratio": result.diag_var_ratio,
        "predicted_corr_ratio": result.predicted_corr_ratio,
        "seed": seed,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if let Some(out) = &args.out {
        let mut buf = Vec::new();
        empirics::write_covariance_csv(&result, &mut buf)?;
        fs::write(out, &buf).with_context(|| format!("write {}", out.display()))?;
        let config = json!({
            "pair": args.pair, "scheme": result.fixed_spec,
            "theta": args.theta, "noise_sd": args.noise_sd,
            "lambda_grid": task.grid, "replications": args.replications,
        });
        let mut m = RunManifest::new("covcheck", config, seed);
        m.outputs.push(out.display().to_string());
        m.duration_ms = start.elapsed().as_millis();
        manifest::write_beside(out, &m)?;
    }
    Ok(())
}

fn cmd_hpo(args: HpoArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let mut variant = Variant::from_str(&args.scheme)?;
    if args.reshuffle {
        variant = variant.reshuffled();
    } else if args.no_reshuffle {
        variant = variant.fixed();
    }
    let m = if variant.is_single_holdout() { 1 } else { args.m };
    let spec = build_spec(variant.name(), args.n, args.alpha, m)?;
    if args.grid_size < 2 || !(args.lambda_min < args.lambda_max) {
        return Err(CoreError::config(
            "candidate grid needs >= 2 points and lambda-min < lambda-max",
        )
        .into());
    }
    let grid: Vec<f64> = (0..args.grid_size)
        .map(|i| {
            args.lambda_min
                + (args.lambda_max - args.lambda_min) * i as f64 / (args.grid_size - 1) as f64
        })
        .collect();
    let task = TractableTask::new(args.theta, args.noise_sd, grid)?;
    let seed = resolve_seed(args.seed);
    let run = empirics::run_random_search(&task, &spec, args.iterations, args.replications, seed)?;
    let mut buf = Vec::new();
    empirics::write_trajectories_csv(&task, &run, &mut buf)?;
    fs::write(&args.out, &buf).with_context(|| format!("write {}", args.out.display()))?;
    let last = run.summary.last().expect("iterations >= 1");
    let summary = json!({
        "scheme": spec.variant().name(),
        "n": spec.n(),
        "alpha": spec.alpha(),
        "M": spec.folds(),
        "iterations": args.iterations,
        "replications": args.replications,
        "final_mean_true_risk": last.mean_true_risk,
        "final_stderr": last.stderr,
        "seed": seed,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    let config = json!({
        "scheme": spec,
        "task": {"theta": args.theta, "noise_sd": args.noise_sd,
                 "lambda_min": args.lambda_min, "lambda_max": args.lambda_max,
                 "grid_size": args.grid_size},
        "iterations": args.iterations,
        "replications": args.replications,
        // Dataset and visit-order substreams depend only on (seed,
        // replication), so runs of different variants with equal seeds
        // are paired: same datasets, same visit order.
        "paired_streams": true,
    });
    let mut m = RunManifest::new("hpo", config, seed);
    m.outputs.push(args.out.display().to_string());
    m.duration_ms = start.elapsed().as_millis();
    manifest::write_beside(&args.out, &m)?;
    Ok(())
}

fn cmd_splits(args: SplitsArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let spec = build_spec(&args.scheme, args.n, args.alpha, args.m)?;
    let seed = resolve_seed(args.seed);
    let mut stream = rng::root(seed);
    let assignment = splits::generate(&spec, args.configs, &mut stream)?;
    let mut buf = Vec::new();
    assignment.write_membership_csv(&mut buf)?;
    fs::write(&args.out, &buf).with_context(|| format!("write {}", args.out.display()))?;
    let config = json!({"scheme": spec, "configs": args.configs});
    let mut m = RunManifest::new("splits", config, seed);
    m.outputs.push(args.out.display().to_string());
    m.duration_ms = start.elapsed().as_millis();
    manifest::write_beside(&args.out, &m)?;
    Ok(())
}
