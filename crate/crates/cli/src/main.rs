//! `ecoroute` command-line entry point: trials, error sweeps, closed-form
//! analytics, the energy/latency tradeoff table and the verification suites.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ecoroute::diffusion::{drift_for_kappa, regime_asymptote, zero_drift_scale};
use ecoroute::energetics::total_time;
use ecoroute::sim::checkpoint_grid;
use ecoroute::{
    apply_overrides, deviation_curve, expected_deficit, load_config, min_service_time, myopic_moments,
    run_suite, validate_config, DriftSpec, Error, Experiment, Suite, SweepResult, SystemConfig,
    TaskDescriptor, ValidatedConfig, VerifyOptions,
};

const DEFAULT_ERRORS: [f64; 4] = [0.0, 0.05, 0.1, 0.2];

#[derive(Parser)]
#[command(name = "ecoroute", version, about = "Energy-aware routing of reasoning tasks under renewable supply")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration; the built-in reference system when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV files
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Override a config value by dotted path, e.g. `harvest.variance=1e5`
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Monte Carlo trials (per error level for sweeps)
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads; 0 uses every core
    #[arg(long, global = true, default_value_t = 0)]
    parallel: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run independent trials at one prediction error and write per-checkpoint deficits
    Simulate {
        /// Misrouting probability; defaults to the config's `prediction_error`
        #[arg(long)]
        error: Option<f64>,
    },
    /// Mean deficit versus horizon for several prediction errors, with BIC regime detection
    Sweep {
        /// Comma-separated prediction errors
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ERRORS)]
        errors: Vec<f64>,
    },
    /// Deviation from drift-only scaling over a symmetric κ grid
    Analytics(AnalyticsArgs),
    /// Minimum tokens, slots and energy per model across a difficulty grid
    Tradeoff(TradeoffArgs),
    /// Run an invariant suite (or `all`) and print a JSON report
    Verify {
        /// thm1, lumped-dominance, variance-lemma, beta-oracle, donsker, continuity or all
        suite: String,
        /// Random scenarios for thm1 and lumped-dominance
        #[arg(long)]
        scenarios: Option<usize>,
        /// Random-walk paths for donsker
        #[arg(long)]
        paths: Option<usize>,
        /// Random-walk steps for donsker
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Write fig2.csv, fig3.csv and fig4.csv
    Figures {
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ERRORS)]
        errors: Vec<f64>,
    },
}

#[derive(Args, Clone, Copy)]
struct AnalyticsArgs {
    /// Volatility σ; defaults to σ_B of the configured system
    #[arg(long)]
    sigma: Option<f64>,
    /// Horizon T in slots; defaults to the configured horizon
    #[arg(long)]
    horizon: Option<f64>,
    /// Grid spans [−K, K]
    #[arg(long, default_value_t = 10.0)]
    kappa_max: f64,
    /// Grid size; odd so that κ = 0 is included
    #[arg(long, default_value_t = 401)]
    points: usize,
}

#[derive(Args, Clone, Copy)]
struct TradeoffArgs {
    #[arg(long, default_value_t = 1.7)]
    l_min: f64,
    #[arg(long, default_value_t = 1.9)]
    l_max: f64,
    #[arg(long, default_value_t = 10)]
    points: usize,
    #[arg(long, default_value_t = 50)]
    skills: u32,
    #[arg(long, default_value_t = 0.1)]
    tolerance: f64,
}

impl Default for AnalyticsArgs {
    fn default() -> Self {
        AnalyticsArgs {
            sigma: None,
            horizon: None,
            kappa_max: 10.0,
            points: 401,
        }
    }
}

impl Default for TradeoffArgs {
    fn default() -> Self {
        TradeoffArgs {
            l_min: 1.7,
            l_max: 1.9,
            points: 10,
            skills: 50,
            tolerance: 0.1,
        }
    }
}

#[derive(Debug)]
enum CliError {
    Core(Error),
    Io(String),
    VerifyFailed,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::Validation { .. } | Error::Config(_)) => 2,
            CliError::Core(Error::Infeasible(_)) => 3,
            CliError::VerifyFailed => 4,
            _ => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Core(err) => eprintln!("error: {err}"),
                CliError::Io(msg) => eprintln!("error: {msg}"),
                CliError::VerifyFailed => eprintln!("verification failed"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let common = cli.common;
    if common.parallel > 0 {
        // Only fails if a global pool already exists, which is harmless here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(common.parallel).build_global();
    }
    let config = load(&common)?;
    match cli.command {
        Command::Simulate { error } => {
            let error = error.unwrap_or(config.config().prediction_error);
            let path = prepare_out(&common.out)?.join("simulate.csv");
            cmd_simulate(&config, &common, error, &path)
        }
        Command::Sweep { errors } => {
            let path = prepare_out(&common.out)?.join("sweep.csv");
            let sweep = cmd_sweep(&config, &common, &errors, &path)?;
            print_sweep_summary(&sweep);
            Ok(())
        }
        Command::Analytics(args) => {
            let path = prepare_out(&common.out)?.join("analytics.csv");
            cmd_analytics(&config, args, &path)
        }
        Command::Tradeoff(args) => {
            let path = prepare_out(&common.out)?.join("tradeoff.csv");
            cmd_tradeoff(&config, args, &path)
        }
        Command::Verify {
            suite,
            scenarios,
            paths,
            steps,
        } => {
            let defaults = VerifyOptions::default();
            let options = VerifyOptions {
                seed: common.seed,
                scenarios: scenarios.unwrap_or(defaults.scenarios),
                trials: common.trials.unwrap_or(defaults.trials),
                paths: paths.unwrap_or(defaults.paths),
                steps: steps.unwrap_or(defaults.steps),
                ..defaults
            };
            cmd_verify(&config, &suite, &options)
        }
        Command::Figures { errors } => {
            let dir = prepare_out(&common.out)?;
            cmd_analytics(&config, AnalyticsArgs::default(), &dir.join("fig2.csv"))?;
            cmd_tradeoff(&config, TradeoffArgs::default(), &dir.join("fig3.csv"))?;
            let sweep = cmd_sweep(&config, &common, &errors, &dir.join("fig4.csv"))?;
            print_sweep_summary(&sweep);
            Ok(())
        }
    }
}

fn load(common: &Common) -> CliResult<ValidatedConfig> {
    let raw = match &common.config {
        Some(path) => load_config(path)?,
        None => SystemConfig::reference(),
    };
    let raw = apply_overrides(&raw, &common.overrides)?;
    Ok(validate_config(raw)?)
}

fn prepare_out(dir: &Path) -> CliResult<&Path> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    Ok(dir)
}

fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
struct TrialRow {
    seed: u64,
    trial: u64,
    error: f64,
    #[serde(rename = "T")]
    horizon: u64,
    deficit: f64,
}

fn cmd_simulate(config: &ValidatedConfig, common: &Common, error: f64, path: &Path) -> CliResult<()> {
    let exp = Experiment::new(config.clone(), common.seed);
    let trials = common.trials.unwrap_or(1);
    let mut rows = Vec::new();
    for trial in 0..trials as u64 {
        let r = exp.run_trial(error, trial)?;
        println!(
            "trial {trial}: {} tasks, {} misrouted, D_T = {:.3} J",
            r.tasks, r.misroutes, r.final_deficit
        );
        rows.extend(r.checkpoints.iter().zip(&r.deficits).map(|(&t, &d)| TrialRow {
            seed: r.seed,
            trial,
            error,
            horizon: t,
            deficit: d,
        }));
    }
    write_csv(path, &rows)
}

#[derive(Serialize)]
struct SweepRow {
    experiment: String,
    error: f64,
    #[serde(rename = "T")]
    horizon: u64,
    #[serde(rename = "mean_D")]
    mean: f64,
    #[serde(rename = "stderr_D")]
    stderr: f64,
    trials: usize,
    verdict: &'static str,
    #[serde(rename = "T_k")]
    breakpoint: Option<f64>,
    m1: f64,
    b1: f64,
    m2: Option<f64>,
    b2: Option<f64>,
    sqrt_fit: f64,
    linear_fit: Option<f64>,
}

fn sweep_rows(sweep: &SweepResult) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for curve in &sweep.curves {
        let (m1, b1, m2, b2) = curve.regime.coefficients();
        for (j, &t) in curve.checkpoints.iter().enumerate() {
            let (sqrt_fit, linear_fit) = curve.regime.fitted(t as f64);
            rows.push(SweepRow {
                experiment: format!("error={}", curve.error),
                error: curve.error,
                horizon: t,
                mean: curve.mean[j],
                stderr: curve.stderr[j],
                trials: curve.trials,
                verdict: curve.regime.verdict.as_str(),
                breakpoint: curve.regime.breakpoint(),
                m1,
                b1,
                m2,
                b2,
                sqrt_fit,
                linear_fit,
            });
        }
    }
    rows
}

fn cmd_sweep(config: &ValidatedConfig, common: &Common, errors: &[f64], path: &Path) -> CliResult<SweepResult> {
    let threads = match common.parallel {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    };
    let exp = Experiment::new(config.clone(), common.seed)
        .with_checkpoints(checkpoint_grid(config.config().horizon, ecoroute::sim::DEFAULT_CHECKPOINTS))?;
    let sweep = exp.sweep_error(errors, common.trials.unwrap_or(100), threads)?;
    write_csv(path, &sweep_rows(&sweep))?;
    Ok(sweep)
}

fn print_sweep_summary(sweep: &SweepResult) {
    println!(
        "mu_B = {:.4} J/slot, sigma_B = {:.2} J/sqrt(slot)",
        sweep.moments.mean,
        sweep.moments.variance.sqrt()
    );
    for c in &sweep.curves {
        let last = c.mean.len() - 1;
        let tk = c.regime.breakpoint().map_or("-".to_string(), |t| format!("{t}"));
        let crossing = c.analytic_crossing.map_or("-".to_string(), |t| format!("{t:.0}"));
        println!(
            "error {:<5} mean D_T = {:>10.2} +- {:<8.2} drift {:>8.3}  {:<10} T_k {:<6} crossing {}",
            c.error,
            c.mean[last],
            c.stderr[last],
            c.measured_drift,
            c.regime.verdict.as_str(),
            tk,
            crossing
        );
    }
}

#[derive(Serialize)]
struct AnalyticsRow {
    kappa: f64,
    mu: f64,
    sigma: f64,
    #[serde(rename = "T")]
    horizon: f64,
    deviation: f64,
    expected_deficit: f64,
    regime_asymptote: f64,
}

fn cmd_analytics(config: &ValidatedConfig, args: AnalyticsArgs, path: &Path) -> CliResult<()> {
    let sigma = args.sigma.unwrap_or_else(|| myopic_moments(config).variance.sqrt());
    let horizon = args.horizon.unwrap_or(config.config().horizon as f64);
    if !(horizon > 0.0) {
        return Err(CliError::Core(Error::Validation {
            path: "horizon".into(),
            reason: format!("{horizon} must be positive"),
        }));
    }
    if args.points < 3 || args.points % 2 == 0 {
        return Err(CliError::Core(Error::Validation {
            path: "points".into(),
            reason: "must be odd and at least 3 so that kappa = 0 is on the grid".into(),
        }));
    }
    let half = (args.points - 1) as f64;
    let mut rows = Vec::with_capacity(args.points);
    for i in 0..args.points {
        let kappa = args.kappa_max * (2.0 * i as f64 - half) / half;
        let drift = DriftSpec::new(drift_for_kappa(kappa, sigma, horizon), sigma)?;
        let deviation = deviation_curve(&drift, horizon).deviation;
        rows.push(AnalyticsRow {
            kappa,
            mu: drift.mu,
            sigma,
            horizon,
            deviation,
            expected_deficit: expected_deficit(&drift, horizon),
            regime_asymptote: regime_asymptote(&drift, horizon),
        });
    }
    println!(
        "sigma = {sigma:.4}, T = {horizon}, zero-drift scale = {:.4}",
        zero_drift_scale(sigma, horizon)
    );
    write_csv(path, &rows)
}

#[derive(Serialize)]
struct TradeoffRow {
    difficulty: f64,
    model: String,
    params: f64,
    tokens: Option<f64>,
    slots: Option<u64>,
    time_s: Option<f64>,
    energy_j: Option<f64>,
    infeasible: bool,
}

fn cmd_tradeoff(config: &ValidatedConfig, args: TradeoffArgs, path: &Path) -> CliResult<()> {
    if args.points < 2 {
        return Err(CliError::Core(Error::Validation {
            path: "points".into(),
            reason: "need at least 2 difficulty levels".into(),
        }));
    }
    let cfg = config.config();
    let mut rows = Vec::new();
    for k in 0..args.points {
        let difficulty = args.l_min + (args.l_max - args.l_min) * k as f64 / (args.points - 1) as f64;
        let descriptor = TaskDescriptor {
            difficulty,
            skills: args.skills,
        };
        for (i, model) in config.profiles().iter().enumerate() {
            let row = match min_service_time(&descriptor, args.tolerance, i, model, &cfg.scaling, cfg.slot_seconds) {
                Ok(plan) => TradeoffRow {
                    difficulty,
                    model: model.name.clone(),
                    params: model.params,
                    tokens: Some(plan.tokens),
                    slots: Some(plan.slots),
                    time_s: Some(total_time(model, plan.tokens)?),
                    energy_j: Some(plan.energy),
                    infeasible: false,
                },
                Err(Error::Infeasible(_)) => TradeoffRow {
                    difficulty,
                    model: model.name.clone(),
                    params: model.params,
                    tokens: None,
                    slots: None,
                    time_s: None,
                    energy_j: None,
                    infeasible: true,
                },
                Err(e) => return Err(e.into()),
            };
            rows.push(row);
        }
    }
    write_csv(path, &rows)
}

fn cmd_verify(config: &ValidatedConfig, suite: &str, options: &VerifyOptions) -> CliResult<()> {
    let suites: Vec<Suite> = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![suite.parse()?]
    };
    let mut all_passed = true;
    for s in suites {
        let report = run_suite(s, config, options)?;
        all_passed &= report.passed;
        let text = serde_json::to_string(&report).map_err(|e| CliError::Io(e.to_string()))?;
        println!("{text}");
    }
    if all_passed {
        Ok(())
    } else {
        Err(CliError::VerifyFailed)
    }
}
