//! `compoda`: config-driven runs, stepsize sweeps, the invariant check
//! battery and synthetic data generation.

mod check;
mod config;
mod experiment;
mod output;
mod problem;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use compoda_core::algorithms::{Algorithm, BASELINE_GRID, DA_INV_GAMMA_GRID};
use compoda_core::problems::{gen_logistic_dataset, gen_softmax, write_csv_dataset};

use config::{validate_grid, ConfigError, ExperimentConfig, StepsizeChoice};
use output::write_atomic;

#[derive(Parser)]
#[command(
    name = "compoda",
    version,
    about = "Compressed composite optimization simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured algorithm once and write trace.csv and summary.json.
    Run(RunArgs),
    /// Run one trace per stepsize grid value and a best-by-final-loss table.
    Sweep(SweepArgs),
    /// Run the invariant checks and print a pass/fail table.
    Check(CheckArgs),
    /// Write a synthetic problem instance.
    #[command(subcommand)]
    Gen(GenKind),
}

#[derive(Args)]
struct Overrides {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seed; overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Keep per-round logs and run the trajectory checks.
    #[arg(long)]
    debug: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Overrides,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Overrides,
    /// Comma-separated `1/gamma` values (`h` for the baselines).
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
}

#[derive(Args)]
struct CheckArgs {
    /// Check one config instead of the built-in battery.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum GenKind {
    /// Recentred softmax instance (A, b, mu).
    Softmax {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0.1)]
        mu: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Labelled CSV for logistic regression.
    Logistic {
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 10)]
        classes: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Config(String),
    Runtime(anyhow::Error),
    Check(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn load(common: &Overrides) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.raw.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.raw.debug |= common.debug;
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let cfg = load(&args.common)?;
    let choice = match &cfg.stepsize {
        Some(StepsizeChoice::Grid(_)) => {
            return Err(Failure::Config(
                "a stepsize grid needs the sweep command".into(),
            ))
        }
        Some(c) => c.clone(),
        None => return Err(Failure::Config("algorithm.stepsize is not set".into())),
    };
    let prep = problem::prepare(&cfg)?;
    let gamma = experiment::schedule(&cfg, &prep, &choice)?;
    let out = experiment::execute(&cfg, &prep, gamma)?;
    experiment::write_run(&cfg.output_dir, &cfg, &out)?;
    let value = |key: &str| {
        out.summary
            .get(key)
            .map_or("null".into(), |v| v.to_string())
    };
    println!(
        "{}: T={} final_F_real={} output_gap={} total_cost={} -> {}",
        cfg.algorithm.name(),
        cfg.rounds(),
        value("final_F_real"),
        value("output_gap"),
        value("total_cost"),
        cfg.output_dir.display()
    );
    report_checks(&out.checks)
}

fn report_checks(checks: &[compoda_core::diagnostics::CheckReport]) -> Result<(), Failure> {
    if checks.is_empty() {
        return Ok(());
    }
    print!("{}", check::render(checks));
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "{} of {} checks failed: {}",
            failed.len(),
            checks.len(),
            failed.join(", ")
        )))
    }
}

fn sweep_threads() -> Result<usize, Failure> {
    match std::env::var("COMPODA_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Failure::Config(format!(
                "COMPODA_THREADS must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(rayon::current_num_threads()),
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let cfg = load(&args.common)?;
    let grid = match (args.grid, &cfg.stepsize) {
        (Some(g), _) => g,
        (None, Some(StepsizeChoice::Grid(g))) => g.clone(),
        (None, _) => match cfg.algorithm {
            Algorithm::EControlDa => DA_INV_GAMMA_GRID.to_vec(),
            _ => BASELINE_GRID.to_vec(),
        },
    };
    validate_grid(&grid)?;
    let threads = sweep_threads()?;
    let prep = problem::prepare(&cfg)?;
    let points = experiment::sweep(&cfg, &prep, &grid, &cfg.output_dir, threads)?;
    let best = experiment::best_point(&points);
    for (i, p) in points.iter().enumerate() {
        println!(
            "{}grid_{i:02} value={} final_F_real={}",
            if best == Some(i) { "* " } else { "  " },
            output::sig9(p.value),
            output::sig9(experiment::final_loss(&p.summary)),
        );
    }
    let failed: usize = points.iter().map(|p| p.failed_checks).sum();
    if failed > 0 {
        return Err(Failure::Check(format!(
            "{failed} trajectory checks failed across the sweep"
        )));
    }
    if best.is_none() {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "no grid point finished with a finite loss"
        )));
    }
    Ok(())
}

fn cmd_check(args: CheckArgs) -> Result<(), Failure> {
    let cfg = match &args.config {
        Some(path) => {
            let mut cfg = ExperimentConfig::load(path)?;
            if let Some(seed) = args.seed {
                cfg.raw.seed = seed;
            }
            if matches!(cfg.stepsize, None | Some(StepsizeChoice::Grid(_))) {
                return Err(Failure::Config(
                    "check needs a single stepsize in the config".into(),
                ));
            }
            Some(cfg)
        }
        None => None,
    };
    let reports = check::battery(cfg.as_ref())?;
    report_checks(&reports)?;
    println!("all {} checks passed", reports.len());
    Ok(())
}

fn cmd_gen(kind: GenKind) -> Result<(), Failure> {
    match kind {
        GenKind::Softmax {
            d,
            k,
            mu,
            seed,
            out,
        } => {
            let problem =
                gen_softmax(d, k, mu, seed).map_err(|e| Failure::Config(e.to_string()))?;
            write_atomic(&out, |tmp| Ok(problem.write_instance(tmp)?))?;
            println!(
                "softmax d={d} k={k} mu={mu} seed={seed} -> {}",
                out.display()
            );
        }
        GenKind::Logistic {
            samples,
            d,
            classes,
            seed,
            out,
        } => {
            let data = gen_logistic_dataset(samples, d, classes, seed)
                .map_err(|e| Failure::Config(e.to_string()))?;
            write_atomic(&out, |tmp| {
                write_csv_dataset(tmp, &data).context("writing CSV")?;
                Ok(())
            })?;
            println!(
                "logistic samples={samples} d={d} classes={classes} seed={seed} -> {}",
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            return exit(Failure::Usage(
                first.trim_start_matches("error: ").to_string(),
            ));
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Check(a) => cmd_check(a),
        Command::Gen(k) => cmd_gen(k),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => exit(f),
    }
}

fn exit(failure: Failure) -> ExitCode {
    let (prefix, message, code) = match failure {
        Failure::Usage(m) => ("usage", m, 2),
        Failure::Config(m) => ("config", m, 2),
        Failure::Runtime(e) => ("runtime", format!("{e:#}"), 1),
        Failure::Check(m) => ("check", m, 1),
    };
    eprintln!("error[{prefix}]: {}", one_line(&message));
    ExitCode::from(code)
}
