use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;

use compoda_core::algorithms::{
    gamma_fixed, gamma_real, run, Algorithm, GammaSchedule, InitialStep, RunSettings, RunTrace,
    StepsizeParams,
};
use compoda_core::diagnostics::{expected_output_gap, write_trace_csv, CheckReport};
use compoda_core::feedback::eta_default;

use crate::check::trajectory_checks;
use crate::config::{ExperimentConfig, Preset, StepsizeChoice};
use crate::output::{write_atomic, write_bytes_atomic, Summary};
use crate::problem::Prepared;

pub struct RunOutput {
    pub trace: RunTrace,
    pub summary: Summary,
    pub checks: Vec<CheckReport>,
}

fn params(cfg: &ExperimentConfig, prep: &Prepared) -> StepsizeParams {
    StepsizeParams {
        ell: prep.ell,
        delta: prep.delta,
        sigma: cfg.sigma(),
        clients: cfg.clients(),
        r0: prep.r0,
        rounds: cfg.rounds(),
    }
}

/// Resolves a single stepsize choice; grids are expanded by the caller.
pub fn schedule(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    choice: &StepsizeChoice,
) -> Result<GammaSchedule> {
    let p = params(cfg, prep);
    Ok(match choice {
        StepsizeChoice::Preset(Preset::FixedTheorem) => GammaSchedule::Constant(gamma_fixed(&p)?),
        StepsizeChoice::Preset(Preset::VariableTheorem) => GammaSchedule::Variable(p),
        StepsizeChoice::Preset(Preset::RealIterates) => {
            GammaSchedule::Constant(gamma_real(&p, prep.initial_gap())?)
        }
        StepsizeChoice::Gamma(g) => GammaSchedule::Constant(*g),
        StepsizeChoice::Grid(_) => anyhow::bail!("a stepsize grid needs the sweep command"),
    })
}

pub fn settings(cfg: &ExperimentConfig, prep: &Prepared, gamma: GammaSchedule) -> RunSettings {
    let alg = &cfg.raw.algorithm;
    let mut s = RunSettings::new(
        prep.x0.clone(),
        prep.compressor.clone(),
        prep.psi.clone(),
        gamma,
        alg.rounds,
    );
    s.sigma = cfg.sigma();
    s.eta = cfg.eta;
    s.weights = alg.a_t.clone().unwrap_or_default();
    s.initial_step = (cfg.algorithm == Algorithm::EControlDa && alg.initial_step.unwrap_or(true))
        .then_some(InitialStep {
            smoothness: prep.l_global,
            radius: prep.r0,
        });
    s.uncompressed_cost = prep.m;
    s.seed = cfg.raw.seed;
    s.debug = cfg.raw.debug;
    s.f_star = Some(prep.f_star);
    s.execution = cfg.execution;
    s
}

pub fn execute(cfg: &ExperimentConfig, prep: &Prepared, gamma: GammaSchedule) -> Result<RunOutput> {
    let variable = gamma.is_variable();
    let s = settings(cfg, prep, gamma);
    let trace = run(cfg.algorithm, prep.oracle(), &s)?;
    let checks = if cfg.raw.debug {
        trajectory_checks(&trace, prep, variable)?
    } else {
        Vec::new()
    };
    let summary = summarize(cfg, prep, &trace, &checks)?;
    Ok(RunOutput {
        trace,
        summary,
        checks,
    })
}

fn summarize(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    trace: &RunTrace,
    checks: &[CheckReport],
) -> Result<Summary> {
    let last = trace.records.last();
    let eta = match cfg.algorithm {
        Algorithm::EControlDa => Some(cfg.eta.map_or_else(|| eta_default(prep.delta), Ok)?),
        _ => None,
    };
    let output_gap = trace.final_output_gap(prep.oracle(), &prep.psi);
    let expected = match cfg.algorithm {
        Algorithm::EControlDa if last.is_some() => Some(expected_output_gap(trace)?),
        _ => None,
    };
    let mut s = Summary::default();
    s.text("algorithm", cfg.algorithm.name())
        .int("rounds", cfg.rounds() as u64)
        .int("clients", cfg.clients() as u64)
        .int("dim", prep.x0.len() as u64)
        .int("seed", cfg.raw.seed)
        .num("sigma", cfg.sigma())
        .num("delta", prep.delta)
        .num("m", prep.m)
        .opt("eta", eta)
        .num("L", prep.l_global)
        .num("ell", prep.ell)
        .num("r0", prep.r0)
        .num("f_star", prep.f_star)
        .opt("gamma_first", trace.records.first().map(|r| r.gamma_t))
        .opt("gamma_last", last.map(|r| r.gamma_t))
        .opt("final_F_real", last.map(|r| r.f_real))
        .opt("final_F_virtual", last.and_then(|r| r.f_virtual))
        .opt("output_gap", output_gap)
        .opt("expected_output_gap", expected)
        .num("total_cost", trace.ledger.total())
        .int("compressed_rounds", trace.ledger.compressed)
        .int("uncompressed_rounds", trace.ledger.uncompressed)
        .int("tau_bits", trace.ledger.tau_bits);
    if let Some(f) = trace.frozen {
        s.int("frozen_index", f.index as u64);
    }
    if !checks.is_empty() {
        let map: serde_json::Map<String, serde_json::Value> = checks
            .iter()
            .map(|c| {
                let mut o = Summary::default();
                o.value("passed", c.passed.into())
                    .num("lhs", c.lhs)
                    .num("rhs", c.rhs);
                (
                    c.name.clone(),
                    serde_json::from_str(&o.to_json()).expect("summary is json"),
                )
            })
            .collect();
        s.value("checks", map.into());
    }
    Ok(s)
}

/// Writes `trace.csv`, `summary.json` and an echo of the config into `dir`.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, out: &RunOutput) -> Result<()> {
    write_atomic(&dir.join("trace.csv"), |tmp| {
        let file = File::create(tmp)?;
        write_trace_csv(BufWriter::new(file), &out.trace.records)?;
        Ok(())
    })?;
    write_bytes_atomic(&dir.join("summary.json"), out.summary.to_json().as_bytes())?;
    write_bytes_atomic(&dir.join("config.toml"), cfg.source.as_bytes())
}

pub struct SweepPoint {
    pub value: f64,
    pub summary: Summary,
    pub failed_checks: usize,
}

/// Runs one constant stepsize `gamma = 1 / v` per grid value `v` (for the
/// baselines `v` is the step `h`), at most `threads` at a time.
pub fn sweep(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    grid: &[f64],
    out: &Path,
    threads: usize,
) -> Result<Vec<SweepPoint>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.clamp(1, grid.len().max(1)))
        .build()
        .context("building the sweep thread pool")?;
    let points = pool.install(|| {
        grid.par_iter()
            .enumerate()
            .map(|(i, &v)| {
                let result = execute(cfg, prep, GammaSchedule::Constant(1.0 / v))?;
                write_run(&out.join(format!("grid_{i:02}")), cfg, &result)?;
                Ok(SweepPoint {
                    value: v,
                    summary: result.summary,
                    failed_checks: result.checks.iter().filter(|c| !c.passed).count(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    write_sweep_table(&out.join("sweep_summary.csv"), &points)?;
    Ok(points)
}

pub fn final_loss(s: &Summary) -> f64 {
    s.get("final_F_real")
        .and_then(|v| v.as_f64())
        .unwrap_or(f64::INFINITY)
}

/// Index of the grid point with the smallest finite final loss.
pub fn best_point(points: &[SweepPoint]) -> Option<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| final_loss(&p.summary).is_finite())
        .min_by(|a, b| final_loss(&a.1.summary).total_cmp(&final_loss(&b.1.summary)))
        .map(|(i, _)| i)
}

fn write_sweep_table(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let best = best_point(points);
    let cell = |s: &Summary, key: &str| {
        s.get(key)
            .filter(|v| !v.is_null())
            .map_or(String::new(), |v| v.to_string())
    };
    let mut text =
        String::from("index,value,gamma,final_F_real,final_F_virtual,output_gap,total_cost,best\n");
    for (i, p) in points.iter().enumerate() {
        text.push_str(&format!(
            "{i},{},{},{},{},{},{},{}\n",
            crate::output::sig9(p.value),
            crate::output::sig9(1.0 / p.value),
            cell(&p.summary, "final_F_real"),
            cell(&p.summary, "final_F_virtual"),
            cell(&p.summary, "output_gap"),
            cell(&p.summary, "total_cost"),
            u8::from(best == Some(i)),
        ));
    }
    write_bytes_atomic(path, text.as_bytes())
}
