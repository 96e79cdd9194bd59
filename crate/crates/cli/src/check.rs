use anyhow::{Context, Result};

use compoda_core::algorithms::{Algorithm, RunTrace};
use compoda_core::composite::CompositePart;
use compoda_core::compressors::{verify_contraction, Compressor};
use compoda_core::diagnostics::oracles::brute_force_prox;
use compoda_core::diagnostics::{
    check_consecutive_distance, check_econtrol_sums, check_virtual_real,
    sampling_distribution_test, CheckReport,
};
use compoda_core::numkit::{derive_stream, streams};

use crate::config::ExperimentConfig;
use crate::experiment::{execute, schedule};
use crate::problem::{prepare, Prepared};

const CONTRACTION_TRIALS: usize = 10_000;
const PROX_INSTANCES: usize = 200;
const PROX_TOL: f64 = 1e-6;
const SAMPLING_RUNS: usize = 100_000;

/// Deterministic desk-scale run: exact gradients and the constant preset.
const DETERMINISTIC: &str = r#"
seed = 11
[problem]
type = "softmax"
d = 20
k = 64
[clients]
n = 4
[compressor]
kind = "top_k"
k_frac = 0.2
[composite]
kind = "l1"
lambda = 0.1
[algorithm]
kind = "econtrol_da"
T = 300
stepsize = { preset = "fixed_theorem" }
"#;

/// Noisy run under the nondecreasing schedule, for the weighted checks.
const STOCHASTIC: &str = r#"
seed = 12
[problem]
type = "softmax"
d = 20
k = 64
[noise]
sigma = 1.0
[clients]
n = 4
[compressor]
kind = "top_k"
k_frac = 0.2
[composite]
kind = "l1"
lambda = 0.1
[algorithm]
kind = "econtrol_da"
T = 300
stepsize = { preset = "variable_theorem" }
"#;

/// The per-trajectory inequalities of an EControl-DA debug run; the
/// baselines have none. `variable` selects the stepsize-weighted sums.
pub fn trajectory_checks(
    trace: &RunTrace,
    prep: &Prepared,
    variable: bool,
) -> Result<Vec<CheckReport>> {
    if trace.algorithm != Algorithm::EControlDa {
        return Ok(Vec::new());
    }
    let debug = trace
        .debug
        .as_ref()
        .context("trajectory checks need a debug run")?;
    let gammas: Vec<f64> = trace.records.iter().map(|r| r.gamma_t).collect();
    let mut reports = vec![check_virtual_real(trace)?];
    reports.extend(check_econtrol_sums(
        &debug.client_logs,
        prep.delta,
        variable.then_some(&gammas[..]),
    )?);
    reports.push(check_consecutive_distance(
        trace,
        prep.instance.smoothness_bound(),
    )?);
    Ok(reports)
}

fn contraction_checks(compressors: &[Compressor]) -> Result<Vec<CheckReport>> {
    let mut rng = derive_stream(0, streams::CHECKS);
    compressors
        .iter()
        .map(|c| {
            let k = (c.contraction_delta() * c.dim() as f64).round();
            let name = format!("contraction[k={k}, d={}]", c.dim());
            Ok(match verify_contraction(c, CONTRACTION_TRIALS, &mut rng) {
                Ok(r) => CheckReport::new(name, r.max_ratio, r.bound, None),
                Err(compoda_core::Error::ContractionViolated { ratio, bound, .. }) => {
                    CheckReport::new(name, ratio, bound, None)
                }
                Err(e) => return Err(e.into()),
            })
        })
        .collect()
}

fn prox_checks() -> Result<Vec<CheckReport>> {
    let mut rng = derive_stream(0, streams::CHECKS + 1);
    let mut worst = [0.0f64; 3];
    for i in 0..PROX_INSTANCES {
        let d = 1 + rng.index(5);
        let psi = match i % 3 {
            0 => CompositePart::Zero,
            1 => CompositePart::l1(rng.uniform(0.0, 2.0))?,
            _ => CompositePart::ball(rng.uniform(0.1, 2.0), Some(rng.normal_vector(d, 1.0)))?,
        };
        let s = rng.normal_vector(d, 3.0);
        let anchor = rng.normal_vector(d, 1.0);
        let weight = rng.uniform(0.1, 5.0);
        let gamma = rng.uniform(0.1, 5.0);
        let fast = psi.prox(&s, weight, gamma, &anchor)?;
        let slow = brute_force_prox(&psi, &s, weight, gamma, &anchor)?;
        worst[i % 3] = worst[i % 3].max(fast.dist(&slow)?);
    }
    Ok(["zero", "l1", "ball"]
        .iter()
        .zip(worst)
        .map(|(name, dev)| CheckReport::new(format!("prox_oracle[{name}]"), dev, PROX_TOL, None))
        .collect())
}

fn sampling_checks() -> Result<Vec<CheckReport>> {
    let mut rng = derive_stream(0, streams::CHECKS + 2);
    [3usize, 10]
        .iter()
        .map(|&t| {
            let mut r = sampling_distribution_test(&vec![1.0; t], SAMPLING_RUNS, &mut rng)?;
            r.name = format!("sampling_distribution[T={t}]");
            Ok(r)
        })
        .collect()
}

fn run_checks(cfg: &ExperimentConfig, label: &str) -> Result<Vec<CheckReport>> {
    let mut cfg = cfg.clone();
    cfg.raw.debug = true;
    let prep = prepare(&cfg)?;
    let choice = cfg
        .stepsize
        .clone()
        .context("the checked config needs a single stepsize")?;
    let gamma = schedule(&cfg, &prep, &choice)?;
    let out = execute(&cfg, &prep, gamma)?;
    Ok(out
        .checks
        .into_iter()
        .map(|mut r| {
            r.name = format!("{label}: {}", r.name);
            r
        })
        .collect())
}

/// The default battery, or the trajectory checks of one config plus the
/// generic compressor, prox and sampling checks.
pub fn battery(config: Option<&ExperimentConfig>) -> Result<Vec<CheckReport>> {
    let mut reports = Vec::new();
    match config {
        None => {
            let compressors = [(10, 1), (10, 5), (200, 20)]
                .iter()
                .map(|&(d, k)| Compressor::top_k(k, d))
                .collect::<compoda_core::Result<Vec<_>>>()?;
            reports.extend(contraction_checks(&compressors)?);
            reports.extend(prox_checks()?);
            reports.extend(sampling_checks()?);
            for (label, text) in [("deterministic", DETERMINISTIC), ("stochastic", STOCHASTIC)] {
                let cfg = ExperimentConfig::parse(text)
                    .map_err(|e| anyhow::anyhow!("built-in battery: {e}"))?;
                reports.extend(run_checks(&cfg, label)?);
            }
        }
        Some(cfg) => {
            let prep = prepare(cfg)?;
            reports.extend(contraction_checks(std::slice::from_ref(&prep.compressor))?);
            reports.extend(prox_checks()?);
            reports.extend(sampling_checks()?);
            reports.extend(run_checks(cfg, "config")?);
        }
    }
    Ok(reports)
}

pub fn render(reports: &[CheckReport]) -> String {
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for r in reports {
        let status = if r.passed { "PASS" } else { "FAIL" };
        out.push_str(&format!(
            "{status}  {:<width$}  lhs {:>13.6e}  rhs {:>13.6e}\n",
            r.name, r.lhs, r.rhs
        ));
    }
    out
}
