//! Trace records, communication accounting, and runtime checks of the
//! deterministic inequalities that hold along every trajectory.

pub mod oracles;
mod trace;

pub use trace::{parse_trace_csv, write_trace_csv, RoundRecord, TRACE_HEADER};

use crate::algorithms::{Reservoir, RunTrace};
use crate::composite::CompositePart;
use crate::error::{Error, Result};
use crate::feedback::{econtrol_bound_factors, ClientRoundLog};
use crate::numkit::{DenseVector, RngStream};

const REL_SLACK: f64 = 1e-9;
const ABS_SLACK: f64 = 1e-12;

/// `lhs <= rhs (1 + 1e-9) + 1e-12`.
pub fn within_tolerance(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs * (1.0 + REL_SLACK) + ABS_SLACK
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; negative on failure.
    pub slack: f64,
    /// For per-round checks, a failing round if any, else the round with the
    /// largest `lhs / rhs`.
    pub worst_round: Option<usize>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, worst_round: Option<usize>) -> Self {
        CheckReport {
            name: name.into(),
            passed: within_tolerance(lhs, rhs),
            lhs,
            rhs,
            slack: rhs - lhs,
            worst_round,
        }
    }

    /// Builds a report from per-round `(lhs, rhs)` pairs, keeping the worst
    /// round as described on `worst_round`.
    fn per_round(
        name: impl Into<String>,
        pairs: impl IntoIterator<Item = (usize, f64, f64)>,
    ) -> Self {
        // failures first, then the round closest to its bound relative to its size
        let severity = |lhs: f64, rhs: f64| {
            let bound = rhs * (1.0 + REL_SLACK) + ABS_SLACK;
            if lhs > bound {
                (1, lhs - bound)
            } else {
                (0, lhs / bound)
            }
        };
        let mut worst: Option<(usize, f64, f64)> = None;
        for (t, lhs, rhs) in pairs {
            let (fail, value) = severity(lhs, rhs);
            if worst.is_none_or(|(_, l, r)| {
                let (wf, wv) = severity(l, r);
                fail > wf || (fail == wf && value > wv)
            }) {
                worst = Some((t, lhs, rhs));
            }
        }
        match worst {
            Some((t, lhs, rhs)) => Self::new(name, lhs, rhs, Some(t)),
            None => Self::new(name, 0.0, 0.0, None),
        }
    }
}

/// Per-client communication totals in vector units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CommLedger {
    pub compressed: u64,
    pub uncompressed: u64,
    /// Cost of one uncompressed vector.
    pub m: f64,
    /// Broadcast sampling bits, kept out of the vector total.
    pub tau_bits: u64,
}

impl CommLedger {
    pub fn new(m: f64) -> Self {
        CommLedger {
            compressed: 0,
            uncompressed: 0,
            m,
            tau_bits: 0,
        }
    }

    pub fn total(&self) -> f64 {
        comm_ledger(self.compressed, self.m, self.uncompressed)
    }
}

/// `rounds * 1 + uncompressed_rounds * m`.
pub fn comm_ledger(rounds: u64, m: f64, uncompressed_rounds: u64) -> f64 {
    rounds as f64 + uncompressed_rounds as f64 * m
}

/// `prox(psi, g_bar, A, gamma, x_0)`: the iterate dual averaging would
/// produce from uncompressed gradients.
pub fn virtual_iterate(
    psi: &CompositePart,
    g_bar: &DenseVector,
    weight_sum: f64,
    gamma: f64,
    anchor: &DenseVector,
) -> Result<DenseVector> {
    psi.prox(g_bar, weight_sum, gamma, anchor)
}

/// `||x~_t - x_t|| <= ||e_t|| / gamma_{t-1}` at every round, with
/// `gamma_{-1} = gamma_0`.
pub fn check_virtual_real(trace: &RunTrace) -> Result<CheckReport> {
    let mut pairs = Vec::with_capacity(trace.records.len());
    for (t, r) in trace.records.iter().enumerate() {
        let dist = r
            .dist_vr
            .ok_or(Error::MissingDebugLog("virtual iterates"))?;
        let gamma_prev = if t == 0 {
            r.gamma_t
        } else {
            trace.records[t - 1].gamma_t
        };
        pairs.push((r.t, dist, r.err_norm / gamma_prev));
    }
    Ok(CheckReport::per_round("virtual_vs_real", pairs))
}

/// Both EControl error-sum bounds for each client. With `gammas` set the
/// stepsize-weighted forms are checked instead.
pub fn check_econtrol_sums(
    logs: &[Vec<ClientRoundLog>],
    delta: f64,
    gammas: Option<&[f64]>,
) -> Result<Vec<CheckReport>> {
    let (error_factor, message_factor) = econtrol_bound_factors(delta)?;
    let mut reports = Vec::with_capacity(2 * logs.len());
    for (client, log) in logs.iter().enumerate() {
        let rounds = log.len();
        if let Some(g) = gammas {
            if g.len() < rounds {
                return Err(Error::invalid("fewer stepsizes than logged rounds"));
            }
        }
        let w = |t: usize| gammas.map_or(1.0, |g| g[t]);
        // sum_{t=0..T-2} ||g_{t+1} - g_t||^2 / gamma_t^2; log[t] holds ||g_t - g_{t-1}||^2
        let drift: f64 = (1..rounds)
            .map(|t| log[t].grad_diff_sq / w(t - 1).powi(2))
            .sum();
        // sum_{t=1..T} ||e_t||^2 / gamma_{t-1}^2; log[t] holds ||e_{t+1}||^2
        let errors: f64 = (0..rounds).map(|t| log[t].error_sq / w(t).powi(2)).sum();
        let residuals: f64 = (0..rounds)
            .map(|t| log[t].residual_sq / if gammas.is_some() { w(t).powi(4) } else { 1.0 })
            .sum();
        let residual_factor = match gammas {
            Some(_) if rounds > 0 => message_factor / w(0).powi(2),
            _ => message_factor,
        };
        let suffix = if gammas.is_some() { "_weighted" } else { "" };
        reports.push(CheckReport::new(
            format!("econtrol_error_sum{suffix}[client {client}]"),
            errors,
            error_factor * drift,
            None,
        ));
        reports.push(CheckReport::new(
            format!("econtrol_message_sum{suffix}[client {client}]"),
            residuals,
            residual_factor * drift,
            None,
        ));
    }
    Ok(reports)
}

/// `sum_t [(gamma_t + gamma_{t-1} - a_t L)/(2 a_t) r_t^2 + <g_hat_t - grad f(x_t), x_{t+1} - x_t>]
///  <= F(x_0) - F(x_T) + 1/2 sum_t beta_t (rho_t^2 - rho_{t+1}^2)`
/// with `beta_t = (gamma_t - gamma_{t-1}) / a_t`; the telescoping term
/// vanishes for a constant stepsize.
pub fn check_consecutive_distance(trace: &RunTrace, smoothness: f64) -> Result<CheckReport> {
    let debug = trace
        .debug
        .as_ref()
        .ok_or(Error::MissingDebugLog("per-round distances"))?;
    let rounds = trace.records.len();
    let gamma = |t: usize| trace.records[t].gamma_t;
    let mut lhs = 0.0;
    let mut telescoping = 0.0;
    for t in 0..rounds {
        let a = trace.weights[t];
        let prev = if t == 0 { gamma(0) } else { gamma(t - 1) };
        lhs += (gamma(t) + prev - a * smoothness) / (2.0 * a) * debug.step_sq[t] + debug.inner[t];
        let beta = (gamma(t) - prev) / a;
        telescoping += beta * (debug.anchor_dist_sq[t] - debug.anchor_dist_sq[t + 1]);
    }
    let rhs = if rounds == 0 {
        0.0
    } else {
        trace.f_anchor - debug.f_last + 0.5 * telescoping
    };
    Ok(CheckReport::new("consecutive_distance", lhs, rhs, None))
}

/// Runs the weighted reservoir `runs` times and compares the frequency of
/// each retained index with `a_i / A_T`. The report's `lhs` is the largest
/// deviation in binomial standard errors; the check passes below 4.
pub fn sampling_distribution_test(
    weights: &[f64],
    runs: usize,
    rng: &mut RngStream,
) -> Result<CheckReport> {
    if weights.is_empty() {
        return Err(Error::invalid("sampling test needs at least one weight"));
    }
    if runs < 10_000 {
        return Err(Error::invalid(format!(
            "sampling test needs at least 10^4 runs, got {runs}"
        )));
    }
    let mut counts = vec![0usize; weights.len()];
    for _ in 0..runs {
        let mut reservoir = Reservoir::new();
        for &a in weights {
            reservoir.offer(a, 1.0, rng)?;
        }
        let frozen = reservoir.frozen().ok_or(Error::NoFrozenSample)?;
        counts[frozen.index] += 1;
    }
    let total: f64 = weights.iter().sum();
    let mut worst = (0, 0.0);
    for (i, (&c, &a)) in counts.iter().zip(weights).enumerate() {
        let p = a / total;
        let freq = c as f64 / runs as f64;
        let se = (p * (1.0 - p) / runs as f64).sqrt();
        let z = if se > 0.0 {
            (freq - p).abs() / se
        } else if (freq - p).abs() <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        if z > worst.1 {
            worst = (i, z);
        }
    }
    Ok(CheckReport::new(
        "sampling_distribution",
        worst.1,
        4.0,
        Some(worst.0),
    ))
}

/// `E_tau F(x_bar_T) - F* = sum_t a_t (F(x~_{t+1}) - F*) / A_T`, the exact
/// expectation of the sampled output's gap over the reservoir draw.
pub fn expected_output_gap(trace: &RunTrace) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (r, &a) in trace.records.iter().zip(&trace.weights) {
        let gap = r.f_virtual.ok_or(Error::MissingDebugLog("virtual gaps"))?;
        num += a * gap;
        den += a;
    }
    if den == 0.0 {
        return Err(Error::NoFrozenSample);
    }
    Ok(num / den)
}
