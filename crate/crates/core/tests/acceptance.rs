//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Tolerances and scenario parameters are pinned here; every run is seeded.

use std::process::ExitCode;
use std::time::Instant;

use compoda_core::algorithms::{
    composite_value, gamma_fixed, reference_optimum, run_econtrol_da, run_prox_ef, run_prox_ef21,
    Algorithm, GammaSchedule, InitialStep, RunSettings, RunTrace, StepsizeParams, BASELINE_GRID,
    DA_INV_GAMMA_GRID,
};
use compoda_core::composite::CompositePart;
use compoda_core::compressors::{verify_contraction, Compressor};
use compoda_core::diagnostics::oracles::brute_force_prox;
use compoda_core::diagnostics::{
    check_consecutive_distance, check_econtrol_sums, check_virtual_real, expected_output_gap,
    sampling_distribution_test,
};
use compoda_core::feedback::econtrol_bound_factors;
use compoda_core::numkit::{derive_stream, finite_diff_gradient, streams, DenseVector};
use compoda_core::problems::{
    estimate_smoothness, gen_logistic_dataset, gen_softmax, partition_heterogeneous,
    replicate_softmax_to_clients, split_softmax_to_clients, LogisticClients, LogisticProblem,
    SmoothOracle, SoftmaxClients,
};

const SEED: u64 = 2024;

/// Prox agreement with the brute-force oracle.
const PROX_TOL: f64 = 1e-6;
/// Exact-limit agreement with plain dual averaging.
const EXACT_LIMIT_TOL: f64 = 1e-12;
/// Finite-difference agreement.
const GRAD_REL_TOL: f64 = 1e-5;
const FD_STEP: f64 = 1e-5;
/// Recentring tolerance.
const RECENTRE_TOL: f64 = 1e-10;
/// Deterministic-rate ratio between T = 800 and T = 400.
const RATE_RATIO: f64 = 0.6;
/// Required plateau ratio between n = 2 and n = 32.
const SPEEDUP_RATIO: f64 = 4.0;
/// Small constant stepsize (large gamma) and horizon for the plateau runs.
const SPEEDUP_GAMMA: f64 = 100.0;
const SPEEDUP_ROUNDS: usize = 2000;
/// Smoothness safety factor on probe estimates.
const SMOOTHNESS_SAFETY: f64 = 1.5;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

struct Softmax {
    clients: SoftmaxClients,
    x0: DenseVector,
    /// Rigorous upper bound on both `L` and `ell`.
    bound: f64,
    /// Probe estimate of `ell` times the safety factor.
    ell: f64,
}

fn softmax(d: usize, k: usize, n: usize, x0_radius: f64) -> Softmax {
    let problem = gen_softmax(d, k, 0.1, SEED).unwrap();
    let bound = problem.smoothness_bound();
    let clients = split_softmax_to_clients(problem, n, SEED).unwrap();
    let x0 = derive_stream(SEED, streams::INITIAL_POINT).sphere_point(d, x0_radius);
    let est = estimate_smoothness(
        &clients,
        &x0,
        x0_radius.max(1.0),
        32,
        &mut derive_stream(SEED, streams::SMOOTHNESS_PROBES),
    )
    .unwrap()
    .scaled(SMOOTHNESS_SAFETY);
    Softmax {
        clients,
        x0,
        bound,
        ell: est.l_avg,
    }
}

fn f_star(oracle: &dyn SmoothOracle, psi: &CompositePart, x0: &DenseVector) -> (f64, DenseVector) {
    let sol = reference_optimum(oracle, psi, x0, 1e-11, 200_000).unwrap();
    (sol.value, sol.x)
}

fn settings(
    x0: &DenseVector,
    compressor: Compressor,
    psi: CompositePart,
    gamma: f64,
    rounds: usize,
) -> RunSettings {
    let mut s = RunSettings::new(
        x0.clone(),
        compressor,
        psi,
        GammaSchedule::Constant(gamma),
        rounds,
    );
    s.seed = SEED;
    s
}

fn params(
    ell: f64,
    delta: f64,
    sigma: f64,
    clients: usize,
    r0: f64,
    rounds: usize,
) -> StepsizeParams {
    StepsizeParams {
        ell,
        delta,
        sigma,
        clients,
        r0,
        rounds,
    }
}

fn c01_contraction() -> Outcome {
    let mut rng = derive_stream(SEED, streams::CHECKS);
    let mut worst = Vec::new();
    for (d, k) in [(10, 1), (10, 5), (200, 20)] {
        let c = Compressor::top_k(k, d).unwrap();
        match verify_contraction(&c, 10_000, &mut rng) {
            Ok(r) => worst.push(format!(
                "({d},{k}) max {:.4} <= {:.4}",
                r.max_ratio, r.bound
            )),
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    outcome(true, worst.join(", "))
}

fn c02_prox_oracle() -> Outcome {
    let mut rng = derive_stream(SEED, streams::CHECKS + 1);
    let mut max_err: f64 = 0.0;
    for i in 0..200 {
        let d = 1 + rng.index(5);
        let psi = match i % 3 {
            0 => CompositePart::Zero,
            1 => CompositePart::l1(rng.uniform(0.0, 2.0)).unwrap(),
            _ => {
                CompositePart::ball(rng.uniform(0.1, 2.0), Some(rng.normal_vector(d, 1.0))).unwrap()
            }
        };
        let s = rng.normal_vector(d, 3.0);
        let anchor = rng.normal_vector(d, 1.0);
        let weight = rng.uniform(0.1, 5.0);
        let gamma = rng.uniform(0.1, 5.0);
        let fast = psi.prox(&s, weight, gamma, &anchor).unwrap();
        let slow = brute_force_prox(&psi, &s, weight, gamma, &anchor).unwrap();
        max_err = max_err.max(fast.dist(&slow).unwrap());
    }
    outcome(
        max_err <= PROX_TOL,
        format!("max deviation {max_err:.2e} (tol {PROX_TOL:.0e})"),
    )
}

fn c03_virtual_real() -> Outcome {
    let sm = softmax(50, 256, 4, 1.0);
    let psi = CompositePart::l1(0.1).unwrap();
    let (_, x_star) = f_star(&sm.clients, &psi, &sm.x0);
    let r0 = sm.x0.dist(&x_star).unwrap();
    let compressor = Compressor::top_k_fraction(0.2, 50).unwrap();
    let rounds = 500;
    let gamma = gamma_fixed(&params(
        sm.ell,
        compressor.contraction_delta(),
        5.0,
        4,
        r0,
        rounds,
    ))
    .unwrap();
    let mut s = settings(&sm.x0, compressor, psi, gamma, rounds);
    s.sigma = 5.0;
    let trace = run_econtrol_da(&sm.clients, &s).unwrap();
    let report = check_virtual_real(&trace).unwrap();
    outcome(
        report.passed,
        format!(
            "tightest round {}: {:.3e} <= {:.3e} (gamma {gamma:.1})",
            report.worst_round.unwrap_or(0),
            report.lhs,
            report.rhs
        ),
    )
}

fn c04_econtrol_sums() -> Outcome {
    let sm = softmax(50, 256, 4, 1.0);
    let psi = CompositePart::l1(0.1).unwrap();
    let mut details = Vec::new();
    let mut all = true;
    for k_frac in [0.2, 0.5, 1.0] {
        let compressor = Compressor::top_k_fraction(k_frac, 50).unwrap();
        let delta = compressor.contraction_delta();
        let gamma = gamma_fixed(&params(sm.ell, delta, 0.0, 4, 1.0, 300)).unwrap();
        let mut s = settings(&sm.x0, compressor, psi.clone(), gamma, 300);
        s.debug = true;
        let trace = run_econtrol_da(&sm.clients, &s).unwrap();
        let logs = &trace.debug.as_ref().unwrap().client_logs;
        let reports = check_econtrol_sums(logs, delta, None).unwrap();
        let ok = if delta == 1.0 {
            reports.iter().all(|r| r.lhs == 0.0)
        } else {
            reports.iter().all(|r| r.passed)
        };
        all &= ok;
        let worst = reports
            .iter()
            .map(|r| if r.rhs > 0.0 { r.lhs / r.rhs } else { r.lhs })
            .fold(0.0, f64::max);
        details.push(format!("delta {delta}: worst lhs/rhs {worst:.2e}"));
    }
    let (fe, fg) = econtrol_bound_factors(0.5).unwrap();
    details.push(format!("factors(0.5) = ({fe:.1}, {fg:.1})"));
    outcome(all, details.join("; "))
}

fn c05_consecutive_distance() -> Outcome {
    let sm = softmax(50, 256, 4, 1.0);
    let psi = CompositePart::l1(0.1).unwrap();
    let compressor = Compressor::top_k_fraction(0.1, 50).unwrap();
    let gamma = gamma_fixed(&params(
        sm.ell,
        compressor.contraction_delta(),
        0.0,
        4,
        1.0,
        300,
    ))
    .unwrap();
    let mut s = settings(&sm.x0, compressor, psi, gamma, 300);
    s.debug = true;
    let trace = run_econtrol_da(&sm.clients, &s).unwrap();
    let report = check_consecutive_distance(&trace, sm.bound).unwrap();
    outcome(
        report.passed,
        format!(
            "{:.4e} <= {:.4e} (L bound {:.1})",
            report.lhs, report.rhs, sm.bound
        ),
    )
}

fn c06_sampling() -> Outcome {
    let mut rng = derive_stream(SEED, streams::CHECKS + 6);
    let mut ok = true;
    let mut details = Vec::new();
    for t in [3, 10] {
        let report = sampling_distribution_test(&vec![1.0; t], 100_000, &mut rng).unwrap();
        ok &= report.passed;
        details.push(format!("T={t}: max z {:.2} <= 4", report.lhs));
    }
    outcome(ok, details.join(", "))
}

fn plateau(trace: &RunTrace) -> f64 {
    let tail = trace.records.len() / 5;
    let rows = &trace.records[trace.records.len() - tail..];
    rows.iter().map(|r| r.f_real).sum::<f64>() / tail as f64
}

fn c07_linear_speedup() -> Outcome {
    // Every client holds the full recentred instance, so F is the same for
    // all n, the minimizer is the origin and only the noise average changes.
    let mut plateaus = Vec::new();
    for n in [2, 8, 32] {
        let problem = gen_softmax(50, 256, 0.1, SEED).unwrap();
        let clients = replicate_softmax_to_clients(problem, n).unwrap();
        let x0 = derive_stream(SEED, streams::INITIAL_POINT).sphere_point(50, 1.0);
        let compressor = Compressor::top_k_fraction(0.1, 50).unwrap();
        let mut s = settings(
            &x0,
            compressor,
            CompositePart::Zero,
            SPEEDUP_GAMMA,
            SPEEDUP_ROUNDS,
        );
        s.sigma = 5.0;
        s.f_star = Some(clients.value(&DenseVector::zeros(50)));
        let trace = run_econtrol_da(&clients, &s).unwrap();
        plateaus.push(plateau(&trace));
    }
    let decreasing = plateaus.windows(2).all(|w| w[1] < w[0]);
    let ratio = plateaus[0] / plateaus[2];
    outcome(
        decreasing && ratio >= SPEEDUP_RATIO,
        format!(
            "plateaus n=2,8,32: {:.3e}, {:.3e}, {:.3e}; ratio {ratio:.2} (need >= {SPEEDUP_RATIO})",
            plateaus[0], plateaus[1], plateaus[2]
        ),
    )
}

fn c08_virtual_vs_real() -> Outcome {
    let sm = softmax(50, 256, 4, 1.0);
    let psi = CompositePart::l1(0.1).unwrap();
    let (fs, _) = f_star(&sm.clients, &psi, &sm.x0);
    let compressor = Compressor::top_k_fraction(0.1, 50).unwrap();
    let mut best: Option<RunTrace> = None;
    for inv_gamma in DA_INV_GAMMA_GRID {
        let mut s = settings(
            &sm.x0,
            compressor.clone(),
            psi.clone(),
            1.0 / inv_gamma,
            1000,
        );
        s.sigma = 5.0;
        s.f_star = Some(fs);
        let trace = run_econtrol_da(&sm.clients, &s).unwrap();
        let last = trace.records.last().unwrap().f_real;
        if last.is_finite()
            && best
                .as_ref()
                .is_none_or(|b| last < b.records.last().unwrap().f_real)
        {
            best = Some(trace);
        }
    }
    let best = best.unwrap();
    let last = best.records.last().unwrap();
    let fv = last.f_virtual.unwrap();
    let gap = (last.f_real - fv).abs();
    let bound = (0.5 * fv).max(1e-3);
    outcome(
        gap <= bound,
        format!(
            "|F_real - F_virtual| = {gap:.3e} <= {bound:.3e} (F_real {:.3e}, F_virtual {fv:.3e}, gamma {:.0})",
            last.f_real, last.gamma_t
        ),
    )
}

fn logistic() -> (LogisticClients, DenseVector) {
    let data = gen_logistic_dataset(2000, 50, 10, SEED).unwrap();
    let problem = LogisticProblem::new(&data, None).unwrap();
    let partition = partition_heterogeneous(&data.labels, 10, 0.5, SEED).unwrap();
    (
        LogisticClients::new(problem, partition).unwrap(),
        DenseVector::zeros(50),
    )
}

fn c09_baseline_ordering() -> Outcome {
    let (clients, x0) = logistic();
    let psi = CompositePart::l1(1e-3).unwrap();
    let (fs, _) = f_star(&clients, &psi, &x0);
    let compressor = Compressor::top_k_fraction(0.1, 50).unwrap();
    let m = 1.0 / compressor.contraction_delta();
    let budget = 2000.0;
    let sigma = 1.0;
    let run_best = |algorithm: Algorithm, grid: &[f64], upfront: f64| -> f64 {
        let rounds = (budget - upfront * m).floor() as usize;
        grid.iter()
            .map(|&v| {
                let mut s = settings(&x0, compressor.clone(), psi.clone(), 1.0 / v, rounds);
                s.sigma = sigma;
                s.uncompressed_cost = m;
                s.f_star = Some(fs);
                let trace = match algorithm {
                    Algorithm::EControlDa => run_econtrol_da(&clients, &s),
                    Algorithm::ProxEf => run_prox_ef(&clients, &s),
                    Algorithm::ProxEf21 => run_prox_ef21(&clients, &s),
                }
                .unwrap();
                let gap = trace.records.last().unwrap().f_real;
                if gap.is_finite() {
                    gap
                } else {
                    f64::INFINITY
                }
            })
            .fold(f64::INFINITY, f64::min)
    };
    let ec = run_best(Algorithm::EControlDa, &DA_INV_GAMMA_GRID, 2.0);
    let ef = run_best(Algorithm::ProxEf, &BASELINE_GRID, 0.0);
    let ef21 = run_best(Algorithm::ProxEf21, &BASELINE_GRID, 1.0);
    outcome(
        ec <= ef && ec <= ef21,
        format!("best final gap: econtrol_da {ec:.4e}, prox_ef {ef:.4e}, prox_ef21 {ef21:.4e}"),
    )
}

fn c10_deterministic_rate() -> Outcome {
    let sm = softmax(50, 256, 4, 1.0);
    let psi = CompositePart::l1(0.1).unwrap();
    let (fs, x_star) = f_star(&sm.clients, &psi, &sm.x0);
    let r0 = sm.x0.dist(&x_star).unwrap();
    let compressor = Compressor::top_k_fraction(0.5, 50).unwrap();
    let mut gaps = Vec::new();
    for rounds in [400, 800] {
        let gamma = gamma_fixed(&params(
            sm.ell,
            compressor.contraction_delta(),
            0.0,
            4,
            r0,
            rounds,
        ))
        .unwrap();
        let mut s = settings(&sm.x0, compressor.clone(), psi.clone(), gamma, rounds);
        s.f_star = Some(fs);
        let trace = run_econtrol_da(&sm.clients, &s).unwrap();
        gaps.push(expected_output_gap(&trace).unwrap());
    }
    let ratio = gaps[1] / gaps[0];
    outcome(
        ratio <= RATE_RATIO,
        format!(
            "E gap T=400 {:.4e}, T=800 {:.4e}; ratio {ratio:.3} <= {RATE_RATIO}",
            gaps[0], gaps[1]
        ),
    )
}

fn c11_ledger() -> Outcome {
    let sm = softmax(20, 64, 4, 1.0);
    let psi = CompositePart::l1(0.1).unwrap();
    let compressor = Compressor::top_k_fraction(0.1, 20).unwrap();
    let m = 10.0;
    let rounds = 100;
    let mut s = settings(&sm.x0, compressor, psi, 1e3, rounds);
    s.uncompressed_cost = m;
    s.initial_step = Some(InitialStep {
        smoothness: sm.bound,
        radius: 1.0,
    });
    let ec = run_econtrol_da(&sm.clients, &s).unwrap();
    let ef21 = run_prox_ef21(&sm.clients, &s).unwrap();
    let t = rounds as f64;
    let ok = ec.ledger.total() == t + 3.0 * m
        && ec.records.last().unwrap().comm_cost_cum == t + 3.0 * m
        && ef21.ledger.total() == t + m
        && ec.ledger.tau_bits == rounds as u64
        && ec.records.last().unwrap().tau_bits_cum == rounds as u64;
    outcome(
        ok,
        format!(
            "econtrol_da {} (T+3m = {}), prox_ef21 {} (T+m = {}), tau bits {}",
            ec.ledger.total(),
            t + 3.0 * m,
            ef21.ledger.total(),
            t + m,
            ec.ledger.tau_bits
        ),
    )
}

fn c12_exact_limit() -> Outcome {
    let sm = softmax(50, 256, 4, 1.0);
    let psi = CompositePart::l1(0.1).unwrap();
    let gamma = 2.0 * sm.bound;
    let rounds = 200;
    let s = settings(&sm.x0, Compressor::identity(50), psi.clone(), gamma, rounds);
    let trace = run_econtrol_da(&sm.clients, &s).unwrap();
    // plain dual averaging on exact gradients
    let mut x = sm.x0.clone();
    let mut sum = DenseVector::zeros(50);
    let mut max_dev: f64 = 0.0;
    for t in 0..rounds {
        sum.add_assign(&sm.clients.gradient(&x)).unwrap();
        x = psi.prox(&sum, (t + 1) as f64, gamma, &sm.x0).unwrap();
        let real = composite_value(&sm.clients, &psi, &x) - trace.records[t].f_real;
        max_dev = max_dev.max(real.abs());
    }
    let iterate_dev = x.dist(&trace.x_final).unwrap();
    max_dev = max_dev.max(iterate_dev);
    outcome(
        max_dev <= EXACT_LIMIT_TOL,
        format!("max deviation {max_dev:.2e} (tol {EXACT_LIMIT_TOL:.0e})"),
    )
}

fn max_rel_fd_error(oracle: &dyn SmoothOracle, scale: f64) -> f64 {
    let mut rng = derive_stream(SEED, streams::CHECKS + 13);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x = rng.normal_vector(oracle.dim(), scale);
        let analytic = oracle.gradient(&x);
        let numeric = finite_diff_gradient(|y| oracle.value(y), &x, FD_STEP).unwrap();
        worst = worst.max(analytic.dist(&numeric).unwrap() / analytic.norm().max(1e-12));
    }
    worst
}

fn c13_gradients() -> Outcome {
    let problem = gen_softmax(50, 256, 0.1, SEED).unwrap();
    let recentred = problem.gradient(&DenseVector::zeros(50)).norm();
    let clients = split_softmax_to_clients(problem, 4, SEED).unwrap();
    let softmax_err = max_rel_fd_error(&clients, 0.3);
    let (logistic, _) = logistic();
    let logistic_err = max_rel_fd_error(&logistic, 0.3);
    outcome(
        softmax_err <= GRAD_REL_TOL && logistic_err <= GRAD_REL_TOL && recentred <= RECENTRE_TOL,
        format!(
            "softmax {softmax_err:.2e}, logistic {logistic_err:.2e}, ||grad f(0)|| {recentred:.1e}"
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        ("compressor contraction", c01_contraction),
        ("prox oracle equivalence", c02_prox_oracle),
        ("virtual-real iterate distance", c03_virtual_real),
        ("econtrol error sums", c04_econtrol_sums),
        ("consecutive distance", c05_consecutive_distance),
        ("reservoir sampling distribution", c06_sampling),
        ("linear speedup", c07_linear_speedup),
        ("virtual vs real objective", c08_virtual_vs_real),
        ("baseline ordering", c09_baseline_ordering),
        ("deterministic convergence rate", c10_deterministic_rate),
        ("communication ledger", c11_ledger),
        ("exact-limit equivalence", c12_exact_limit),
        ("gradient correctness", c13_gradients),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = format!("{:02}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| id == *f || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let status = if result.passed { "PASS" } else { "FAIL" };
        failures += usize::from(!result.passed);
        println!(
            "criterion {id} {status} {name}: {} [{:.1}s]",
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
