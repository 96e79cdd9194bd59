use compoda_core::algorithms::{
    run, run_econtrol_da, Algorithm, Execution, GammaSchedule, RunSettings, RunTrace,
};
use compoda_core::composite::CompositePart;
use compoda_core::compressors::Compressor;
use compoda_core::diagnostics::{check_econtrol_sums, virtual_iterate};
use compoda_core::numkit::{derive_stream, streams, DenseVector};
use compoda_core::problems::{gen_softmax, split_softmax_to_clients, SmoothOracle, SoftmaxClients};

const SEED: u64 = 17;

fn instance(n: usize) -> (SoftmaxClients, DenseVector) {
    let problem = gen_softmax(12, 48, 0.1, SEED).unwrap();
    let clients = split_softmax_to_clients(problem, n, SEED).unwrap();
    let x0 = derive_stream(SEED, streams::INITIAL_POINT).sphere_point(12, 1.0);
    (clients, x0)
}

fn settings(
    x0: &DenseVector,
    compressor: Compressor,
    psi: CompositePart,
    gamma: f64,
) -> RunSettings {
    let mut s = RunSettings::new(
        x0.clone(),
        compressor,
        psi,
        GammaSchedule::Constant(gamma),
        150,
    );
    s.seed = SEED;
    s
}

fn bits(trace: &RunTrace) -> Vec<u64> {
    let mut out: Vec<u64> = trace
        .records
        .iter()
        .flat_map(|r| {
            [
                r.f_real.to_bits(),
                r.f_virtual.map_or(0, f64::to_bits),
                r.err_norm.to_bits(),
            ]
        })
        .collect();
    out.extend(trace.x_final.as_slice().iter().map(|v| v.to_bits()));
    if let Some(x) = &trace.x_bar {
        out.extend(x.as_slice().iter().map(|v| v.to_bits()));
    }
    out
}

#[test]
fn parallel_execution_matches_sequential_bitwise() {
    let (clients, x0) = instance(6);
    for algorithm in [
        Algorithm::EControlDa,
        Algorithm::ProxEf,
        Algorithm::ProxEf21,
    ] {
        let mut s = settings(
            &x0,
            Compressor::top_k(3, 12).unwrap(),
            CompositePart::l1(0.05).unwrap(),
            200.0,
        );
        s.sigma = 2.0;
        let sequential = run(algorithm, &clients, &s).unwrap();
        s.execution = Execution::Parallel;
        let parallel = run(algorithm, &clients, &s).unwrap();
        assert_eq!(bits(&sequential), bits(&parallel), "{}", algorithm.name());
    }
}

#[test]
fn same_seed_reproduces_and_other_seed_differs() {
    let (clients, x0) = instance(3);
    let mut s = settings(
        &x0,
        Compressor::top_k(2, 12).unwrap(),
        CompositePart::Zero,
        100.0,
    );
    s.sigma = 1.0;
    let a = run_econtrol_da(&clients, &s).unwrap();
    let b = run_econtrol_da(&clients, &s).unwrap();
    assert_eq!(bits(&a), bits(&b));
    s.seed = SEED + 1;
    let c = run_econtrol_da(&clients, &s).unwrap();
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn sampled_output_is_the_virtual_iterate_at_the_frozen_round() {
    let (clients, x0) = instance(4);
    let psi = CompositePart::l1(0.05).unwrap();
    for seed in 0..5 {
        let mut s = settings(&x0, Compressor::top_k(3, 12).unwrap(), psi.clone(), 150.0);
        s.sigma = 1.0;
        s.seed = seed;
        s.debug = true;
        let trace = run_econtrol_da(&clients, &s).unwrap();
        let frozen = trace.frozen.unwrap();
        assert_eq!(frozen.weight_sum, (frozen.index + 1) as f64);
        let debug = trace.debug.as_ref().unwrap();
        let expected = virtual_iterate(
            &psi,
            &debug.true_sums[frozen.index],
            frozen.weight_sum,
            frozen.gamma,
            &trace.anchor,
        )
        .unwrap();
        assert_eq!(trace.x_bar.as_ref().unwrap(), &expected, "seed {seed}");
    }
}

/// Plain proximal gradient descent with step `h` on exact gradients.
fn prox_gradient_descent(
    clients: &dyn SmoothOracle,
    psi: &CompositePart,
    x0: &DenseVector,
    h: f64,
    rounds: usize,
) -> DenseVector {
    let mut x = x0.clone();
    for _ in 0..rounds {
        x = psi.prox_step(&clients.gradient(&x), &x, h).unwrap();
    }
    x
}

#[test]
fn lossless_baselines_reduce_to_proximal_gradient_descent() {
    let (clients, x0) = instance(4);
    let psi = CompositePart::l1(0.05).unwrap();
    let expected = prox_gradient_descent(&clients, &psi, &x0, 1.0 / 50.0, 150);
    for algorithm in [Algorithm::ProxEf, Algorithm::ProxEf21] {
        let s = settings(&x0, Compressor::identity(12), psi.clone(), 50.0);
        let trace = run(algorithm, &clients, &s).unwrap();
        let dev = trace.x_final.dist(&expected).unwrap();
        assert!(dev <= 1e-12, "{}: {dev}", algorithm.name());
    }
}

#[test]
fn doubled_eta_is_reported_not_fatal() {
    let (clients, x0) = instance(4);
    let compressor = Compressor::top_k(2, 12).unwrap();
    let delta = compressor.contraction_delta();
    let mut s = settings(&x0, compressor, CompositePart::l1(0.05).unwrap(), 300.0);
    s.debug = true;
    s.eta = Some(2.0 * compoda_core::feedback::eta_default(delta).unwrap());
    let trace = run_econtrol_da(&clients, &s).unwrap();
    let reports = check_econtrol_sums(&trace.debug.unwrap().client_logs, delta, None).unwrap();
    assert_eq!(reports.len(), 8);
    assert!(reports
        .iter()
        .all(|r| r.lhs.is_finite() && r.rhs.is_finite()));
}

#[test]
fn weight_sum_counts_rounds_under_unit_weights() {
    let (clients, x0) = instance(2);
    for rounds in [1, 2, 7] {
        let mut s = settings(
            &x0,
            Compressor::top_k(4, 12).unwrap(),
            CompositePart::Zero,
            80.0,
        );
        s.rounds = rounds;
        let trace = run_econtrol_da(&clients, &s).unwrap();
        let frozen = trace.frozen.unwrap();
        assert!(frozen.index < rounds);
        assert_eq!(frozen.weight_sum, (frozen.index + 1) as f64);
        assert_eq!(trace.ledger.tau_bits, rounds as u64);
    }
}
