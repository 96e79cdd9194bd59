use rayon::prelude::*;

use crate::composite::CompositePart;
use crate::compressors::Compressor;
use crate::diagnostics::{CommLedger, RoundRecord};
use crate::error::{Error, Result};
use crate::feedback::{
    eta_default, ClientRoundLog, EControlClientState, EF21ClientState, EFClientState,
};
use crate::numkit::{derive_stream, streams, DenseVector, RngStream};
use crate::problems::SmoothOracle;

use super::server::{final_output, initial_gradient_step, FrozenSample, Reservoir, ServerState};
use super::stepsize::GammaSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    EControlDa,
    ProxEf,
    ProxEf21,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::EControlDa => "econtrol_da",
            Algorithm::ProxEf => "prox_ef",
            Algorithm::ProxEf21 => "prox_ef21",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    #[default]
    Sequential,
    Parallel,
}

/// Settings of the one proximal gradient step taken before EControl-DA.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialStep {
    pub smoothness: f64,
    pub radius: f64,
}

#[derive(Clone, Debug)]
pub struct RunSettings {
    pub rounds: usize,
    pub sigma: f64,
    pub compressor: Compressor,
    pub psi: CompositePart,
    /// `gamma_t` for dual averaging. The proximal baselines take the
    /// constant step `h = 1 / gamma`.
    pub gamma: GammaSchedule,
    /// Defaults to `eta_default(delta)`.
    pub eta: Option<f64>,
    /// Round weights `a_t`; empty means `a_t = 1`.
    pub weights: Vec<f64>,
    /// Skipped when `psi` is zero.
    pub initial_step: Option<InitialStep>,
    /// Cost `m` of one uncompressed vector.
    pub uncompressed_cost: f64,
    pub seed: u64,
    pub debug: bool,
    pub x0: DenseVector,
    /// Subtracted from every reported objective value.
    pub f_star: Option<f64>,
    pub execution: Execution,
}

impl RunSettings {
    pub fn new(
        x0: DenseVector,
        compressor: Compressor,
        psi: CompositePart,
        gamma: GammaSchedule,
        rounds: usize,
    ) -> Self {
        RunSettings {
            rounds,
            sigma: 0.0,
            compressor,
            psi,
            gamma,
            eta: None,
            weights: Vec::new(),
            initial_step: None,
            uncompressed_cost: 1.0,
            seed: 0,
            debug: false,
            x0,
            f_star: None,
            execution: Execution::Sequential,
        }
    }

    fn weight(&self, t: usize) -> f64 {
        self.weights.get(t).copied().unwrap_or(1.0)
    }

    fn validate(&self, oracle: &dyn SmoothOracle) -> Result<()> {
        self.x0.check_dim(oracle.dim())?;
        if self.compressor.dim() != oracle.dim() {
            return Err(Error::DimensionMismatch {
                expected: oracle.dim(),
                found: self.compressor.dim(),
            });
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if !(self.uncompressed_cost >= 1.0) {
            return Err(Error::invalid(format!(
                "uncompressed cost m must be >= 1, got {}",
                self.uncompressed_cost
            )));
        }
        if !self.weights.is_empty() && self.weights.len() < self.rounds {
            return Err(Error::invalid("fewer round weights than rounds"));
        }
        if self.weights.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::invalid("round weights must be > 0"));
        }
        if !self.x0.is_finite() {
            return Err(Error::NonFinite("initial point".into()));
        }
        Ok(())
    }
}

/// Extra per-round data retained in debug mode for the inequality checks.
#[derive(Clone, Debug, Default)]
pub struct RunDebug {
    /// `[client][t]` scalars from the feedback mechanism.
    pub client_logs: Vec<Vec<ClientRoundLog>>,
    /// `sum_{k<=t} a_k g_k` (client mean) after round `t`.
    pub true_sums: Vec<DenseVector>,
    /// `||x_{t+1} - x_t||^2`.
    pub step_sq: Vec<f64>,
    /// `<g_hat_t - grad f(x_t), x_{t+1} - x_t>`.
    pub inner: Vec<f64>,
    /// `||x_t - x_0||^2`, length `T + 1`.
    pub anchor_dist_sq: Vec<f64>,
    /// `F(x_T)`.
    pub f_last: f64,
}

#[derive(Clone, Debug)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub records: Vec<RoundRecord>,
    /// Sampled output `x_bar_T`; EControl-DA only.
    pub x_bar: Option<DenseVector>,
    pub x_final: DenseVector,
    /// Point dual averaging is anchored at (after the optional initial step).
    pub anchor: DenseVector,
    /// `F(anchor)`.
    pub f_anchor: f64,
    pub f_star: Option<f64>,
    pub frozen: Option<FrozenSample>,
    pub weights: Vec<f64>,
    pub ledger: CommLedger,
    pub debug: Option<RunDebug>,
}

impl RunTrace {
    /// Gap of `x_bar_T`, measured against `f_star` when known.
    pub fn final_output_gap(&self, oracle: &dyn SmoothOracle, psi: &CompositePart) -> Option<f64> {
        self.x_bar
            .as_ref()
            .map(|x| composite_value(oracle, psi, x) - self.f_star.unwrap_or(0.0))
    }
}

pub fn composite_value(oracle: &dyn SmoothOracle, psi: &CompositePart, x: &DenseVector) -> f64 {
    oracle.value(x) + psi.value(x)
}

struct ClientSlot<S> {
    state: S,
    noise: RngStream,
    compress: RngStream,
    last_g: Option<DenseVector>,
}

fn client_streams(seed: u64, n: usize) -> Vec<(RngStream, RngStream)> {
    (0..n as u64)
        .map(|i| {
            (
                derive_stream(seed, streams::CLIENT_NOISE + i),
                derive_stream(seed, streams::CLIENT_COMPRESSOR + i),
            )
        })
        .collect()
}

fn for_each_client<S, T, F>(
    slots: &mut [ClientSlot<S>],
    execution: Execution,
    f: F,
) -> Result<Vec<T>>
where
    S: Send,
    T: Send,
    F: Fn(usize, &mut ClientSlot<S>) -> Result<T> + Sync,
{
    match execution {
        Execution::Sequential => slots.iter_mut().enumerate().map(|(i, s)| f(i, s)).collect(),
        Execution::Parallel => slots
            .par_iter_mut()
            .enumerate()
            .map(|(i, s)| f(i, s))
            .collect(),
    }
}

struct ClientOutput {
    message: DenseVector,
    g: DenseVector,
    log: ClientRoundLog,
}

fn grad_diff_sq(previous: &Option<DenseVector>, g: &DenseVector) -> Result<f64> {
    match previous {
        Some(p) => g.dist_sq(p),
        None => Ok(0.0),
    }
}

/// Tracks quantities shared by every method: error accumulator, ledger,
/// per-round records and debug scalars.
struct Recorder<'a> {
    oracle: &'a dyn SmoothOracle,
    settings: &'a RunSettings,
    records: Vec<RoundRecord>,
    ledger: CommLedger,
    debug: Option<RunDebug>,
    /// `sum_{k<t} a_k (g_hat_k - mean_i g_k^i)`.
    error: DenseVector,
}

impl<'a> Recorder<'a> {
    fn new(oracle: &'a dyn SmoothOracle, settings: &'a RunSettings) -> Self {
        let n = oracle.num_clients();
        Recorder {
            oracle,
            settings,
            records: Vec::with_capacity(settings.rounds),
            ledger: CommLedger::new(settings.uncompressed_cost),
            debug: settings.debug.then(|| RunDebug {
                client_logs: vec![Vec::with_capacity(settings.rounds); n],
                ..RunDebug::default()
            }),
            error: DenseVector::zeros(oracle.dim()),
        }
    }

    fn gap(&self, x: &DenseVector) -> f64 {
        composite_value(self.oracle, &self.settings.psi, x) - self.settings.f_star.unwrap_or(0.0)
    }

    #[allow(clippy::too_many_arguments)]
    fn round(
        &mut self,
        t: usize,
        outputs: &[ClientOutput],
        g_hat: &DenseVector,
        x_prev: &DenseVector,
        x_next: &DenseVector,
        anchor: &DenseVector,
        gamma: f64,
        virtual_pair: Option<(f64, f64)>,
    ) -> Result<DenseVector> {
        let weight = self.settings.weight(t);
        let grads: Vec<DenseVector> = outputs.iter().map(|o| o.g.clone()).collect();
        let mean_g = DenseVector::mean(&grads)?;
        let err_norm = self.error.norm();
        self.error.add_scaled(weight, &g_hat.sub(&mean_g)?)?;
        self.ledger.compressed += 1;
        if let Some(debug) = &mut self.debug {
            for (log, o) in debug.client_logs.iter_mut().zip(outputs) {
                log.push(o.log);
            }
            if debug.anchor_dist_sq.is_empty() {
                debug.anchor_dist_sq.push(x_prev.dist_sq(anchor)?);
            }
            let step = x_next.sub(x_prev)?;
            let exact = self.oracle.gradient(x_prev);
            debug.step_sq.push(step.norm_sq());
            debug.inner.push(g_hat.sub(&exact)?.dot(&step)?);
            debug.anchor_dist_sq.push(x_next.dist_sq(anchor)?);
        }
        self.records.push(RoundRecord {
            t,
            f_real: self.gap(x_next),
            f_virtual: virtual_pair.map(|p| p.0),
            err_norm,
            dist_vr: virtual_pair.map(|p| p.1),
            gamma_t: gamma,
            comm_cost_cum: self.ledger.total(),
            tau_bits_cum: self.ledger.tau_bits,
        });
        Ok(mean_g)
    }
}

fn stochastic(
    oracle: &dyn SmoothOracle,
    i: usize,
    x: &DenseVector,
    sigma: f64,
    rng: &mut RngStream,
) -> Result<DenseVector> {
    let g = oracle.stochastic_client_gradient(i, x, sigma, rng);
    g.check_dim(oracle.dim())?;
    if !g.is_finite() {
        return Err(Error::NonFinite(format!("gradient of client {i}")));
    }
    Ok(g)
}

/// EControl feedback on the clients, dual averaging with reservoir-sampled
/// output on the server.
pub fn run_econtrol_da(oracle: &dyn SmoothOracle, settings: &RunSettings) -> Result<RunTrace> {
    settings.validate(oracle)?;
    let n = oracle.num_clients();
    let psi = &settings.psi;
    let eta = match settings.eta {
        Some(eta) => eta,
        None => eta_default(settings.compressor.contraction_delta())?,
    };
    let mut rec = Recorder::new(oracle, settings);
    let streams = client_streams(settings.seed, n);
    let (mut noise, compress): (Vec<RngStream>, Vec<RngStream>) = streams.into_iter().unzip();

    let mut anchor = settings.x0.clone();
    if let (Some(step), false) = (settings.initial_step, psi.is_zero()) {
        anchor = initial_gradient_step(
            psi,
            &anchor,
            oracle,
            step.smoothness,
            settings.sigma,
            step.radius,
            &mut noise,
        )?;
        rec.ledger.uncompressed += 1;
    }

    // one uncompressed round: g_hat_{-1}^i is the first sample at the anchor
    let mut slots: Vec<ClientSlot<EControlClientState>> = Vec::with_capacity(n);
    let mut init = Vec::with_capacity(n);
    for (i, (mut noise_rng, compress_rng)) in noise.into_iter().zip(compress).enumerate() {
        let g = stochastic(oracle, i, &anchor, settings.sigma, &mut noise_rng)?;
        init.push(g.clone());
        slots.push(ClientSlot {
            state: EControlClientState::new(g, eta, settings.debug)?,
            noise: noise_rng,
            compress: compress_rng,
            last_g: None,
        });
    }
    rec.ledger.uncompressed += 1;
    let mut g_hat = DenseVector::mean(&init)?;

    let mut server = ServerState::new(anchor.clone());
    let mut reservoir = Reservoir::new();
    let mut server_rng = derive_stream(settings.seed, streams::SERVER_RESERVOIR);
    let mut virtual_x = anchor.clone();
    let f_anchor = composite_value(oracle, psi, &anchor);

    for t in 0..settings.rounds {
        let gamma = settings.gamma.gamma(t)?;
        let weight = settings.weight(t);
        let tau = reservoir.offer(weight, gamma, &mut server_rng)?;
        rec.ledger.tau_bits += 1;
        let compressor = &settings.compressor;
        let x_t = server.x().clone();
        let outputs = for_each_client(&mut slots, settings.execution, |i, slot| {
            let g = if t == 0 {
                init[i].clone()
            } else {
                stochastic(oracle, i, &x_t, settings.sigma, &mut slot.noise)?
            };
            slot.state.reservoir_client_update(&g, weight, tau)?;
            let message = slot
                .state
                .econtrol_step(&g, compressor, &mut slot.compress)?;
            let log = ClientRoundLog {
                error_sq: slot.state.error().norm_sq(),
                residual_sq: slot.state.last_residual().norm_sq(),
                grad_diff_sq: grad_diff_sq(&slot.last_g, &g)?,
            };
            slot.last_g = Some(g.clone());
            Ok(ClientOutput { message, g, log })
        })?;
        let messages: Vec<DenseVector> = outputs.iter().map(|o| o.message.clone()).collect();
        g_hat.add_assign(&DenseVector::mean(&messages)?)?;
        let x_next = server
            .da_update(&g_hat, weight, gamma, psi, settings.gamma.is_variable())?
            .clone();

        let running: Vec<DenseVector> = slots
            .iter()
            .map(|s| s.state.g_bar_running().clone())
            .collect();
        let true_sum = DenseVector::mean(&running)?;
        let dist_vr = virtual_x.dist(&x_t)?;
        virtual_x = psi.prox(&true_sum, server.weight_sum(), gamma, &anchor)?;
        let f_virtual = rec.gap(&virtual_x);
        rec.round(
            t,
            &outputs,
            &g_hat,
            &x_t,
            &x_next,
            &anchor,
            gamma,
            Some((f_virtual, dist_vr)),
        )?;
        if let Some(debug) = &mut rec.debug {
            debug.true_sums.push(true_sum);
        }
    }

    // final uncompressed collection of the frozen cumulative gradients
    rec.ledger.uncompressed += 1;
    let frozen_sums: Vec<DenseVector> = slots
        .iter()
        .map(|s| s.state.g_bar_frozen().clone())
        .collect();
    let x_bar = if settings.rounds > 0 {
        Some(final_output(
            psi,
            &DenseVector::mean(&frozen_sums)?,
            reservoir.frozen(),
            &anchor,
        )?)
    } else {
        None
    };
    if let Some(last) = rec.records.last_mut() {
        last.comm_cost_cum = rec.ledger.total();
    }
    finish(
        rec,
        Algorithm::EControlDa,
        server.x().clone(),
        anchor,
        f_anchor,
        x_bar,
        reservoir.frozen(),
    )
}

fn finish(
    mut rec: Recorder<'_>,
    algorithm: Algorithm,
    x_final: DenseVector,
    anchor: DenseVector,
    f_anchor: f64,
    x_bar: Option<DenseVector>,
    frozen: Option<FrozenSample>,
) -> Result<RunTrace> {
    if let Some(debug) = &mut rec.debug {
        debug.f_last = composite_value(rec.oracle, &rec.settings.psi, &x_final);
        if debug.anchor_dist_sq.is_empty() {
            debug.anchor_dist_sq.push(0.0);
        }
    }
    let settings = rec.settings;
    Ok(RunTrace {
        algorithm,
        records: rec.records,
        x_bar,
        x_final,
        anchor,
        f_anchor,
        f_star: settings.f_star,
        frozen,
        weights: (0..settings.rounds).map(|t| settings.weight(t)).collect(),
        ledger: rec.ledger,
        debug: rec.debug,
    })
}

fn baseline_step(settings: &RunSettings) -> Result<(f64, f64)> {
    let gamma = settings.gamma.gamma(0)?;
    if settings.gamma.is_variable() {
        return Err(Error::invalid("proximal baselines need a constant step"));
    }
    Ok((gamma, 1.0 / gamma))
}

/// Classic error feedback per client; the server averages the compressed
/// gradients and takes a proximal step.
pub fn run_prox_ef(oracle: &dyn SmoothOracle, settings: &RunSettings) -> Result<RunTrace> {
    settings.validate(oracle)?;
    let (gamma, h) = baseline_step(settings)?;
    let psi = &settings.psi;
    let d = oracle.dim();
    let mut rec = Recorder::new(oracle, settings);
    let mut slots: Vec<ClientSlot<EFClientState>> =
        client_streams(settings.seed, oracle.num_clients())
            .into_iter()
            .map(|(noise, compress)| ClientSlot {
                state: EFClientState::new(d, settings.debug),
                noise,
                compress,
                last_g: None,
            })
            .collect();
    let mut x = settings.x0.clone();
    let f_anchor = composite_value(oracle, psi, &x);
    for t in 0..settings.rounds {
        let compressor = &settings.compressor;
        let outputs = for_each_client(&mut slots, settings.execution, |i, slot| {
            let g = stochastic(oracle, i, &x, settings.sigma, &mut slot.noise)?;
            let message = slot.state.ef_step(&g, compressor, &mut slot.compress)?;
            let log = ClientRoundLog {
                error_sq: slot.state.error().norm_sq(),
                residual_sq: slot.state.last_residual().norm_sq(),
                grad_diff_sq: grad_diff_sq(&slot.last_g, &g)?,
            };
            slot.last_g = Some(g.clone());
            Ok(ClientOutput { message, g, log })
        })?;
        let messages: Vec<DenseVector> = outputs.iter().map(|o| o.message.clone()).collect();
        let g_hat = DenseVector::mean(&messages)?;
        let x_next = psi.prox_step(&g_hat, &x, h)?;
        rec.round(t, &outputs, &g_hat, &x, &x_next, &settings.x0, gamma, None)?;
        x = x_next;
    }
    let anchor = settings.x0.clone();
    finish(rec, Algorithm::ProxEf, x, anchor, f_anchor, None, None)
}

/// Gradient-difference compression per client; the server keeps the
/// running aggregate `g_hat` and takes a proximal step.
pub fn run_prox_ef21(oracle: &dyn SmoothOracle, settings: &RunSettings) -> Result<RunTrace> {
    settings.validate(oracle)?;
    let (gamma, h) = baseline_step(settings)?;
    let psi = &settings.psi;
    let mut rec = Recorder::new(oracle, settings);
    let mut x = settings.x0.clone();
    let mut slots = Vec::with_capacity(oracle.num_clients());
    let mut init = Vec::with_capacity(oracle.num_clients());
    for (i, (mut noise, compress)) in client_streams(settings.seed, oracle.num_clients())
        .into_iter()
        .enumerate()
    {
        let g = stochastic(oracle, i, &x, settings.sigma, &mut noise)?;
        init.push(g.clone());
        slots.push(ClientSlot {
            state: EF21ClientState::new(g),
            noise,
            compress,
            last_g: None,
        });
    }
    rec.ledger.uncompressed += 1;
    let mut g_hat = DenseVector::mean(&init)?;
    let f_anchor = composite_value(oracle, psi, &x);
    for t in 0..settings.rounds {
        let compressor = &settings.compressor;
        let outputs = for_each_client(&mut slots, settings.execution, |i, slot| {
            let g = if t == 0 {
                init[i].clone()
            } else {
                stochastic(oracle, i, &x, settings.sigma, &mut slot.noise)?
            };
            let message = slot.state.ef21_step(&g, compressor, &mut slot.compress)?;
            let log = ClientRoundLog {
                error_sq: 0.0,
                residual_sq: slot.state.last_residual().norm_sq(),
                grad_diff_sq: grad_diff_sq(&slot.last_g, &g)?,
            };
            slot.last_g = Some(g.clone());
            Ok(ClientOutput { message, g, log })
        })?;
        let messages: Vec<DenseVector> = outputs.iter().map(|o| o.message.clone()).collect();
        g_hat.add_assign(&DenseVector::mean(&messages)?)?;
        let x_next = psi.prox_step(&g_hat, &x, h)?;
        rec.round(t, &outputs, &g_hat, &x, &x_next, &settings.x0, gamma, None)?;
        x = x_next;
    }
    let anchor = settings.x0.clone();
    finish(rec, Algorithm::ProxEf21, x, anchor, f_anchor, None, None)
}

pub fn run(
    algorithm: Algorithm,
    oracle: &dyn SmoothOracle,
    settings: &RunSettings,
) -> Result<RunTrace> {
    match algorithm {
        Algorithm::EControlDa => run_econtrol_da(oracle, settings),
        Algorithm::ProxEf => run_prox_ef(oracle, settings),
        Algorithm::ProxEf21 => run_prox_ef21(oracle, settings),
    }
}
