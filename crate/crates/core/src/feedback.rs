//! Client-side error-feedback state machines.
//!
//! Each state owns the memory one client keeps between rounds and produces
//! the message it sends. The compression residual `g_hat - g` is evaluated as
//! `Delta - (g - g_hat_prev)`, which is algebraically identical but cancels
//! exactly when the compressor transmits a coordinate losslessly.

use crate::compressors::Compressor;
use crate::error::{Error, Result};
use crate::numkit::{DenseVector, RngStream};

/// `eta = delta / (3 sqrt(1 - delta) (1 + sqrt(1 - delta)))`, and `1` at
/// `delta = 1` where the error vanishes for any `eta`.
pub fn eta_default(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!(
            "contraction delta must lie in (0, 1], got {delta}"
        )));
    }
    if delta == 1.0 {
        return Ok(1.0);
    }
    let root = (1.0 - delta).sqrt();
    Ok(delta / (3.0 * root * (1.0 + root)))
}

/// Closed-form factors `(c_e, c_g)` of the per-trajectory bounds
/// `sum_{t=1..T} ||e_t||^2 <= c_e sum_{t=0..T-2} ||g_{t+1} - g_t||^2` and
/// `sum_{t=0..T-1} ||g_hat_t - g_t||^2 <= c_g sum ||g_{t+1} - g_t||^2`.
pub fn econtrol_bound_factors(delta: f64) -> Result<(f64, f64)> {
    eta_default(delta)?;
    let q = 1.0 - delta;
    let root = q.sqrt();
    let error_factor = 81.0 * q * q * (1.0 + root).powi(4) / (2.0 * delta.powi(4));
    let message_factor = 36.0 * q * (1.0 + root).powi(2) / (delta * delta);
    Ok((error_factor, message_factor))
}

/// Per-round scalars a client logs in debug mode.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClientRoundLog {
    /// `||e_{t+1}||^2` after the step.
    pub error_sq: f64,
    /// `||g_hat_t - g_t||^2`.
    pub residual_sq: f64,
    /// `||g_t - g_{t-1}||^2`, zero at the first round.
    pub grad_diff_sq: f64,
}

fn residual(delta_msg: &DenseVector, g: &DenseVector, g_hat_prev: &DenseVector) -> DenseVector {
    let values = delta_msg
        .iter()
        .zip(g.iter().zip(g_hat_prev.iter()))
        .map(|(d, (gi, hi))| d - (gi - hi))
        .collect();
    DenseVector::from_vec(values)
}

#[derive(Clone, Debug)]
pub struct EControlClientState {
    g_hat_prev: DenseVector,
    e: DenseVector,
    eta: f64,
    g_bar_running: DenseVector,
    g_bar_frozen: DenseVector,
    shadow: Option<DenseVector>,
    last_residual: DenseVector,
}

impl EControlClientState {
    /// Starts from `e = 0` and `g_hat_{-1} = g_init`, the uncompressed first
    /// sample at `x_0`.
    pub fn new(g_init: DenseVector, eta: f64, debug: bool) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::invalid(format!("eta must lie in (0, 1], got {eta}")));
        }
        let d = g_init.len();
        Ok(EControlClientState {
            g_hat_prev: g_init,
            e: DenseVector::zeros(d),
            eta,
            g_bar_running: DenseVector::zeros(d),
            g_bar_frozen: DenseVector::zeros(d),
            shadow: debug.then(|| DenseVector::zeros(d)),
            last_residual: DenseVector::zeros(d),
        })
    }

    /// Sets the error directly. Only meaningful for replaying hand traces.
    pub fn with_error(mut self, e: DenseVector) -> Result<Self> {
        e.check_dim(self.e.len())?;
        self.e = e;
        Ok(self)
    }

    pub fn g_hat(&self) -> &DenseVector {
        &self.g_hat_prev
    }

    pub fn error(&self) -> &DenseVector {
        &self.e
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn g_bar_running(&self) -> &DenseVector {
        &self.g_bar_running
    }

    pub fn g_bar_frozen(&self) -> &DenseVector {
        &self.g_bar_frozen
    }

    /// `sum_{k<t} (g_hat_k - g_k)` accumulated separately in debug mode.
    pub fn shadow_error(&self) -> Option<&DenseVector> {
        self.shadow.as_ref()
    }

    /// `g_hat_t - g_t` from the most recent step.
    pub fn last_residual(&self) -> &DenseVector {
        &self.last_residual
    }

    /// One EControl round; returns the transmitted `Delta_t`.
    pub fn econtrol_step(
        &mut self,
        g: &DenseVector,
        compressor: &Compressor,
        rng: &mut RngStream,
    ) -> Result<DenseVector> {
        g.check_dim(self.e.len())?;
        let eta = self.eta;
        let target: Vec<f64> = g
            .iter()
            .zip(self.g_hat_prev.iter().zip(self.e.iter()))
            .map(|(gi, (hi, ei))| (gi - hi) - eta * ei)
            .collect();
        let message = compressor.compress(&DenseVector::from_vec(target), rng)?;
        let r = residual(&message, g, &self.g_hat_prev);
        self.g_hat_prev.add_assign(&message)?;
        self.e.add_assign(&r)?;
        if let Some(shadow) = &mut self.shadow {
            shadow.add_assign(&r)?;
        }
        self.last_residual = r;
        Ok(message)
    }

    /// Adds `a_t g_t` to the running cumulative gradient and snapshots it
    /// when the server broadcast `tau_t = 1`.
    pub fn reservoir_client_update(
        &mut self,
        g: &DenseVector,
        weight: f64,
        tau: bool,
    ) -> Result<()> {
        self.g_bar_running.add_scaled(weight, g)?;
        if tau {
            self.g_bar_frozen = self.g_bar_running.clone();
        }
        Ok(())
    }
}

/// Classic error feedback: `e_{t+1} = e_t + g_hat_t - g_t`.
#[derive(Clone, Debug)]
pub struct EFClientState {
    e: DenseVector,
    shadow: Option<DenseVector>,
    last_residual: DenseVector,
}

impl EFClientState {
    pub fn new(dim: usize, debug: bool) -> Self {
        EFClientState {
            e: DenseVector::zeros(dim),
            shadow: debug.then(|| DenseVector::zeros(dim)),
            last_residual: DenseVector::zeros(dim),
        }
    }

    pub fn error(&self) -> &DenseVector {
        &self.e
    }

    pub fn shadow_error(&self) -> Option<&DenseVector> {
        self.shadow.as_ref()
    }

    pub fn last_residual(&self) -> &DenseVector {
        &self.last_residual
    }

    /// One EF round; returns the transmitted `g_hat_t = C(g_t - e_t)`.
    pub fn ef_step(
        &mut self,
        g: &DenseVector,
        compressor: &Compressor,
        rng: &mut RngStream,
    ) -> Result<DenseVector> {
        let target = g.sub(&self.e)?;
        let message = compressor.compress(&target, rng)?;
        let r = message.sub(g)?;
        self.e.add_assign(&r)?;
        if let Some(shadow) = &mut self.shadow {
            shadow.add_assign(&r)?;
        }
        self.last_residual = r;
        Ok(message)
    }
}

/// Gradient-difference compression: `g_hat_t = g_hat_{t-1} + C(g_t - g_hat_{t-1})`.
#[derive(Clone, Debug)]
pub struct EF21ClientState {
    g_hat_prev: DenseVector,
    last_residual: DenseVector,
}

impl EF21ClientState {
    pub fn new(g_init: DenseVector) -> Self {
        let d = g_init.len();
        EF21ClientState {
            g_hat_prev: g_init,
            last_residual: DenseVector::zeros(d),
        }
    }

    pub fn g_hat(&self) -> &DenseVector {
        &self.g_hat_prev
    }

    pub fn last_residual(&self) -> &DenseVector {
        &self.last_residual
    }

    /// One EF21 round; returns the transmitted `Delta_t`.
    pub fn ef21_step(
        &mut self,
        g: &DenseVector,
        compressor: &Compressor,
        rng: &mut RngStream,
    ) -> Result<DenseVector> {
        let target = g.sub(&self.g_hat_prev)?;
        let message = compressor.compress(&target, rng)?;
        self.last_residual = residual(&message, g, &self.g_hat_prev);
        self.g_hat_prev.add_assign(&message)?;
        Ok(message)
    }
}
