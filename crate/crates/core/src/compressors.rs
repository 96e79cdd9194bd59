//! Contractive compression operators.
//!
//! A compressor `C` is contractive with parameter `delta` in `(0, 1]` when
//! `||C(s) - s||^2 <= (1 - delta) ||s||^2`. The operators shipped here satisfy
//! this for every call, not only in expectation.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::numkit::{derive_stream, DenseVector, RngStream};

#[derive(Clone, Debug, PartialEq)]
pub enum Compressor {
    /// Keep the `k` entries of largest magnitude; ties go to the lower index.
    TopK {
        k: usize,
        dim: usize,
    },
    Identity {
        dim: usize,
    },
}

impl Compressor {
    pub fn top_k(k: usize, dim: usize) -> Result<Self> {
        if k == 0 || k > dim {
            return Err(Error::invalid(format!(
                "top-k requires 1 <= k <= d, got k={k}, d={dim}"
            )));
        }
        Ok(Compressor::TopK { k, dim })
    }

    pub fn identity(dim: usize) -> Self {
        Compressor::Identity { dim }
    }

    /// Top-K with `k = max(1, round(k_frac * d))`, clamped to `d`.
    pub fn top_k_fraction(k_frac: f64, dim: usize) -> Result<Self> {
        if !(k_frac > 0.0 && k_frac <= 1.0) {
            return Err(Error::invalid(format!(
                "k_frac must lie in (0, 1], got {k_frac}"
            )));
        }
        let k = ((k_frac * dim as f64).round() as usize).clamp(1, dim.max(1));
        Self::top_k(k, dim)
    }

    pub fn dim(&self) -> usize {
        match self {
            Compressor::TopK { dim, .. } | Compressor::Identity { dim } => *dim,
        }
    }

    /// Advertised contraction parameter: `k/d` for Top-K, `1` for identity.
    pub fn contraction_delta(&self) -> f64 {
        match self {
            Compressor::TopK { k, dim } => *k as f64 / *dim as f64,
            Compressor::Identity { .. } => 1.0,
        }
    }

    /// Compresses `s`. The stream is unused by the deterministic operators.
    pub fn compress(&self, s: &DenseVector, _rng: &mut RngStream) -> Result<DenseVector> {
        s.check_dim(self.dim())?;
        match self {
            Compressor::Identity { .. } => Ok(s.clone()),
            Compressor::TopK { k, dim } => {
                if k == dim {
                    return Ok(s.clone());
                }
                let values = s.as_slice();
                let mut order: Vec<usize> = (0..*dim).collect();
                let by_magnitude = |a: &usize, b: &usize| -> Ordering {
                    values[*b]
                        .abs()
                        .total_cmp(&values[*a].abs())
                        .then_with(|| a.cmp(b))
                };
                order.select_nth_unstable_by(*k - 1, by_magnitude);
                let mut out = DenseVector::zeros(*dim);
                for &j in &order[..*k] {
                    out[j] = values[j];
                }
                Ok(out)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionReport {
    pub trials: usize,
    pub max_ratio: f64,
    pub bound: f64,
    /// Seed of the stream that produced the worst vector.
    pub worst_seed: u64,
}

/// Draws `trials` standard-normal vectors and measures the worst observed
/// `||C(s) - s||^2 / ||s||^2`. Each vector is generated from its own seed
/// (drawn from `rng`) so a violation can be replayed.
pub fn verify_contraction(
    compressor: &Compressor,
    trials: usize,
    rng: &mut RngStream,
) -> Result<ContractionReport> {
    if trials == 0 {
        return Err(Error::invalid(
            "verify_contraction needs at least one trial",
        ));
    }
    let dim = compressor.dim();
    let bound = 1.0 - compressor.contraction_delta();
    let mut max_ratio = 0.0_f64;
    let mut worst_seed = 0;
    for _ in 0..trials {
        let seed = rng.next_seed();
        let mut vector_rng = derive_stream(seed, 0);
        let s = vector_rng.normal_vector(dim, 1.0);
        let total = s.norm_sq();
        if total == 0.0 {
            continue;
        }
        let residual = compressor.compress(&s, &mut vector_rng)?.dist_sq(&s)?;
        let ratio = residual / total;
        if ratio > bound + 1e-12 {
            return Err(Error::ContractionViolated { seed, ratio, bound });
        }
        if ratio > max_ratio {
            max_ratio = ratio;
            worst_seed = seed;
        }
    }
    Ok(ContractionReport {
        trials,
        max_ratio,
        bound,
        worst_seed,
    })
}

impl RngStream {
    pub(crate) fn next_seed(&mut self) -> u64 {
        rand::RngCore::next_u64(self)
    }
}
