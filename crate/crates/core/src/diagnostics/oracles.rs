//! Slow reference solvers used to cross-check the closed-form prox.

use crate::composite::CompositePart;
use crate::error::{Error, Result};
use crate::numkit::DenseVector;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Minimizes a unimodal function on `[lo, hi]` by golden-section search.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, iterations: usize) -> f64 {
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..iterations {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_PHI * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_PHI * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// `argmin <s, x> + weight psi(x) + gamma/2 ||x - anchor||^2` without using
/// the closed forms: per-coordinate golden-section search for the separable
/// parts, and bisection on the Lagrange multiplier of the ball constraint.
pub fn brute_force_prox(
    psi: &CompositePart,
    s: &DenseVector,
    weight: f64,
    gamma: f64,
    anchor: &DenseVector,
) -> Result<DenseVector> {
    if !(gamma > 0.0 && weight > 0.0) {
        return Err(Error::invalid(
            "brute-force prox needs gamma > 0 and weight > 0",
        ));
    }
    s.check_dim(anchor.len())?;
    match psi {
        CompositePart::Zero | CompositePart::L1 { .. } => {
            let lambda = match psi {
                CompositePart::L1 { lambda } => *lambda,
                _ => 0.0,
            };
            let values = s
                .iter()
                .zip(anchor.iter())
                .map(|(&sj, &aj)| {
                    let phi = |x: f64| {
                        sj * x + weight * lambda * x.abs() + 0.5 * gamma * (x - aj) * (x - aj)
                    };
                    let reach = (sj.abs() + weight * lambda) / gamma + 1.0;
                    golden_section(phi, aj - reach, aj + reach, 200)
                })
                .collect();
            Ok(DenseVector::from_vec(values))
        }
        CompositePart::Ball { radius, center } => {
            let center = center
                .clone()
                .unwrap_or_else(|| DenseVector::zeros(s.len()));
            // stationarity with multiplier nu: gamma (x - anchor) + s + nu (x - c) = 0
            let point = |nu: f64| -> DenseVector {
                let values = s
                    .iter()
                    .zip(anchor.iter().zip(center.iter()))
                    .map(|(&sj, (&aj, &cj))| (gamma * aj - sj + nu * cj) / (gamma + nu))
                    .collect();
                DenseVector::from_vec(values)
            };
            let outside = |nu: f64| point(nu).dist(&center).map(|d| d > *radius);
            if !outside(0.0)? {
                return Ok(point(0.0));
            }
            let mut hi = gamma;
            while outside(hi)? {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if outside(mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(point(hi))
        }
    }
}
