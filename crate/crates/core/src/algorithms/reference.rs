use crate::composite::CompositePart;
use crate::error::{Error, Result};
use crate::numkit::DenseVector;
use crate::problems::SmoothOracle;

use super::runner::composite_value;

#[derive(Clone, Debug)]
pub struct ReferenceSolution {
    pub x: DenseVector,
    pub value: f64,
    pub iterations: usize,
    /// Norm of the final gradient mapping `L (x - prox_step(grad f(x), x, 1/L))`.
    pub residual: f64,
}

/// Iterations without a decrease beyond roundoff after which the solve stops.
const STALL_WINDOW: usize = 2000;

/// Accelerated proximal gradient with backtracking and function-value
/// restarts, run on exact gradients until the gradient mapping drops below
/// `tol`, the objective stalls at roundoff level or `max_iter` is reached.
pub fn reference_optimum(
    oracle: &dyn SmoothOracle,
    psi: &CompositePart,
    x0: &DenseVector,
    tol: f64,
    max_iter: usize,
) -> Result<ReferenceSolution> {
    x0.check_dim(oracle.dim())?;
    let mut lipschitz = 1.0;
    // start from a feasible point
    let mut x = psi.prox_step(&DenseVector::zeros(x0.len()), x0, 1.0)?;
    let mut y = x.clone();
    let mut momentum = 1.0_f64;
    let mut fx = composite_value(oracle, psi, &x);
    let mut residual = f64::INFINITY;
    let mut last_progress = 0;
    for iteration in 0..max_iter {
        if iteration - last_progress > STALL_WINDOW {
            return Ok(ReferenceSolution {
                x,
                value: fx,
                iterations: iteration,
                residual,
            });
        }
        let fy = oracle.value(&y);
        let gy = oracle.gradient(&y);
        let z = loop {
            let z = psi.prox_step(&gy, &y, 1.0 / lipschitz)?;
            let diff = z.sub(&y)?;
            let model = fy + gy.dot(&diff)? + 0.5 * lipschitz * diff.norm_sq();
            if oracle.value(&z) <= model + 1e-12 * fy.abs().max(1.0) {
                break z;
            }
            lipschitz *= 2.0;
            if !lipschitz.is_finite() {
                return Err(Error::NonFinite(
                    "reference solver smoothness estimate".into(),
                ));
            }
        };
        let fz = composite_value(oracle, psi, &z);
        if fz > fx {
            // restart momentum from the best point
            y = x.clone();
            momentum = 1.0;
            continue;
        }
        if fx - fz > 4.0 * f64::EPSILON * fx.abs().max(1.0) {
            last_progress = iteration;
        }
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next_momentum;
        let step = z.sub(&x)?;
        y = DenseVector::axpy(beta, &step, &z)?;
        momentum = next_momentum;
        x = z;
        fx = fz;
        if iteration % 10 == 0 {
            let gx = oracle.gradient(&x);
            let mapped = psi.prox_step(&gx, &x, 1.0 / lipschitz)?;
            residual = lipschitz * mapped.dist(&x)?;
            if residual <= tol {
                return Ok(ReferenceSolution {
                    x,
                    value: fx,
                    iterations: iteration + 1,
                    residual,
                });
            }
        }
        lipschitz *= 0.9;
    }
    Ok(ReferenceSolution {
        x,
        value: fx,
        iterations: max_iter,
        residual,
    })
}
