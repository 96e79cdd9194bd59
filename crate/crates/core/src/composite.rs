//! The composite part `psi` and its proximal solvers.

use crate::error::{Error, Result};
use crate::numkit::DenseVector;

#[derive(Clone, Debug, PartialEq)]
pub enum CompositePart {
    Zero,
    /// `lambda * ||x||_1`.
    L1 {
        lambda: f64,
    },
    /// Indicator of the Euclidean ball `||x - center|| <= radius`; a missing
    /// center means the origin.
    Ball {
        radius: f64,
        center: Option<DenseVector>,
    },
}

impl CompositePart {
    pub fn l1(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!(
                "l1 weight must be >= 0, got {lambda}"
            )));
        }
        Ok(CompositePart::L1 { lambda })
    }

    pub fn ball(radius: f64, center: Option<DenseVector>) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::invalid(format!(
                "ball radius must be > 0, got {radius}"
            )));
        }
        Ok(CompositePart::Ball { radius, center })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, CompositePart::Zero)
    }

    /// `psi(x)`, with `f64::INFINITY` outside the domain.
    pub fn value(&self, x: &DenseVector) -> f64 {
        match self {
            CompositePart::Zero => 0.0,
            CompositePart::L1 { lambda } => lambda * x.l1_norm(),
            CompositePart::Ball { radius, center } => {
                let dist = match center {
                    Some(c) => x.dist(c).unwrap_or(f64::INFINITY),
                    None => x.norm(),
                };
                if dist <= *radius {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `argmin_x <s, x> + weight * psi(x) + (gamma / 2) ||x - anchor||^2`.
    pub fn prox(
        &self,
        s: &DenseVector,
        weight: f64,
        gamma: f64,
        anchor: &DenseVector,
    ) -> Result<DenseVector> {
        if !(gamma > 0.0) {
            return Err(Error::invalid(format!(
                "prox requires gamma > 0, got {gamma}"
            )));
        }
        if !(weight > 0.0) {
            return Err(Error::invalid(format!(
                "prox requires weight > 0, got {weight}"
            )));
        }
        // unconstrained minimizer of the linear + quadratic part
        let mut point = DenseVector::axpy(-1.0 / gamma, s, anchor)?;
        match self {
            CompositePart::Zero => {}
            CompositePart::L1 { lambda } => {
                let level = weight * lambda / gamma;
                for v in point.as_mut_slice() {
                    *v = soft_threshold(*v, level);
                }
            }
            CompositePart::Ball { radius, center } => {
                let offset = match center {
                    Some(c) => point.sub(c)?,
                    None => point.clone(),
                };
                let norm = offset.norm();
                if norm > *radius {
                    let clipped = offset.scale(radius / norm);
                    point = match center {
                        Some(c) => clipped.add(c)?,
                        None => clipped,
                    };
                }
            }
        }
        Ok(point)
    }

    /// `argmin_x' h (<g, x'> + psi(x')) + ||x' - x||^2 / 2`, the classic
    /// proximal gradient step.
    pub fn prox_step(&self, g: &DenseVector, x: &DenseVector, h: f64) -> Result<DenseVector> {
        if !(h > 0.0) {
            return Err(Error::invalid(format!("prox step requires h > 0, got {h}")));
        }
        self.prox(g, 1.0, 1.0 / h, x)
    }
}

pub fn soft_threshold(v: f64, level: f64) -> f64 {
    if v > level {
        v - level
    } else if v < -level {
        v + level
    } else {
        0.0
    }
}
