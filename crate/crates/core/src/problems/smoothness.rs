use crate::error::{Error, Result};
use crate::numkit::{DenseVector, RngStream};

use super::SmoothOracle;

/// Empirical gradient Lipschitz ratios. Both numbers are lower bounds on the
/// true constants `L` (global) and `ell` (mean-square over clients).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothnessEstimate {
    pub l_global: f64,
    pub l_avg: f64,
}

impl SmoothnessEstimate {
    pub fn scaled(self, factor: f64) -> Self {
        SmoothnessEstimate {
            l_global: self.l_global * factor,
            l_avg: self.l_avg * factor,
        }
    }
}

/// Draws `probes` standard-normal points around `center` (scaled by `radius`)
/// and takes the worst ratio over consecutive pairs.
pub fn estimate_smoothness(
    oracle: &dyn SmoothOracle,
    center: &DenseVector,
    radius: f64,
    probes: usize,
    rng: &mut RngStream,
) -> Result<SmoothnessEstimate> {
    if probes < 2 {
        return Err(Error::invalid(
            "smoothness estimation needs at least 2 probes",
        ));
    }
    center.check_dim(oracle.dim())?;
    let n = oracle.num_clients();
    let points: Vec<DenseVector> = (0..probes)
        .map(|_| {
            let step = rng.normal_vector(oracle.dim(), radius / (oracle.dim() as f64).sqrt());
            center.add(&step)
        })
        .collect::<Result<_>>()?;
    let client_grads: Vec<Vec<DenseVector>> = points
        .iter()
        .map(|x| (0..n).map(|i| oracle.client_gradient(i, x)).collect())
        .collect();
    let mut l_global = 0.0_f64;
    let mut l_avg = 0.0_f64;
    for p in 0..probes - 1 {
        let gap = points[p].dist(&points[p + 1])?;
        if gap == 0.0 {
            continue;
        }
        let (a, b) = (&client_grads[p], &client_grads[p + 1]);
        let diffs: Vec<DenseVector> = a
            .iter()
            .zip(b)
            .map(|(u, v)| u.sub(v))
            .collect::<Result<_>>()?;
        let global = DenseVector::mean(&diffs)?.norm();
        let mean_sq = diffs.iter().fold(0.0, |acc, d| acc + d.norm_sq()) / n as f64;
        l_global = l_global.max(global / gap);
        l_avg = l_avg.max(mean_sq.sqrt() / gap);
    }
    Ok(SmoothnessEstimate { l_global, l_avg })
}
