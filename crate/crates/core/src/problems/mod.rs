//! Smooth objectives `f = (1/n) sum_i f_i`, their client oracles, data
//! generation and client partitioning.

mod dataset;
mod logistic;
mod partition;
mod quadratic;
mod smoothness;
mod softmax;

pub use dataset::{gen_logistic_dataset, load_csv_dataset, write_csv_dataset, CsvOptions, Dataset};
pub use logistic::{binary_targets, LogisticClients, LogisticProblem};
pub use partition::{partition_heterogeneous, ClientPartition};
pub use quadratic::QuadraticClients;
pub use smoothness::{estimate_smoothness, SmoothnessEstimate};
pub use softmax::{
    gen_softmax, replicate_softmax_to_clients, split_softmax_to_clients, SoftmaxClients,
    SoftmaxProblem,
};

use crate::numkit::{DenseVector, RngStream};

/// Client-level access to a finite-sum objective.
///
/// `value` and `gradient` are the averages over clients in client order, so
/// they define the ground-truth objective `f = (1/n) sum_i f_i`.
pub trait SmoothOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn num_clients(&self) -> usize;

    fn client_value(&self, client: usize, x: &DenseVector) -> f64;

    fn client_gradient(&self, client: usize, x: &DenseVector) -> DenseVector;

    fn value(&self, x: &DenseVector) -> f64 {
        let n = self.num_clients();
        let total = (0..n).fold(0.0, |acc, i| acc + self.client_value(i, x));
        total / n as f64
    }

    fn gradient(&self, x: &DenseVector) -> DenseVector {
        let grads: Vec<DenseVector> = (0..self.num_clients())
            .map(|i| self.client_gradient(i, x))
            .collect();
        DenseVector::mean(&grads).expect("oracle returned inconsistent gradient sizes")
    }

    /// `client_gradient + eps` with `eps ~ N(0, sigma^2 / d * I)`, so that
    /// `E ||eps||^2 = sigma^2`. With `sigma == 0` the exact gradient is
    /// returned and no randomness is consumed.
    fn stochastic_client_gradient(
        &self,
        client: usize,
        x: &DenseVector,
        sigma: f64,
        rng: &mut RngStream,
    ) -> DenseVector {
        let mut g = self.client_gradient(client, x);
        if sigma > 0.0 {
            let std_dev = sigma / (self.dim() as f64).sqrt();
            for v in g.as_mut_slice() {
                *v += std_dev * rng.standard_normal();
            }
        }
        g
    }
}
