use crate::error::{Error, Result};
use crate::numkit::{dot_slices, DenseVector};

use super::dataset::Dataset;
use super::partition::ClientPartition;
use super::SmoothOracle;

/// Binary logistic loss `log(1 + exp(-s <x, feat>))` with targets `s = +-1`.
#[derive(Clone, Debug)]
pub struct LogisticProblem {
    dim: usize,
    features: Vec<f64>,
    signs: Vec<f64>,
}

/// Maps labels to `+-1`. Samples whose label equals `positive_class` get `+1`.
/// Without an explicit class, `{0, 1}` data uses class 1 and anything else
/// is treated one-vs-rest against class 0.
pub fn binary_targets(labels: &[u32], positive_class: Option<u32>) -> Vec<f64> {
    let positive =
        positive_class.unwrap_or_else(|| if labels.iter().all(|&l| l <= 1) { 1 } else { 0 });
    labels
        .iter()
        .map(|&l| if l == positive { 1.0 } else { -1.0 })
        .collect()
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogisticProblem {
    pub fn new(data: &Dataset, positive_class: Option<u32>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid(
                "logistic regression needs at least one sample",
            ));
        }
        let dim = data.dim();
        if dim == 0 {
            return Err(Error::invalid(
                "logistic regression needs at least one feature",
            ));
        }
        let mut features = Vec::with_capacity(dim * data.len());
        for row in &data.features {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("logistic features".into()));
            }
            features.extend_from_slice(row);
        }
        Ok(LogisticProblem {
            dim,
            features,
            signs: binary_targets(&data.labels, positive_class),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_samples(&self) -> usize {
        self.signs.len()
    }

    /// `max_i ||a_i||^2 / 4`, an upper bound on the gradient Lipschitz
    /// constant of the loss over any subset of samples.
    pub fn smoothness_bound(&self) -> f64 {
        (0..self.num_samples())
            .map(|i| dot_slices(self.row(i), self.row(i)))
            .fold(0.0, f64::max)
            / 4.0
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    fn margin(&self, i: usize, x: &DenseVector) -> f64 {
        self.signs[i] * dot_slices(self.row(i), x.as_slice())
    }

    pub fn value_on(&self, x: &DenseVector, samples: &[usize]) -> f64 {
        let total = samples
            .iter()
            .fold(0.0, |acc, &i| acc + softplus(-self.margin(i, x)));
        total / samples.len() as f64
    }

    pub fn gradient_on(&self, x: &DenseVector, samples: &[usize]) -> DenseVector {
        let mut grad = vec![0.0; self.dim];
        for &i in samples {
            let coef = -self.signs[i] * sigmoid(-self.margin(i, x));
            for (g, a) in grad.iter_mut().zip(self.row(i)) {
                *g += coef * a;
            }
        }
        let inv = 1.0 / samples.len() as f64;
        DenseVector::from_vec(grad.into_iter().map(|g| g * inv).collect())
    }
}

/// Logistic loss with each client holding the samples of its partition set.
#[derive(Clone, Debug)]
pub struct LogisticClients {
    problem: LogisticProblem,
    partition: ClientPartition,
}

impl LogisticClients {
    pub fn new(problem: LogisticProblem, partition: ClientPartition) -> Result<Self> {
        let covered: usize = partition.assignments().iter().map(Vec::len).sum();
        if covered != problem.num_samples() {
            return Err(Error::DimensionMismatch {
                expected: problem.num_samples(),
                found: covered,
            });
        }
        Ok(LogisticClients { problem, partition })
    }

    pub fn problem(&self) -> &LogisticProblem {
        &self.problem
    }

    pub fn partition(&self) -> &ClientPartition {
        &self.partition
    }
}

impl SmoothOracle for LogisticClients {
    fn dim(&self) -> usize {
        self.problem.dim
    }

    fn num_clients(&self) -> usize {
        self.partition.num_clients()
    }

    fn client_value(&self, client: usize, x: &DenseVector) -> f64 {
        self.problem.value_on(x, self.partition.client(client))
    }

    fn client_gradient(&self, client: usize, x: &DenseVector) -> DenseVector {
        self.problem.gradient_on(x, self.partition.client(client))
    }
}
