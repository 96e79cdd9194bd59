use crate::numkit::DenseVector;

use super::SmoothOracle;

/// `f_i(x) = (c_i / 2) ||x - center_i||^2`. Mostly useful for tests and
/// sanity configurations since every constant is known in closed form.
#[derive(Clone, Debug)]
pub struct QuadraticClients {
    centers: Vec<DenseVector>,
    curvatures: Vec<f64>,
}

impl QuadraticClients {
    pub fn new(centers: Vec<DenseVector>, curvatures: Vec<f64>) -> Self {
        assert!(!centers.is_empty(), "at least one client is required");
        assert_eq!(centers.len(), curvatures.len());
        let d = centers[0].len();
        assert!(centers.iter().all(|c| c.len() == d));
        QuadraticClients {
            centers,
            curvatures,
        }
    }

    pub fn isotropic(centers: Vec<DenseVector>, curvature: f64) -> Self {
        let n = centers.len();
        Self::new(centers, vec![curvature; n])
    }
}

impl SmoothOracle for QuadraticClients {
    fn dim(&self) -> usize {
        self.centers[0].len()
    }

    fn num_clients(&self) -> usize {
        self.centers.len()
    }

    fn client_value(&self, client: usize, x: &DenseVector) -> f64 {
        0.5 * self.curvatures[client] * x.dist_sq(&self.centers[client]).expect("dimension")
    }

    fn client_gradient(&self, client: usize, x: &DenseVector) -> DenseVector {
        x.sub(&self.centers[client])
            .expect("dimension")
            .scale(self.curvatures[client])
    }
}
