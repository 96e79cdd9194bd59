use crate::composite::CompositePart;
use crate::error::{Error, Result};
use crate::numkit::{DenseVector, RngStream};
use crate::problems::SmoothOracle;

/// Dual-averaging server: `x_{t+1} = argmin <S, x> + A psi(x) + gamma_t/2 ||x - x_0||^2`
/// with `S = sum a_s g_hat_s` and `A = sum a_s`.
#[derive(Clone, Debug)]
pub struct ServerState {
    anchor: DenseVector,
    x: DenseVector,
    linear: DenseVector,
    weight_sum: f64,
    last_gamma: Option<f64>,
    rounds: usize,
}

impl ServerState {
    pub fn new(anchor: DenseVector) -> Self {
        let d = anchor.len();
        ServerState {
            x: anchor.clone(),
            anchor,
            linear: DenseVector::zeros(d),
            weight_sum: 0.0,
            last_gamma: None,
            rounds: 0,
        }
    }

    pub fn anchor(&self) -> &DenseVector {
        &self.anchor
    }

    pub fn x(&self) -> &DenseVector {
        &self.x
    }

    pub fn linear_term(&self) -> &DenseVector {
        &self.linear
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight_sum
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// Adds `a_t g_hat_t` to the linear term and recomputes the iterate.
    /// With `monotone` set, a stepsize smaller than the previous one is
    /// rejected.
    pub fn da_update(
        &mut self,
        g_hat: &DenseVector,
        weight: f64,
        gamma: f64,
        psi: &CompositePart,
        monotone: bool,
    ) -> Result<&DenseVector> {
        if !(weight > 0.0) {
            return Err(Error::invalid(format!(
                "round weight must be > 0, got {weight}"
            )));
        }
        if let (true, Some(previous)) = (monotone, self.last_gamma) {
            if gamma < previous {
                return Err(Error::StepsizeDecreased {
                    round: self.rounds,
                    previous,
                    next: gamma,
                });
            }
        }
        self.linear.add_scaled(weight, g_hat)?;
        self.weight_sum += weight;
        self.x = psi.prox(&self.linear, self.weight_sum, gamma, &self.anchor)?;
        self.last_gamma = Some(gamma);
        self.rounds += 1;
        Ok(&self.x)
    }
}

/// Weighted reservoir over round indices: round `t` replaces the stored
/// index with probability `a_t / A_{t+1}`, so index `i` survives with
/// probability `a_i / A_T`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Reservoir {
    weight_sum: f64,
    frozen: Option<FrozenSample>,
    offers: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrozenSample {
    pub index: usize,
    pub weight_sum: f64,
    pub gamma: f64,
}

impl Reservoir {
    pub fn new() -> Self {
        Self::default()
    }

    /// Draws `tau_t`; returns whether this round is now the retained one.
    pub fn offer(&mut self, weight: f64, gamma: f64, rng: &mut RngStream) -> Result<bool> {
        if !(weight > 0.0) {
            return Err(Error::invalid(format!(
                "round weight must be > 0, got {weight}"
            )));
        }
        self.weight_sum += weight;
        let tau = rng.bernoulli(weight / self.weight_sum);
        if tau {
            self.frozen = Some(FrozenSample {
                index: self.offers,
                weight_sum: self.weight_sum,
                gamma,
            });
        }
        self.offers += 1;
        Ok(tau)
    }

    pub fn frozen(&self) -> Option<FrozenSample> {
        self.frozen
    }
}

/// `x_bar_T = prox(psi, g_bar, A_frozen, gamma_frozen, x_0)`.
pub fn final_output(
    psi: &CompositePart,
    g_bar: &DenseVector,
    frozen: Option<FrozenSample>,
    anchor: &DenseVector,
) -> Result<DenseVector> {
    let sample = frozen.ok_or(Error::NoFrozenSample)?;
    psi.prox(g_bar, sample.weight_sum, sample.gamma, anchor)
}

/// One proximal stochastic gradient step from `x_0` with
/// `gamma_0 = max(2L, sqrt(2) sigma_g / R)`. Each client draws one sample
/// from its stream; `sigma_g = sigma / sqrt(n)` is the noise level of the
/// averaged gradient.
pub fn initial_gradient_step(
    psi: &CompositePart,
    x0: &DenseVector,
    oracle: &dyn SmoothOracle,
    smoothness: f64,
    sigma: f64,
    radius: f64,
    rngs: &mut [RngStream],
) -> Result<DenseVector> {
    if !(smoothness > 0.0 && radius > 0.0) {
        return Err(Error::invalid("initial step needs L > 0 and R > 0"));
    }
    let n = oracle.num_clients();
    if rngs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rngs.len(),
        });
    }
    let grads: Vec<DenseVector> = rngs
        .iter_mut()
        .enumerate()
        .map(|(i, rng)| oracle.stochastic_client_gradient(i, x0, sigma, rng))
        .collect();
    let g0 = DenseVector::mean(&grads)?;
    let sigma_g = sigma / (n as f64).sqrt();
    let gamma0 = (2.0 * smoothness).max(2f64.sqrt() * sigma_g / radius);
    psi.prox(&g0, 1.0, gamma0, x0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::derive_stream;
    use crate::problems::QuadraticClients;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::from_vec(x.to_vec())
    }

    #[test]
    fn zero_psi_closed_form() {
        let mut s = ServerState::new(v(&[1.0, 1.0]));
        s.da_update(&v(&[2.0, 0.0]), 1.0, 4.0, &CompositePart::Zero, false)
            .unwrap();
        s.da_update(&v(&[2.0, 4.0]), 1.0, 4.0, &CompositePart::Zero, false)
            .unwrap();
        assert_eq!(s.x(), &v(&[0.0, 0.0]));
        assert_eq!(s.weight_sum(), 2.0);
    }

    #[test]
    fn l1_single_round() {
        let mut s = ServerState::new(v(&[0.0, 0.0]));
        let psi = CompositePart::l1(0.1).unwrap();
        let x = s
            .da_update(&v(&[1.0, -0.05]), 1.0, 1.0, &psi, false)
            .unwrap();
        assert!(x.dist(&v(&[-0.9, 0.0])).unwrap() < 1e-15);
    }

    #[test]
    fn zero_messages_keep_anchor() {
        let mut s = ServerState::new(v(&[0.3, -0.2]));
        for _ in 0..5 {
            s.da_update(
                &DenseVector::zeros(2),
                1.0,
                2.0,
                &CompositePart::Zero,
                false,
            )
            .unwrap();
        }
        assert_eq!(s.x(), &v(&[0.3, -0.2]));
    }

    #[test]
    fn decreasing_stepsize_rejected_when_monotone() {
        let mut s = ServerState::new(v(&[0.0]));
        s.da_update(&v(&[1.0]), 1.0, 2.0, &CompositePart::Zero, true)
            .unwrap();
        assert!(matches!(
            s.da_update(&v(&[1.0]), 1.0, 1.0, &CompositePart::Zero, true),
            Err(Error::StepsizeDecreased { .. })
        ));
    }

    #[test]
    fn reservoir_first_round_always_kept() {
        let mut r = Reservoir::new();
        let mut rng = derive_stream(1, 1);
        assert!(r.offer(1.0, 5.0, &mut rng).unwrap());
        assert_eq!(
            r.frozen(),
            Some(FrozenSample {
                index: 0,
                weight_sum: 1.0,
                gamma: 5.0
            })
        );
    }

    #[test]
    fn reservoir_uniform_over_three_rounds() {
        let mut rng = derive_stream(2, 2);
        let runs = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..runs {
            let mut r = Reservoir::new();
            for _ in 0..3 {
                r.offer(1.0, 1.0, &mut rng).unwrap();
            }
            counts[r.frozen().unwrap().index] += 1;
        }
        for c in counts {
            assert!((c as f64 / runs as f64 - 1.0 / 3.0).abs() <= 0.01);
        }
    }

    #[test]
    fn final_output_needs_sample() {
        let x0 = v(&[0.0]);
        assert!(matches!(
            final_output(&CompositePart::Zero, &x0, None, &x0),
            Err(Error::NoFrozenSample)
        ));
        let frozen = Some(FrozenSample {
            index: 2,
            weight_sum: 3.0,
            gamma: 4.0,
        });
        assert_eq!(
            final_output(&CompositePart::Zero, &v(&[2.0]), frozen, &x0).unwrap(),
            v(&[-0.5])
        );
    }

    #[test]
    fn initial_step_halves_quadratic() {
        let q = QuadraticClients::isotropic(vec![DenseVector::zeros(2)], 1.0);
        let mut rngs = vec![derive_stream(0, 0)];
        let x = initial_gradient_step(
            &CompositePart::Zero,
            &v(&[4.0, 0.0]),
            &q,
            1.0,
            0.0,
            1.0,
            &mut rngs,
        )
        .unwrap();
        assert_eq!(x, v(&[2.0, 0.0]));
    }
}
