use crate::error::{Error, Result};

/// Inverse-stepsize grid used for EControl-DA sweeps.
pub const DA_INV_GAMMA_GRID: [f64; 7] = [0.1, 0.05, 0.01, 0.005, 0.001, 0.0005, 0.0001];

/// Stepsize grid used for the proximal baselines.
pub const BASELINE_GRID: [f64; 4] = [0.1, 0.01, 0.001, 0.0001];

/// Problem constants that parameterize the theoretical stepsizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepsizeParams {
    /// Mean-square smoothness `ell`.
    pub ell: f64,
    pub delta: f64,
    pub sigma: f64,
    pub clients: usize,
    /// Distance from the anchor to a minimizer.
    pub r0: f64,
    pub rounds: usize,
}

impl StepsizeParams {
    fn validate(&self, needs_horizon: bool) -> Result<()> {
        if !(self.ell > 0.0 && self.r0 > 0.0 && self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::invalid(format!(
                "stepsize presets need ell > 0, r0 > 0, delta in (0, 1]; got ell={}, r0={}, delta={}",
                self.ell, self.r0, self.delta
            )));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if self.sigma > 0.0 && (self.clients == 0 || (needs_horizon && self.rounds == 0)) {
            return Err(Error::invalid(
                "stochastic stepsize presets need n >= 1 (and T >= 1 for constant presets)",
            ));
        }
        Ok(())
    }
}

/// Constant stepsize for the virtual-iterate guarantee.
pub fn gamma_fixed(p: &StepsizeParams) -> Result<f64> {
    p.validate(true)?;
    let t = p.rounds as f64;
    let deterministic = 24.0 * 2f64.sqrt() * p.ell / p.delta;
    if p.sigma == 0.0 {
        return Ok(deterministic);
    }
    let noise = (t * p.sigma * p.sigma / (p.clients as f64 * p.r0 * p.r0)).sqrt();
    let mixed = 17.0 * t.cbrt() * p.ell.cbrt() * p.sigma.powf(2.0 / 3.0)
        / (p.r0.powf(2.0 / 3.0) * p.delta.powf(4.0 / 3.0));
    Ok(deterministic.max(noise).max(mixed))
}

/// Nondecreasing schedule for an unknown horizon, evaluated at round `t`.
pub fn gamma_variable(t: usize, p: &StepsizeParams) -> Result<f64> {
    p.validate(false)?;
    let deterministic = 136.0 * p.ell / p.delta;
    if p.sigma == 0.0 || t == 0 {
        return Ok(deterministic);
    }
    let t = t as f64;
    let noise = (2.0 * t * p.sigma * p.sigma / (p.clients as f64 * p.r0 * p.r0)).sqrt();
    let mixed = 646.0 * p.ell.cbrt() * p.sigma.powf(2.0 / 3.0) * t.cbrt()
        / (p.r0.powf(2.0 / 3.0) * p.delta.powf(4.0 / 3.0));
    Ok(deterministic + noise + mixed)
}

/// Constant stepsize for the guarantee on the real iterates; `f0` is the
/// initial gap `F(x_0) - F*`.
pub fn gamma_real(p: &StepsizeParams, f0: f64) -> Result<f64> {
    p.validate(true)?;
    if !(f0 >= 0.0) {
        return Err(Error::invalid(format!(
            "initial gap must be >= 0, got {f0}"
        )));
    }
    let deterministic = 24.0 * 2f64.sqrt() * p.ell / p.delta;
    let gap =
        32.0 * p.ell.powf(2.0 / 3.0) * f0.cbrt() / (p.delta.powf(4.0 / 3.0) * p.r0.powf(2.0 / 3.0));
    let noise = 135.0 * p.sigma * (p.rounds as f64).sqrt() / (p.delta * p.delta * p.r0);
    Ok(deterministic.max(gap).max(noise))
}

/// The `gamma_t` sequence a dual-averaging run uses.
#[derive(Clone, Debug, PartialEq)]
pub enum GammaSchedule {
    Constant(f64),
    Variable(StepsizeParams),
}

impl GammaSchedule {
    pub fn gamma(&self, t: usize) -> Result<f64> {
        let g = match self {
            GammaSchedule::Constant(g) => *g,
            GammaSchedule::Variable(p) => gamma_variable(t, p)?,
        };
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::invalid(format!(
                "stepsize parameter must be positive and finite, got {g}"
            )));
        }
        Ok(g)
    }

    pub fn is_variable(&self) -> bool {
        matches!(self, GammaSchedule::Variable(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(
        ell: f64,
        delta: f64,
        sigma: f64,
        clients: usize,
        r0: f64,
        rounds: usize,
    ) -> StepsizeParams {
        StepsizeParams {
            ell,
            delta,
            sigma,
            clients,
            r0,
            rounds,
        }
    }

    #[test]
    fn fixed_examples() {
        let det = gamma_fixed(&params(1.0, 0.5, 0.0, 1, 1.0, 10)).unwrap();
        assert!((det - 67.882).abs() < 1e-3);
        let g = gamma_fixed(&params(1.0, 1.0, 1.0, 1, 1.0, 100)).unwrap();
        // max{33.94, 10, 17 * 100^(1/3)}
        assert!((g - 17.0 * 100f64.cbrt()).abs() < 1e-12);
        assert!((g - 78.91).abs() < 5e-3);
    }

    #[test]
    fn variable_examples() {
        let p = params(1.0, 1.0, 1.0, 2, 1.0, 0);
        assert_eq!(gamma_variable(0, &p).unwrap(), 136.0);
        let g = gamma_variable(8, &p).unwrap();
        assert!((g - (136.0 + 8f64.sqrt() + 646.0 * 2.0)).abs() < 1e-9);
        assert!((g - 1430.83).abs() < 5e-3);
        let det = params(2.0, 0.5, 0.0, 2, 1.0, 0);
        for t in 0..50 {
            assert_eq!(gamma_variable(t, &det).unwrap(), 544.0);
        }
        let mut prev = 0.0;
        for t in 0..500 {
            let g = gamma_variable(t, &params(1.0, 0.1, 5.0, 4, 2.0, 0)).unwrap();
            assert!(g >= prev);
            prev = g;
        }
    }

    #[test]
    fn real_examples() {
        assert_eq!(
            gamma_real(&params(1.0, 0.5, 0.0, 1, 1.0, 10), 0.0).unwrap(),
            24.0 * 2f64.sqrt() / 0.5
        );
        let g = gamma_real(&params(1.0, 1.0, 0.0, 1, 1.0, 10), 1.0).unwrap();
        assert!((g - 33.941).abs() < 1e-3);
        let g = gamma_real(&params(1.0, 0.5, 1.0, 1, 1.0, 100), 0.0).unwrap();
        assert!((g - 5400.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_parameters() {
        assert!(gamma_fixed(&params(0.0, 0.5, 0.0, 1, 1.0, 1)).is_err());
        assert!(gamma_fixed(&params(1.0, 0.5, 1.0, 0, 1.0, 1)).is_err());
        assert!(gamma_real(&params(1.0, 0.5, 0.0, 1, 1.0, 1), -1.0).is_err());
        assert!(GammaSchedule::Constant(0.0).gamma(0).is_err());
    }
}
