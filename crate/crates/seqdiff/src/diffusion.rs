//! Variance-preserving diffusion schedule and forward noising.
//!
//! The forward corruption follows the variance-preserving SDE
//! `dx = -1/2 beta(tau) x dtau + sqrt(beta(tau)) dw` with a linear
//! noise-rate ramp `beta(tau) = beta_min + (beta_max - beta_min) * tau / T`.
//! Its marginal at diffusion time `tau` is `N(alpha x0, sigma^2 I)` with
//! `sigma^2 = 1 - exp(-B(tau))` and `alpha = exp(-B(tau) / 2)`, where
//! `B(tau)` is the integral of `beta` up to `tau`, evaluated in closed
//! form. `alpha^2 + sigma^2 = 1` holds identically.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Linear noise-rate ramp together with the trajectory discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta_min: f64,
    beta_max: f64,
    horizon: f64,
    steps: usize,
}

/// Signal and noise rates at a fixed diffusion time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub alpha: f64,
    pub sigma: f64,
}

impl NoiseSchedule {
    /// Conventional setting: `beta` ramping 0.1 -> 20 over a unit horizon,
    /// discretized into 100 steps.
    pub fn default_vp(steps: usize) -> Self {
        Self::new(0.1, 20.0, 1.0, steps).expect("default schedule constants are valid")
    }

    pub fn new(beta_min: f64, beta_max: f64, horizon: f64, steps: usize) -> Result<Self> {
        if !(beta_min > 0.0) {
            return Err(Error::invalid(format!("beta_min must be positive, got {beta_min}")));
        }
        if beta_max < beta_min {
            return Err(Error::invalid(format!(
                "beta_max ({beta_max}) must be >= beta_min ({beta_min})"
            )));
        }
        if !(horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        Ok(Self { beta_min, beta_max, horizon, steps })
    }

    pub fn beta_min(&self) -> f64 {
        self.beta_min
    }

    pub fn beta_max(&self) -> f64 {
        self.beta_max
    }

    /// Total diffusion time `T`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Full-trajectory step count `N`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Step width `T / N` of the full-trajectory grid.
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Instantaneous noise rate `beta(tau)`.
    pub fn beta(&self, tau: f64) -> f64 {
        self.beta_min + (self.beta_max - self.beta_min) * (tau / self.horizon)
    }

    /// Closed-form integral of the linear ramp over `[0, tau]`.
    pub fn beta_integral(&self, tau: f64) -> f64 {
        self.beta_min * tau + (self.beta_max - self.beta_min) * tau * tau / (2.0 * self.horizon)
    }

    /// Signal and noise rates at `tau`.
    pub fn rates_at(&self, tau: f64) -> Result<Rates> {
        if !tau.is_finite() || tau < 0.0 || tau > self.horizon {
            return Err(Error::invalid(format!(
                "tau = {tau} outside diffusion interval [0, {}]",
                self.horizon
            )));
        }
        let integral = self.beta_integral(tau);
        // -expm1 keeps precision for small integrals where 1 - exp(-x)
        // would cancel.
        let sigma_sq = -(-integral).exp_m1();
        Ok(Rates { alpha: (-integral / 2.0).exp(), sigma: sigma_sq.sqrt() })
    }

    /// Number of reverse steps remaining when a trajectory starts at
    /// `tau_prime`: `round(N * tau' / T)`, clamped to `[1, N]`.
    pub fn steps_from_tau(&self, tau_prime: f64) -> Result<usize> {
        if !(tau_prime > 0.0) {
            return Err(Error::invalid(format!(
                "tau_prime must be positive, got {tau_prime}"
            )));
        }
        let raw = (self.steps as f64 * tau_prime / self.horizon).round() as usize;
        Ok(raw.clamp(1, self.steps))
    }

    /// Inverse of [`steps_from_tau`](Self::steps_from_tau) on the step grid:
    /// the diffusion time of grid node `k`.
    pub fn tau_of_step(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }
}

impl Rates {
    pub fn sigma_sq(&self) -> f64 {
        self.sigma * self.sigma
    }
}

/// Draws `x_tau = alpha * x0 + sigma * noise` from the forward marginal.
///
/// `x0` is a model-space field; `noise` is a field of independent standard
/// normal draws of the same shape.
pub fn forward_diffuse(
    x0: &Array2<f64>,
    rates: Rates,
    noise: &Array2<f64>,
) -> Result<Array2<f64>> {
    if x0.dim() != noise.dim() {
        return Err(Error::shape(
            format!("{:?}", x0.dim()),
            format!("{:?}", noise.dim()),
        ));
    }
    Ok(x0.mapv(|v| rates.alpha * v) + noise.mapv(|v| rates.sigma * v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn linear_ramp_integral_is_closed_form() {
        let s = NoiseSchedule::new(0.1, 20.0, 1.0, 100).unwrap();
        assert!((s.beta_integral(1.0) - 10.05).abs() < 1e-12);
    }

    #[test]
    fn constant_beta_integral() {
        let s = NoiseSchedule::new(0.1, 0.1, 1.0, 1).unwrap();
        for &tau in &[0.0, 0.3, 0.7, 1.0] {
            assert!((s.beta_integral(tau) - 0.1 * tau).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_invalid_constants() {
        assert!(NoiseSchedule::new(0.1, 0.05, 1.0, 100).is_err());
        assert!(NoiseSchedule::new(0.0, 1.0, 1.0, 100).is_err());
        assert!(NoiseSchedule::new(0.1, 20.0, 1.0, 0).is_err());
        assert!(NoiseSchedule::new(0.1, 20.0, 0.0, 100).is_err());
    }

    #[test]
    fn rates_at_origin_and_horizon() {
        let s = NoiseSchedule::default_vp(100);
        let r0 = s.rates_at(0.0).unwrap();
        assert_eq!(r0.alpha, 1.0);
        assert_eq!(r0.sigma, 0.0);

        let rt = s.rates_at(1.0).unwrap();
        let sigma_sq = 1.0 - (-10.05f64).exp();
        assert!((rt.sigma * rt.sigma - sigma_sq).abs() < 1e-12);
        assert!((rt.alpha - 0.00656727).abs() < 1e-7);
    }

    #[test]
    fn rejects_tau_outside_interval() {
        let s = NoiseSchedule::default_vp(100);
        assert!(s.rates_at(-0.01).is_err());
        assert!(s.rates_at(1.01).is_err());
    }

    #[test]
    fn variance_preserving_identity_on_grid() {
        let s = NoiseSchedule::default_vp(100);
        let mut prev_sigma = -1.0;
        for i in 0..=1000 {
            let tau = i as f64 / 1000.0;
            let r = s.rates_at(tau).unwrap();
            assert!(
                (r.alpha * r.alpha + r.sigma * r.sigma - 1.0).abs() < 1e-12,
                "identity violated at tau={tau}"
            );
            assert!(r.sigma >= prev_sigma, "sigma not monotone at tau={tau}");
            prev_sigma = r.sigma;
        }
    }

    #[test]
    fn steps_from_tau_matches_grid() {
        let s = NoiseSchedule::default_vp(100);
        assert_eq!(s.steps_from_tau(0.04).unwrap(), 4);
        assert_eq!(s.steps_from_tau(1.0).unwrap(), 100);
        let s50 = NoiseSchedule::new(0.1, 20.0, 1.0, 50).unwrap();
        assert_eq!(s50.steps_from_tau(0.5).unwrap(), 25);
        assert!(s.steps_from_tau(0.0).is_err());
        // Below one grid step still yields one step.
        assert_eq!(s.steps_from_tau(1e-9).unwrap(), 1);
    }

    #[test]
    fn steps_from_tau_is_monotone() {
        let s = NoiseSchedule::default_vp(100);
        let mut prev = 0;
        for i in 1..=200 {
            let n = s.steps_from_tau(i as f64 / 200.0).unwrap();
            assert!(n >= prev);
            prev = n;
        }
        assert_eq!(prev, 100);
    }

    #[test]
    fn forward_diffuse_degenerate_cases() {
        let s = NoiseSchedule::default_vp(100);
        let r = s.rates_at(0.5).unwrap();
        let x0 = Array2::from_elem((3, 4), 0.25);
        let noise = Array2::from_elem((3, 4), 1.5);

        let zeros = Array2::zeros((3, 4));
        let only_noise = forward_diffuse(&zeros, r, &noise).unwrap();
        for v in only_noise.iter() {
            assert!((v - r.sigma * 1.5).abs() < 1e-15);
        }
        let only_signal = forward_diffuse(&x0, r, &zeros).unwrap();
        for v in only_signal.iter() {
            assert!((v - r.alpha * 0.25).abs() < 1e-15);
        }
        let mismatched = Array2::zeros((4, 3));
        assert!(forward_diffuse(&x0, r, &mismatched).is_err());
    }

    #[test]
    fn forward_marginal_moments() {
        // Monte-Carlo check of the marginal mean alpha*x0 and variance
        // sigma^2 at tau = T/2.
        let s = NoiseSchedule::default_vp(100);
        let r = s.rates_at(0.5).unwrap();
        let x0 = ndarray::array![[0.3, -0.6], [0.9, 0.0]];
        let n_draws = 100_000usize;
        let mut rng = rng_from_seed(7);

        let mut sum = Array2::<f64>::zeros((2, 2));
        let mut sum_sq = Array2::<f64>::zeros((2, 2));
        for _ in 0..n_draws {
            let noise = Array2::from_shape_simple_fn((2, 2), || rng.sample::<f64, _>(StandardNormal));
            let x_tau = forward_diffuse(&x0, r, &noise).unwrap();
            sum += &x_tau;
            sum_sq += &x_tau.mapv(|v| v * v);
        }
        let mean = sum.mapv(|v| v / n_draws as f64);
        let mean_tol = 4.0 * r.sigma / (n_draws as f64).sqrt();
        for (m, x) in mean.iter().zip(x0.iter()) {
            assert!((m - r.alpha * x).abs() < mean_tol, "mean off: {m} vs {}", r.alpha * x);
        }
        for ((ss, m), _) in sum_sq.iter().zip(mean.iter()).zip(x0.iter()) {
            let var = ss / n_draws as f64 - m * m;
            assert!(
                (var - r.sigma_sq()).abs() < 0.05 * r.sigma_sq(),
                "variance off: {var} vs {}",
                r.sigma_sq()
            );
        }
    }
}
