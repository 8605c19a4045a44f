//! Exact score functions for Gaussian priors.
//!
//! When the clean data follows `N(mu, Sigma)`, the forward-diffused
//! marginal at rates `(alpha, sigma)` is `N(alpha mu, alpha^2 Sigma +
//! sigma^2 I)` and every quantity the sampler needs has a closed form.
//! This makes the Gaussian prior the reference oracle for the whole
//! pipeline: score, posterior-mean, and masked-posterior checks all
//! reduce to small dense linear algebra.

use ndarray::{Array1, Array2};

use crate::diffusion::Rates;
use crate::error::{Error, Result};
use crate::measurement::LinearOperator;

/// Maximum dimension for which a full covariance matrix is accepted.
pub const MAX_FULL_DIM: usize = 64;

#[derive(Debug, Clone)]
pub enum Covariance {
    /// Independent per-coordinate variances (any dimension).
    Diagonal(Array1<f64>),
    /// Full symmetric positive-definite matrix, dimension at most
    /// [`MAX_FULL_DIM`].
    Full(Array2<f64>),
}

/// A Gaussian prior over flattened fields.
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    mean: Array1<f64>,
    cov: Covariance,
}

impl GaussianPrior {
    pub fn diagonal(mean: Array1<f64>, variances: Array1<f64>) -> Result<Self> {
        if mean.len() != variances.len() {
            return Err(Error::shape(
                format!("variance vector of length {}", mean.len()),
                format!("length {}", variances.len()),
            ));
        }
        if variances.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("covariance diagonal entries must be positive"));
        }
        Ok(Self { mean, cov: Covariance::Diagonal(variances) })
    }

    pub fn full(mean: Array1<f64>, cov: Array2<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.dim() != (d, d) {
            return Err(Error::shape(format!("({d}, {d}) covariance"), format!("{:?}", cov.dim())));
        }
        if d > MAX_FULL_DIM {
            return Err(Error::invalid(format!(
                "full covariance limited to dimension {MAX_FULL_DIM}, got {d}"
            )));
        }
        for i in 0..d {
            for j in 0..i {
                if (cov[[i, j]] - cov[[j, i]]).abs() > 1e-9 {
                    return Err(Error::invalid("covariance must be symmetric"));
                }
            }
        }
        if cholesky(&cov).is_none() {
            return Err(Error::invalid("covariance must be positive definite"));
        }
        Ok(Self { mean, cov: Covariance::Full(cov) })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &Covariance {
        &self.cov
    }

    /// Marginal covariance of the diffused variable, `alpha^2 Sigma +
    /// sigma^2 I`, as a dense matrix.
    fn marginal_cov(&self, rates: Rates) -> Array2<f64> {
        let d = self.dim();
        let a2 = rates.alpha * rates.alpha;
        let s2 = rates.sigma_sq();
        match &self.cov {
            Covariance::Diagonal(v) => {
                Array2::from_diag(&v.mapv(|vi| a2 * vi + s2))
            }
            Covariance::Full(c) => {
                let mut m = c.mapv(|v| a2 * v);
                for i in 0..d {
                    m[[i, i]] += s2;
                }
                m
            }
        }
    }

    /// Exact score of the diffused marginal:
    /// `-(alpha^2 Sigma + sigma^2 I)^{-1} (x - alpha mu)`.
    pub fn score(&self, x: &Array1<f64>, rates: Rates) -> Result<Array1<f64>> {
        self.check_dim(x)?;
        let centered = x - &self.mean.mapv(|m| rates.alpha * m);
        match &self.cov {
            Covariance::Diagonal(v) => {
                let a2 = rates.alpha * rates.alpha;
                let s2 = rates.sigma_sq();
                Ok(centered
                    .iter()
                    .zip(v.iter())
                    .map(|(c, vi)| -c / (a2 * vi + s2))
                    .collect())
            }
            Covariance::Full(_) => {
                let m = self.marginal_cov(rates);
                let chol = cholesky(&m).ok_or_else(|| Error::invalid("singular marginal"))?;
                let solved = chol_solve(&chol, &centered);
                Ok(solved.mapv(|v| -v))
            }
        }
    }

    /// Log-density of the diffused marginal, used by finite-difference
    /// checks of [`score`](Self::score).
    pub fn log_density(&self, x: &Array1<f64>, rates: Rates) -> Result<f64> {
        self.check_dim(x)?;
        let d = self.dim() as f64;
        let centered = x - &self.mean.mapv(|m| rates.alpha * m);
        let m = self.marginal_cov(rates);
        let chol = cholesky(&m).ok_or_else(|| Error::invalid("singular marginal"))?;
        let solved = chol_solve(&chol, &centered);
        let quad: f64 = centered.iter().zip(solved.iter()).map(|(a, b)| a * b).sum();
        let log_det: f64 = (0..self.dim()).map(|i| 2.0 * chol[[i, i]].ln()).sum();
        Ok(-0.5 * quad - 0.5 * log_det - 0.5 * d * (2.0 * std::f64::consts::PI).ln())
    }

    /// Exact conditional mean `E[x0 | x_tau]` from joint-Gaussian
    /// conditioning: `mu + alpha Sigma (alpha^2 Sigma + sigma^2 I)^{-1}
    /// (x - alpha mu)`. Independent of the score-based route.
    pub fn conditional_mean(&self, x: &Array1<f64>, rates: Rates) -> Result<Array1<f64>> {
        self.check_dim(x)?;
        let centered = x - &self.mean.mapv(|m| rates.alpha * m);
        match &self.cov {
            Covariance::Diagonal(v) => {
                let a2 = rates.alpha * rates.alpha;
                let s2 = rates.sigma_sq();
                Ok(self
                    .mean
                    .iter()
                    .zip(v.iter())
                    .zip(centered.iter())
                    .map(|((m, vi), c)| m + rates.alpha * vi / (a2 * vi + s2) * c)
                    .collect())
            }
            Covariance::Full(c) => {
                let m = self.marginal_cov(rates);
                let chol = cholesky(&m).ok_or_else(|| Error::invalid("singular marginal"))?;
                let solved = chol_solve(&chol, &centered);
                let correction = c.dot(&solved).mapv(|v| rates.alpha * v);
                Ok(&self.mean + &correction)
            }
        }
    }

    /// Exact posterior mean of `x` given a masked observation
    /// `y = A x + n`, `n ~ N(0, noise_var I)`:
    /// `mu + Sigma A^T (A Sigma A^T + noise_var I)^{-1} (y - A mu)`.
    pub fn masked_posterior_mean(
        &self,
        op: &LinearOperator,
        y: &[f64],
        noise_var: f64,
    ) -> Result<Array1<f64>> {
        let (h, w) = op.shape();
        if h * w != self.dim() {
            return Err(Error::shape(format!("prior dimension {}", self.dim()), format!("{h}x{w}")));
        }
        let d = self.dim();
        let sigma = match &self.cov {
            Covariance::Diagonal(v) => Array2::from_diag(v),
            Covariance::Full(c) => c.clone(),
        };
        // Rows of A as kept flat indices.
        let mean_img = Array2::from_shape_vec((h, w), self.mean.to_vec()).unwrap();
        let a_mu = op.forward_raw(&mean_img)?;
        let m = y.len();
        if a_mu.len() != m {
            return Err(Error::shape(format!("measurement of length {}", a_mu.len()), format!("length {m}")));
        }
        let kept = kept_indices(op, h, w)?;
        // A Sigma A^T + noise_var I.
        let mut gram = Array2::zeros((m, m));
        for (i, &ki) in kept.iter().enumerate() {
            for (j, &kj) in kept.iter().enumerate() {
                gram[[i, j]] = sigma[[ki, kj]];
            }
            gram[[i, i]] += noise_var;
        }
        let chol = cholesky(&gram).ok_or_else(|| Error::invalid("singular measurement gram"))?;
        let residual: Array1<f64> =
            y.iter().zip(a_mu.iter()).map(|(yi, ami)| yi - ami).collect();
        let solved = chol_solve(&chol, &residual);
        // Sigma A^T solved.
        let mut post = self.mean.clone();
        for i in 0..d {
            let mut acc = 0.0;
            for (j, &kj) in kept.iter().enumerate() {
                acc += sigma[[i, kj]] * solved[j];
            }
            post[i] += acc;
        }
        Ok(post)
    }

    fn check_dim(&self, x: &Array1<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::shape(
                format!("vector of length {}", self.dim()),
                format!("length {}", x.len()),
            ));
        }
        Ok(())
    }
}

/// Flat indices selected by the operator, in its canonical output order.
fn kept_indices(op: &LinearOperator, h: usize, w: usize) -> Result<Vec<usize>> {
    let mut tagged = Array2::zeros((h, w));
    for (i, v) in tagged.iter_mut().enumerate() {
        *v = i as f64;
    }
    Ok(op.forward_raw(&tagged)?.into_iter().map(|v| v as usize).collect())
}

/// Dense Cholesky factor (lower triangular) of a symmetric
/// positive-definite matrix; `None` if the matrix is not SPD.
pub fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// Solves `A x = b` given the Cholesky factor `L` of `A`.
pub fn chol_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * y[k];
        }
        y[i] = sum / l[[i, i]];
    }
    let mut x = Array1::zeros(n);
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[[k, i]] * x[k];
        }
        x[i] = sum / l[[i, i]];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::NoiseSchedule;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_spd(d: usize, rng: &mut impl Rng) -> Array2<f64> {
        let g = Array2::from_shape_simple_fn((d, d), || rng.sample::<f64, _>(StandardNormal));
        let mut spd = g.dot(&g.t());
        for i in 0..d {
            spd[[i, i]] += d as f64 * 0.5;
        }
        spd
    }

    #[test]
    fn cholesky_solves_random_systems() {
        let mut rng = rng_from_seed(21);
        for _ in 0..20 {
            let a = random_spd(6, &mut rng);
            let x_true = Array1::from_shape_simple_fn(6, || rng.sample::<f64, _>(StandardNormal));
            let b = a.dot(&x_true);
            let l = cholesky(&a).unwrap();
            let x = chol_solve(&l, &b);
            for (xi, ti) in x.iter().zip(x_true.iter()) {
                assert!((xi - ti).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unit_gaussian_score_is_negative_identity() {
        // With a standard normal prior the diffused marginal stays N(0, I),
        // so the score is -x at every diffusion time.
        let s = NoiseSchedule::default_vp(100);
        let d = 5;
        let prior = GaussianPrior::diagonal(Array1::zeros(d), Array1::ones(d)).unwrap();
        let mut rng = rng_from_seed(22);
        for &tau in &[0.05, 0.3, 0.8, 1.0] {
            let r = s.rates_at(tau).unwrap();
            let x = Array1::from_shape_simple_fn(d, || rng.sample::<f64, _>(StandardNormal));
            let score = prior.score(&x, r).unwrap();
            for (si, xi) in score.iter().zip(x.iter()) {
                assert!((si + xi).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn near_delta_prior_recovers_conditional_score() {
        let s = NoiseSchedule::default_vp(100);
        let r = s.rates_at(0.4).unwrap();
        let d = 4;
        let mu = Array1::from_vec(vec![0.3, -0.2, 0.1, 0.0]);
        let prior = GaussianPrior::diagonal(mu.clone(), Array1::from_elem(d, 1e-12)).unwrap();
        let mut rng = rng_from_seed(23);
        let x = Array1::from_shape_simple_fn(d, || rng.sample::<f64, _>(StandardNormal));
        let score = prior.score(&x, r).unwrap();
        let s2 = r.sigma_sq();
        for i in 0..d {
            let expected = -(x[i] - r.alpha * mu[i]) / s2;
            assert!((score[i] - expected).abs() < 1e-6 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn score_matches_log_density_finite_differences() {
        let s = NoiseSchedule::default_vp(100);
        let mut rng = rng_from_seed(24);
        let d = 8;
        let mean = Array1::from_shape_simple_fn(d, || rng.random_range(-0.5..0.5));
        let prior = GaussianPrior::full(mean, random_spd(d, &mut rng)).unwrap();

        let h = 1e-5;
        for trial in 0..100 {
            let tau = rng.random_range(0.02..1.0);
            let r = s.rates_at(tau).unwrap();
            let x = Array1::from_shape_simple_fn(d, || rng.sample::<f64, _>(StandardNormal));
            let score = prior.score(&x, r).unwrap();
            for i in 0..d {
                let mut xp = x.clone();
                xp[i] += h;
                let up = prior.log_density(&xp, r).unwrap();
                xp[i] -= 2.0 * h;
                let down = prior.log_density(&xp, r).unwrap();
                let fd = (up - down) / (2.0 * h);
                let rel = (fd - score[i]).abs() / (1.0 + fd.abs());
                assert!(rel < 1e-5, "trial {trial} coord {i}: fd={fd} score={}", score[i]);
            }
        }
    }

    #[test]
    fn rejects_bad_covariances() {
        let mean = Array1::zeros(3);
        assert!(GaussianPrior::diagonal(mean.clone(), Array1::from_vec(vec![1.0, 0.0, 1.0])).is_err());
        let mut asym = Array2::eye(3);
        asym[[0, 1]] = 0.5;
        assert!(GaussianPrior::full(mean.clone(), asym).is_err());
        let mut indef = Array2::eye(3);
        indef[[2, 2]] = -1.0;
        assert!(GaussianPrior::full(mean.clone(), indef).is_err());
        let big = Array1::zeros(65);
        assert!(GaussianPrior::full(big.clone(), Array2::eye(65)).is_err());
    }
}
