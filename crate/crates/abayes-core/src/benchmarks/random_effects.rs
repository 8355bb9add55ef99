//! Gaussian random-effects benchmark: a global mean, one latent effect per
//! observation, and Gaussian noise throughout. Marginalizing the latent
//! effects is exact, so the posterior of the global mean is available in
//! closed form; the model doubles as the stochastic-update testbed because
//! each observation touches its own local factor.

use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rng::StreamSeed;
use crate::vb::ConjugateModelSpec;

/// `phi ~ N(prior_mean, prior_var)`, `x_i | phi ~ N(phi, latent_var)`,
/// `y_i | x_i ~ N(x_i, obs_var)`.
#[derive(Clone, Copy, Debug)]
pub struct RandomEffectsModel {
    n: usize,
    prior_mean: f64,
    prior_var: f64,
    latent_var: f64,
    obs_var: f64,
}

impl RandomEffectsModel {
    /// Builds the model; `n` is the number of groups/observations.
    pub fn new(
        n: usize,
        prior_mean: f64,
        prior_var: f64,
        latent_var: f64,
        obs_var: f64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("random-effects model needs n >= 1"));
        }
        if !prior_mean.is_finite() {
            return Err(Error::config(format!("prior_mean must be finite, got {prior_mean}")));
        }
        for (name, v) in [
            ("prior_var", prior_var),
            ("latent_var", latent_var),
            ("obs_var", obs_var),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { n, prior_mean, prior_var, latent_var, obs_var })
    }

    /// The standard configuration used across the test suite: diffuse
    /// prior (variance 5) and unit total noise split evenly between the
    /// latent and observation layers.
    pub fn standard(n: usize) -> Result<Self> {
        Self::new(n, 0.0, 5.0, 0.5, 0.5)
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.n
    }

    /// The matching mean-field model description.
    pub fn to_spec(&self) -> ConjugateModelSpec {
        ConjugateModelSpec::GaussianRandomEffects {
            prior_mean: self.prior_mean,
            prior_var: self.prior_var,
            latent_var: self.latent_var,
            obs_var: self.obs_var,
        }
    }

    /// Simulates `(y, phi, x)` from the generative model.
    pub fn simulate(&self, seed: StreamSeed) -> Result<(Dataset, f64, Vec<f64>)> {
        let mut rng = seed.rng();
        let normal = rand_distr::StandardNormal;
        let z: f64 = normal.sample(&mut rng);
        let phi = self.prior_mean + self.prior_var.sqrt() * z;
        let mut xs = Vec::with_capacity(self.n);
        let mut ys = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            let zx: f64 = normal.sample(&mut rng);
            let x = phi + self.latent_var.sqrt() * zx;
            let zy: f64 = normal.sample(&mut rng);
            ys.push(x + self.obs_var.sqrt() * zy);
            xs.push(x);
        }
        Ok((Dataset::from_column(ys)?, phi, xs))
    }

    /// Exact posterior `(mean, variance)` of the global mean: integrating
    /// the latent effects gives `y_i | phi ~ N(phi, latent_var + obs_var)`
    /// iid, and the rest is the conjugate Gaussian update.
    pub fn phi_posterior(&self, y: &Dataset) -> Result<(f64, f64)> {
        let ys = y.scalar_view()?;
        if ys.is_empty() {
            return Err(Error::degenerate("posterior of an empty dataset"));
        }
        let total_var = self.latent_var + self.obs_var;
        let n = ys.len() as f64;
        let prec = 1.0 / self.prior_var + n / total_var;
        let var = 1.0 / prec;
        let mean =
            var * (self.prior_mean / self.prior_var + ys.iter().sum::<f64>() / total_var);
        Ok((mean, var))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn phi_posterior_matches_the_collapsed_conjugate_model() {
        let m = RandomEffectsModel::standard(6).unwrap();
        let y = Dataset::from_column(vec![0.4, -0.7, 1.3, 0.2, 0.8, 0.1]).unwrap();
        // Collapsed model: unknown mean, known variance 1, prior N(0, 5).
        let collapsed =
            super::super::ConjugateGaussianModel::new(6, 1.0, 0.0, 5.0).unwrap();
        let (m1, v1) = m.phi_posterior(&y).unwrap();
        let (m2, v2) = collapsed.posterior(&y).unwrap();
        assert_relative_eq!(m1, m2, epsilon = 1e-14);
        assert_relative_eq!(v1, v2, epsilon = 1e-14);
    }

    #[test]
    fn simulated_moments_match_the_marginal_law() {
        // Marginally y_i ~ N(prior_mean, prior_var + latent_var + obs_var),
        // with cross-observation covariance prior_var.
        let m = RandomEffectsModel::new(2000, 1.0, 2.0, 0.5, 0.3).unwrap();
        let mut mean_acc = 0.0f64;
        let mut reps = 0usize;
        for s in 0..200u64 {
            let (y, phi, xs) = m.simulate(StreamSeed::new(9000).stream(s)).unwrap();
            let ys = y.scalar_view().unwrap();
            let ybar = ys.iter().sum::<f64>() / ys.len() as f64;
            let xbar = xs.iter().sum::<f64>() / xs.len() as f64;
            // Within one replicate the sample mean hugs phi.
            assert!((ybar - phi).abs() < 0.2, "ybar {ybar} far from phi {phi}");
            assert!((xbar - phi).abs() < 0.2);
            mean_acc += ybar;
            reps += 1;
        }
        let grand = mean_acc / reps as f64;
        // SE of the grand mean is about sqrt(2 / 200) ~ 0.1.
        assert!((grand - 1.0).abs() < 0.35, "grand mean {grand}");
    }

    #[test]
    fn degenerate_configurations_are_rejected() {
        assert!(RandomEffectsModel::new(0, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(RandomEffectsModel::new(5, 0.0, -1.0, 1.0, 1.0).is_err());
        assert!(RandomEffectsModel::new(5, 0.0, 1.0, 0.0, 1.0).is_err());
    }
}
