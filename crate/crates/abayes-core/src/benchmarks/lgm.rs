//! Latent Gaussian benchmark models for the mode-and-curvature engine: an
//! all-Gaussian variant whose every marginal is available in closed form,
//! and a Poisson-count variant that exercises the non-conjugate path.
//! Both use an exchangeable latent field `x ~ N(0, (1/phi) I)` with a
//! Gamma(2, 1) prior on the precision scale `phi` and identity design.

use nalgebra::DMatrix;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::laplace::{LatentGaussianModel, ObsModel};
use crate::rng::StreamSeed;
use crate::stats;

/// Gamma(2, 1) log-density of the precision scale, `ln phi - phi`
/// (the normalizing constant is zero).
fn log_gamma21(phi: f64) -> f64 {
    if phi <= 0.0 {
        f64::NEG_INFINITY
    } else {
        phi.ln() - phi
    }
}

/// All-Gaussian latent model: `x ~ N(0, (1/phi) I)`,
/// `y_i | x_i ~ N(x_i, noise_var)`, `phi ~ Gamma(2, 1)`.
#[derive(Clone, Copy, Debug)]
pub struct GaussianLgm {
    latent_dim: usize,
    noise_var: f64,
}

impl GaussianLgm {
    /// Builds the benchmark with `latent_dim` sites.
    pub fn new(latent_dim: usize, noise_var: f64) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::config("latent dimension must be >= 1"));
        }
        if !(noise_var.is_finite() && noise_var > 0.0) {
            return Err(Error::config(format!("noise_var must be positive, got {noise_var}")));
        }
        Ok(Self { latent_dim, noise_var })
    }

    /// Latent dimension.
    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// Observation noise variance.
    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// The generic latent-Gaussian-model description.
    pub fn model(&self) -> LatentGaussianModel {
        let k = self.latent_dim;
        LatentGaussianModel::new(
            k,
            1,
            DMatrix::identity(k, k),
            ObsModel::Gaussian { noise_var: self.noise_var },
            Box::new(|phi: &[f64]| log_gamma21(phi[0])),
            Box::new(move |phi: &[f64]| {
                if phi[0] <= 0.0 {
                    return Err(Error::config(format!(
                        "precision scale must be positive, got {}",
                        phi[0]
                    )));
                }
                Ok(DMatrix::identity(k, k) * phi[0])
            }),
        )
        .expect("construction is validated above")
    }

    /// Simulates `y` at a fixed precision scale.
    pub fn simulate(&self, phi: f64, seed: StreamSeed) -> Result<Vec<f64>> {
        if phi <= 0.0 {
            return Err(Error::config(format!("phi must be positive, got {phi}")));
        }
        let mut rng = seed.rng();
        let normal = rand_distr::StandardNormal;
        Ok((0..self.latent_dim)
            .map(|_| {
                let zx: f64 = normal.sample(&mut rng);
                let zy: f64 = normal.sample(&mut rng);
                zx / phi.sqrt() + zy * self.noise_var.sqrt()
            })
            .collect())
    }

    /// Exact conditional `(mean_i, variance)` of each latent site given
    /// `phi`: precision `phi + 1/noise_var`, mean `y_i` shrunk accordingly.
    pub fn conditional_exact(&self, phi: f64, y: &[f64]) -> (Vec<f64>, f64) {
        let prec = phi + 1.0 / self.noise_var;
        let means = y.iter().map(|&yi| yi / (self.noise_var * prec)).collect();
        (means, 1.0 / prec)
    }

    /// Exact `log p(y | phi)`: marginally `y_i ~ N(0, 1/phi + noise_var)`
    /// iid.
    pub fn log_marginal_lik(&self, phi: f64, y: &[f64]) -> f64 {
        let v = 1.0 / phi + self.noise_var;
        y.iter().map(|&yi| stats::normal_logpdf(yi, 0.0, v)).sum()
    }

    /// Exact unnormalized log posterior of `phi`.
    pub fn log_posterior_phi(&self, phi: f64, y: &[f64]) -> f64 {
        if phi <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.log_marginal_lik(phi, y) + log_gamma21(phi)
    }

    /// Log evidence by dense one-dimensional quadrature of
    /// `p(y | phi) p(phi)`; the integrand is smooth and decays
    /// exponentially, so a wide trapezoid grid is accurate far beyond the
    /// tolerances used in the tests.
    pub fn log_evidence_quadrature(&self, y: &[f64], upper: f64, points: usize) -> f64 {
        let grid: Vec<f64> = (0..points)
            .map(|i| 1e-9 + (upper - 1e-9) * i as f64 / (points - 1) as f64)
            .collect();
        let cells = stats::trapezoid_cells(&grid);
        let terms: Vec<f64> = grid
            .iter()
            .zip(&cells)
            .map(|(&phi, &c)| self.log_posterior_phi(phi, y) + c.ln())
            .collect();
        stats::logsumexp(&terms)
    }
}

/// Poisson-count latent model: `x ~ N(0, (1/phi) I)`,
/// `y_i | x_i ~ Poisson(exp(x_i))`, `phi ~ Gamma(2, 1)`.
#[derive(Clone, Copy, Debug)]
pub struct PoissonLgm {
    latent_dim: usize,
}

impl PoissonLgm {
    /// Builds the benchmark with `latent_dim` sites.
    pub fn new(latent_dim: usize) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::config("latent dimension must be >= 1"));
        }
        Ok(Self { latent_dim })
    }

    /// Latent dimension.
    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// The generic latent-Gaussian-model description.
    pub fn model(&self) -> LatentGaussianModel {
        let k = self.latent_dim;
        LatentGaussianModel::new(
            k,
            1,
            DMatrix::identity(k, k),
            ObsModel::Poisson,
            Box::new(|phi: &[f64]| log_gamma21(phi[0])),
            Box::new(move |phi: &[f64]| {
                if phi[0] <= 0.0 {
                    return Err(Error::config(format!(
                        "precision scale must be positive, got {}",
                        phi[0]
                    )));
                }
                Ok(DMatrix::identity(k, k) * phi[0])
            }),
        )
        .expect("construction is validated above")
    }

    /// Simulates `(x, y)` at a fixed precision scale.
    pub fn simulate(&self, phi: f64, seed: StreamSeed) -> Result<(Vec<f64>, Vec<f64>)> {
        if phi <= 0.0 {
            return Err(Error::config(format!("phi must be positive, got {phi}")));
        }
        let mut rng = seed.rng();
        let normal = rand_distr::StandardNormal;
        let mut xs = Vec::with_capacity(self.latent_dim);
        let mut ys = Vec::with_capacity(self.latent_dim);
        for _ in 0..self.latent_dim {
            let z: f64 = normal.sample(&mut rng);
            let x = z / phi.sqrt();
            let pois = rand_distr::Poisson::new(x.exp())
                .map_err(|e| Error::numerical(format!("Poisson rate {}: {e}", x.exp())))?;
            let y: f64 = pois.sample(&mut rng);
            xs.push(x);
            ys.push(y);
        }
        Ok((xs, ys))
    }

    /// Log joint density `log p(x, y | phi) p(phi)`, used by the
    /// Markov-chain reference samplers in the tests.
    pub fn log_joint(&self, phi: f64, x: &[f64], y: &[f64]) -> f64 {
        if phi <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let k = self.latent_dim as f64;
        let prior_x: f64 = -0.5 * phi * x.iter().map(|v| v * v).sum::<f64>()
            + 0.5 * k * phi.ln()
            - 0.5 * k * stats::LN_2PI;
        let lik: f64 = x
            .iter()
            .zip(y)
            .map(|(&xi, &yi)| ObsModel::Poisson.log_density(yi, xi))
            .sum();
        prior_x + lik + log_gamma21(phi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace;
    use approx::assert_relative_eq;

    #[test]
    fn conditional_matches_the_newton_solve_exactly() {
        let bench = GaussianLgm::new(7, 0.8).unwrap();
        let y: Vec<f64> = vec![0.5, -1.0, 2.2, 0.0, 0.3, -0.4, 1.1];
        let model = bench.model();
        let (x_hat, sigma) = laplace::gaussian_conditional(&model, &[1.7], &y).unwrap();
        let (means, var) = bench.conditional_exact(1.7, &y);
        for i in 0..7 {
            assert_relative_eq!(x_hat[i], means[i], epsilon = 1e-12);
            assert_relative_eq!(sigma[(i, i)], var, epsilon = 1e-12);
        }
    }

    #[test]
    fn hyper_marginal_is_exact_for_the_gaussian_variant() {
        // With Gaussian observations the mode-and-curvature identity is not
        // an approximation: the unnormalized log-marginal must equal
        // log p(y | phi) + log p(phi) up to one phi-independent constant.
        let bench = GaussianLgm::new(6, 1.0).unwrap();
        let y = vec![0.4, -0.9, 1.8, 0.1, -0.2, 0.9];
        let model = bench.model();
        let mut shifts = Vec::new();
        for i in 0..9 {
            let phi = 0.3 + 0.45 * i as f64;
            let approx_lm = laplace::laplace_hyper_marginal(&model, &[phi], &y).unwrap();
            let exact = bench.log_posterior_phi(phi, &y);
            shifts.push(approx_lm - exact);
        }
        for w in shifts.windows(2) {
            assert_relative_eq!(w[0], w[1], epsilon = 1e-8);
        }
        // The constant is exactly zero here: both sides are normalized the
        // same way.
        assert_relative_eq!(shifts[0], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn quadrature_evidence_is_stable_under_refinement() {
        let bench = GaussianLgm::new(6, 1.0).unwrap();
        let y = vec![0.4, -0.9, 1.8, 0.1, -0.2, 0.9];
        let a = bench.log_evidence_quadrature(&y, 60.0, 20_001);
        let b = bench.log_evidence_quadrature(&y, 80.0, 40_001);
        assert_relative_eq!(a, b, epsilon = 1e-9);
    }

    #[test]
    fn poisson_simulation_produces_nonnegative_integer_counts() {
        let bench = PoissonLgm::new(20).unwrap();
        let (xs, ys) = bench.simulate(1.5, StreamSeed::new(31)).unwrap();
        assert_eq!(xs.len(), 20);
        assert_eq!(ys.len(), 20);
        for &y in &ys {
            assert!(y >= 0.0 && y.fract() == 0.0, "count {y}");
        }
        let (xs2, ys2) = bench.simulate(1.5, StreamSeed::new(31)).unwrap();
        assert_eq!(xs, xs2);
        assert_eq!(ys, ys2);
    }

    #[test]
    fn log_joint_drops_when_the_latent_field_moves_off_the_data() {
        let bench = PoissonLgm::new(5).unwrap();
        let y = vec![1.0, 0.0, 2.0, 4.0, 1.0];
        let x_near: Vec<f64> = y.iter().map(|&v: &f64| (v + 0.5).ln()).collect();
        let x_far: Vec<f64> = x_near.iter().map(|v| v + 3.0).collect();
        let near = bench.log_joint(1.0, &x_near, &y);
        let far = bench.log_joint(1.0, &x_far, &y);
        assert!(near > far, "near {near} far {far}");
    }
}
