//! Variational inference for a small family of conditionally conjugate
//! models: coordinate-ascent updates with an analytic evidence lower bound,
//! a stochastic (subsampled) variant for the random-effects model, and a
//! Gaussian Kullback-Leibler diagnostic.
//!
//! All updates are closed-form; the supported joints are described by
//! [`ConjugateModelSpec`]. Sweeps run in fixed ascending coordinate order
//! (global factor first) so runs are deterministic.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Distribution;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::rng::StreamSeed;
use crate::stats;

/// Default relative ELBO tolerance for [`cavi`].
pub const DEFAULT_REL_TOL: f64 = 1e-8;
/// Default iteration cap for [`cavi`].
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Slack allowed on the ELBO monotonicity check (floating-point noise).
const ELBO_SLACK: f64 = 1e-10;

/// One mean-field factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Factor {
    /// Gaussian factor with the given mean and variance.
    Normal { mean: f64, var: f64 },
    /// Gamma factor in shape/rate form.
    Gamma { shape: f64, rate: f64 },
}

impl Factor {
    fn validate(&self) -> Result<()> {
        match *self {
            Factor::Normal { mean, var } => {
                if !mean.is_finite() || !(var.is_finite() && var > 0.0) {
                    return Err(Error::config(format!(
                        "normal factor needs finite mean and var > 0, got mean {mean}, var {var}"
                    )));
                }
            }
            Factor::Gamma { shape, rate } => {
                if !(shape.is_finite() && shape > 0.0 && rate.is_finite() && rate > 0.0) {
                    return Err(Error::config(format!(
                        "gamma factor needs shape > 0 and rate > 0, got {shape}, {rate}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// First moment of the factor.
    pub fn mean(&self) -> f64 {
        match *self {
            Factor::Normal { mean, .. } => mean,
            Factor::Gamma { shape, rate } => shape / rate,
        }
    }

    /// Variance of the factor.
    pub fn var(&self) -> f64 {
        match *self {
            Factor::Normal { var, .. } => var,
            Factor::Gamma { shape, rate } => shape / (rate * rate),
        }
    }

    /// Log-density at `x`.
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            Factor::Normal { mean, var } => stats::normal_logpdf(x, mean, var),
            Factor::Gamma { shape, rate } => {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
                }
            }
        }
    }

    /// Draws one value from the factor.
    pub fn sample(&self, rng: &mut crate::rng::TaskRng) -> f64 {
        match *self {
            Factor::Normal { mean, var } => {
                let z: f64 = rand_distr::StandardNormal.sample(rng);
                mean + var.sqrt() * z
            }
            Factor::Gamma { shape, rate } => {
                let g = rand_distr::Gamma::new(shape, 1.0 / rate)
                    .expect("validated shape/rate");
                g.sample(rng)
            }
        }
    }
}

/// Fully factorized variational family: one independent factor per
/// coordinate. Cross-coordinate covariance is zero by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldFamily {
    factors: Vec<Factor>,
}

impl MeanFieldFamily {
    /// Builds a family, validating every factor.
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::config("mean-field family needs at least one factor"));
        }
        for f in &factors {
            f.validate()?;
        }
        Ok(Self { factors })
    }

    /// Number of coordinates.
    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    /// The factors in coordinate order.
    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// Per-coordinate means.
    pub fn mean_vec(&self) -> Vec<f64> {
        self.factors.iter().map(Factor::mean).collect()
    }

    /// Joint log-density (sum of factor log-densities).
    pub fn log_density(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.factors.len() {
            return Err(Error::dims(format!(
                "point has dim {}, family has {}",
                theta.len(),
                self.factors.len()
            )));
        }
        Ok(self.factors.iter().zip(theta).map(|(f, &x)| f.log_density(x)).sum())
    }

    /// Draws one joint sample.
    pub fn sample(&self, rng: &mut crate::rng::TaskRng) -> Vec<f64> {
        self.factors.iter().map(|f| f.sample(rng)).collect()
    }
}

/// Symbolic description of a supported conditionally conjugate joint.
///
/// Coordinate layout of the matching mean-field family:
/// - `NormalKnownVariance`: `[mu]` (one normal factor);
/// - `NormalGamma`: `[mu, tau]` (normal, gamma) where `tau` is the
///   observation precision;
/// - `GaussianRandomEffects`: `[phi, x_1, ..., x_n]` (all normal) with
///   `y_i | x_i ~ N(x_i, obs_var)`, `x_i | phi ~ N(phi, latent_var)`,
///   `phi ~ N(prior_mean, prior_var)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConjugateModelSpec {
    /// Unknown mean, known observation variance, Gaussian prior on the mean.
    NormalKnownVariance { obs_var: f64, prior_mean: f64, prior_var: f64 },
    /// Unknown mean and precision with the conjugate normal-gamma prior:
    /// `tau ~ Gamma(a0, b0)`, `mu | tau ~ N(mu0, 1/(kappa0 tau))`.
    NormalGamma { mu0: f64, kappa0: f64, a0: f64, b0: f64 },
    /// One global mean with per-observation latent effects.
    GaussianRandomEffects { prior_mean: f64, prior_var: f64, latent_var: f64, obs_var: f64 },
}

impl ConjugateModelSpec {
    /// Validates the fixed hyperparameters.
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ConjugateModelSpec::NormalKnownVariance { obs_var, prior_mean, prior_var } => {
                obs_var > 0.0 && obs_var.is_finite() && prior_mean.is_finite() && prior_var > 0.0 && prior_var.is_finite()
            }
            ConjugateModelSpec::NormalGamma { mu0, kappa0, a0, b0 } => {
                mu0.is_finite() && kappa0 > 0.0 && kappa0.is_finite() && a0 > 0.0 && a0.is_finite() && b0 > 0.0 && b0.is_finite()
            }
            ConjugateModelSpec::GaussianRandomEffects { prior_mean, prior_var, latent_var, obs_var } => {
                prior_mean.is_finite() && prior_var > 0.0 && prior_var.is_finite() && latent_var > 0.0 && latent_var.is_finite() && obs_var > 0.0 && obs_var.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid hyperparameters in {self:?}")))
        }
    }

    /// Number of variational coordinates for a dataset of length `n`.
    pub fn family_dim(&self, n: usize) -> usize {
        match self {
            ConjugateModelSpec::NormalKnownVariance { .. } => 1,
            ConjugateModelSpec::NormalGamma { .. } => 2,
            ConjugateModelSpec::GaussianRandomEffects { .. } => 1 + n,
        }
    }

    /// A broad default starting family for `cavi`.
    pub fn default_family(&self, y: &[f64]) -> MeanFieldFamily {
        let factors = match *self {
            ConjugateModelSpec::NormalKnownVariance { prior_mean, prior_var, .. } => {
                vec![Factor::Normal { mean: prior_mean, var: prior_var }]
            }
            ConjugateModelSpec::NormalGamma { mu0, a0, b0, .. } => {
                vec![Factor::Normal { mean: mu0, var: 1.0 }, Factor::Gamma { shape: a0, rate: b0 }]
            }
            ConjugateModelSpec::GaussianRandomEffects { prior_mean, prior_var, .. } => {
                let mut f = vec![Factor::Normal { mean: prior_mean, var: prior_var }];
                f.extend(y.iter().map(|&yi| Factor::Normal { mean: yi, var: 1.0 }));
                f
            }
        };
        MeanFieldFamily { factors }
    }

    /// Log joint density `log p(y, theta)` with `theta` laid out as the
    /// matching mean-field family.
    pub fn log_joint(&self, y: &[f64], theta: &[f64]) -> Result<f64> {
        if theta.len() != self.family_dim(y.len()) {
            return Err(Error::dims(format!(
                "theta has dim {}, model expects {}",
                theta.len(),
                self.family_dim(y.len())
            )));
        }
        let v = match *self {
            ConjugateModelSpec::NormalKnownVariance { obs_var, prior_mean, prior_var } => {
                let mu = theta[0];
                stats::normal_logpdf(mu, prior_mean, prior_var)
                    + y.iter().map(|&yi| stats::normal_logpdf(yi, mu, obs_var)).sum::<f64>()
            }
            ConjugateModelSpec::NormalGamma { mu0, kappa0, a0, b0 } => {
                let (mu, tau) = (theta[0], theta[1]);
                if tau <= 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                let prior_tau = a0 * b0.ln() - ln_gamma(a0) + (a0 - 1.0) * tau.ln() - b0 * tau;
                prior_tau
                    + stats::normal_logpdf(mu, mu0, 1.0 / (kappa0 * tau))
                    + y.iter().map(|&yi| stats::normal_logpdf(yi, mu, 1.0 / tau)).sum::<f64>()
            }
            ConjugateModelSpec::GaussianRandomEffects { prior_mean, prior_var, latent_var, obs_var } => {
                let phi = theta[0];
                let xs = &theta[1..];
                stats::normal_logpdf(phi, prior_mean, prior_var)
                    + xs.iter().map(|&x| stats::normal_logpdf(x, phi, latent_var)).sum::<f64>()
                    + y.iter()
                        .zip(xs)
                        .map(|(&yi, &xi)| stats::normal_logpdf(yi, xi, obs_var))
                        .sum::<f64>()
            }
        };
        Ok(v)
    }

    fn check_family(&self, n: usize, q: &MeanFieldFamily) -> Result<()> {
        if q.dim() != self.family_dim(n) {
            return Err(Error::dims(format!(
                "family has {} factors, model expects {}",
                q.dim(),
                self.family_dim(n)
            )));
        }
        let shape_ok = match self {
            ConjugateModelSpec::NormalKnownVariance { .. } => {
                matches!(q.factors[0], Factor::Normal { .. })
            }
            ConjugateModelSpec::NormalGamma { .. } => {
                matches!(q.factors[0], Factor::Normal { .. })
                    && matches!(q.factors[1], Factor::Gamma { .. })
            }
            ConjugateModelSpec::GaussianRandomEffects { .. } => {
                q.factors.iter().all(|f| matches!(f, Factor::Normal { .. }))
            }
        };
        if shape_ok {
            Ok(())
        } else {
            Err(Error::config("family factor kinds do not match the model"))
        }
    }
}

/// An evidence-lower-bound value with provenance.
#[derive(Clone, Copy, Debug)]
pub struct ElboEstimate {
    /// The bound (exact or estimated).
    pub value: f64,
    /// Monte Carlo standard error (absent on the analytic path).
    pub std_error: Option<f64>,
    /// True when computed in closed form.
    pub analytic: bool,
}

/// Closed-form ELBO `E_q[log p(y, theta)] - E_q[log q(theta)]` for a
/// supported model/family pair.
pub fn elbo_analytic(
    spec: &ConjugateModelSpec,
    y: &[f64],
    q: &MeanFieldFamily,
) -> Result<ElboEstimate> {
    spec.validate()?;
    require_data(y)?;
    spec.check_family(y.len(), q)?;
    let n = y.len() as f64;
    let value = match *spec {
        ConjugateModelSpec::NormalKnownVariance { obs_var, prior_mean, prior_var } => {
            let Factor::Normal { mean: m, var: v } = q.factors[0] else { unreachable!() };
            let fit: f64 = y.iter().map(|&yi| (yi - m).powi(2)).sum::<f64>() + n * v;
            let e_logp = -0.5 * n * (stats::LN_2PI + obs_var.ln()) - fit / (2.0 * obs_var)
                - 0.5 * (stats::LN_2PI + prior_var.ln())
                - ((m - prior_mean).powi(2) + v) / (2.0 * prior_var);
            let e_logq = -0.5 * (stats::LN_2PI + v.ln()) - 0.5;
            e_logp - e_logq
        }
        ConjugateModelSpec::NormalGamma { mu0, kappa0, a0, b0 } => {
            let Factor::Normal { mean: m, var: v } = q.factors[0] else { unreachable!() };
            let Factor::Gamma { shape: a, rate: b } = q.factors[1] else { unreachable!() };
            let e_tau = a / b;
            let e_lntau = digamma(a) - b.ln();
            let t_prior_tau = a0 * b0.ln() - ln_gamma(a0) + (a0 - 1.0) * e_lntau - b0 * e_tau;
            let t_prior_mu = 0.5 * (kappa0.ln() - stats::LN_2PI) + 0.5 * e_lntau
                - 0.5 * kappa0 * e_tau * ((m - mu0).powi(2) + v);
            let fit: f64 = y.iter().map(|&yi| (yi - m).powi(2)).sum::<f64>() + n * v;
            let t_lik = 0.5 * n * (e_lntau - stats::LN_2PI) - 0.5 * e_tau * fit;
            let e_logq_mu = -0.5 * (stats::LN_2PI + v.ln()) - 0.5;
            let e_logq_tau = a * b.ln() - ln_gamma(a) + (a - 1.0) * (digamma(a) - b.ln()) - a;
            t_prior_tau + t_prior_mu + t_lik - e_logq_mu - e_logq_tau
        }
        ConjugateModelSpec::GaussianRandomEffects { prior_mean, prior_var, latent_var, obs_var } => {
            let Factor::Normal { mean: m_phi, var: v_phi } = q.factors[0] else { unreachable!() };
            let mut e_logp = -0.5 * (stats::LN_2PI + prior_var.ln())
                - ((m_phi - prior_mean).powi(2) + v_phi) / (2.0 * prior_var);
            let mut e_logq = -0.5 * (stats::LN_2PI + v_phi.ln()) - 0.5;
            for (i, &yi) in y.iter().enumerate() {
                let Factor::Normal { mean: mi, var: vi } = q.factors[1 + i] else { unreachable!() };
                e_logp += -0.5 * (stats::LN_2PI + latent_var.ln())
                    - ((mi - m_phi).powi(2) + vi + v_phi) / (2.0 * latent_var);
                e_logp += -0.5 * (stats::LN_2PI + obs_var.ln())
                    - ((yi - mi).powi(2) + vi) / (2.0 * obs_var);
                e_logq += -0.5 * (stats::LN_2PI + vi.ln()) - 0.5;
            }
            e_logp - e_logq
        }
    };
    if !value.is_finite() {
        return Err(Error::non_finite("analytic ELBO"));
    }
    Ok(ElboEstimate { value, std_error: None, analytic: true })
}

/// Monte Carlo ELBO: the mean of `log_joint(theta) - log q(theta)` over
/// `n_mc` draws from `q`.
///
/// Errors when the joint log-density is non-finite at any draw.
pub fn elbo_mc(
    log_joint: &dyn Fn(&[f64]) -> f64,
    q: &MeanFieldFamily,
    n_mc: usize,
    seed: StreamSeed,
) -> Result<ElboEstimate> {
    if n_mc == 0 {
        return Err(Error::config("n_mc must be >= 1"));
    }
    let mut rng = seed.rng();
    let mut vals = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let theta = q.sample(&mut rng);
        let lp = log_joint(&theta);
        if !lp.is_finite() {
            return Err(Error::non_finite(format!(
                "joint log-density at a variational draw (got {lp})"
            )));
        }
        vals.push(lp - q.log_density(&theta)?);
    }
    let mean = vals.iter().sum::<f64>() / n_mc as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_mc.max(2) - 1) as f64;
    let se = (var / n_mc as f64).sqrt();
    Ok(ElboEstimate { value: mean, std_error: Some(se), analytic: false })
}

/// One full ascending coordinate sweep (global factor first).
fn cavi_sweep(spec: &ConjugateModelSpec, y: &[f64], q: &mut MeanFieldFamily) {
    let n = y.len() as f64;
    match *spec {
        ConjugateModelSpec::NormalKnownVariance { obs_var, prior_mean, prior_var } => {
            let sum_y: f64 = y.iter().sum();
            let prec = 1.0 / prior_var + n / obs_var;
            let v = 1.0 / prec;
            let m = v * (prior_mean / prior_var + sum_y / obs_var);
            q.factors[0] = Factor::Normal { mean: m, var: v };
        }
        ConjugateModelSpec::NormalGamma { mu0, kappa0, a0, b0 } => {
            let Factor::Gamma { shape: a, rate: b } = q.factors[1] else { unreachable!() };
            let e_tau = a / b;
            let ybar = y.iter().sum::<f64>() / n;
            let v = 1.0 / ((kappa0 + n) * e_tau);
            let m = (kappa0 * mu0 + n * ybar) / (kappa0 + n);
            q.factors[0] = Factor::Normal { mean: m, var: v };

            let fit: f64 = y.iter().map(|&yi| (yi - m).powi(2)).sum::<f64>() + n * v;
            let a_new = a0 + (n + 1.0) / 2.0;
            let b_new = b0 + 0.5 * (kappa0 * ((m - mu0).powi(2) + v) + fit);
            q.factors[1] = Factor::Gamma { shape: a_new, rate: b_new };
        }
        ConjugateModelSpec::GaussianRandomEffects { prior_mean, prior_var, latent_var, obs_var } => {
            let sum_mx: f64 = (1..q.factors.len()).map(|i| q.factors[i].mean()).sum();
            let prec_phi = 1.0 / prior_var + n / latent_var;
            let v_phi = 1.0 / prec_phi;
            let m_phi = (prior_mean / prior_var + sum_mx / latent_var) / prec_phi;
            q.factors[0] = Factor::Normal { mean: m_phi, var: v_phi };

            let prec_x = 1.0 / latent_var + 1.0 / obs_var;
            let v_x = 1.0 / prec_x;
            for (i, &yi) in y.iter().enumerate() {
                let m_x = (m_phi / latent_var + yi / obs_var) / prec_x;
                q.factors[1 + i] = Factor::Normal { mean: m_x, var: v_x };
            }
        }
    }
}

/// Coordinate-ascent variational inference.
///
/// Sweeps the factors in ascending order until the relative ELBO change
/// drops below `rel_tol` or `max_iter` sweeps elapse. Returns the family and
/// the per-sweep ELBO trace (closed form). A trace decrease beyond
/// floating-point slack is reported as a numerical error — the updates are
/// exact coordinate maximizers, so a decrease means a bug or an invalid
/// starting family.
pub fn cavi(
    spec: &ConjugateModelSpec,
    y: &[f64],
    init: Option<&MeanFieldFamily>,
    max_iter: usize,
    rel_tol: f64,
) -> Result<(MeanFieldFamily, Vec<f64>)> {
    spec.validate()?;
    require_data(y)?;
    if max_iter == 0 {
        return Err(Error::config("max_iter must be >= 1"));
    }
    if !(rel_tol.is_finite() && rel_tol > 0.0) {
        return Err(Error::config(format!("rel_tol must be positive, got {rel_tol}")));
    }
    let mut q = match init {
        Some(f) => {
            spec.check_family(y.len(), f)?;
            f.clone()
        }
        None => spec.default_family(y),
    };

    let mut trace = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for _ in 0..max_iter {
        cavi_sweep(spec, y, &mut q);
        let e = elbo_analytic(spec, y, &q)?.value;
        if e.is_nan() {
            return Err(Error::non_finite("ELBO during coordinate ascent"));
        }
        if e < last - ELBO_SLACK {
            return Err(Error::numerical(format!(
                "ELBO decreased from {last} to {e}; coordinate updates must be monotone"
            )));
        }
        trace.push(e);
        let denom = last.abs().max(1e-12);
        let done = last.is_finite() && ((e - last).abs() / denom < rel_tol);
        last = e;
        if done {
            break;
        }
    }
    Ok((q, trace))
}

/// Step-size schedule for [`svi`].
#[derive(Clone, Copy, Debug)]
pub enum SviSchedule {
    /// `rho_t = (t + tau)^(-kappa)` with `kappa` in (0.5, 1] and `tau >= 0`.
    PowerLaw { kappa: f64, tau: f64 },
    /// Fixed step size in (0, 1].
    Constant { rho: f64 },
}

impl SviSchedule {
    fn validate(&self) -> Result<()> {
        match *self {
            SviSchedule::PowerLaw { kappa, tau } => {
                if !(kappa > 0.5 && kappa <= 1.0) || !(tau >= 0.0 && tau.is_finite()) {
                    return Err(Error::config(format!(
                        "power-law schedule needs kappa in (0.5, 1] and tau >= 0, got kappa {kappa}, tau {tau}"
                    )));
                }
            }
            SviSchedule::Constant { rho } => {
                if !(rho > 0.0 && rho <= 1.0) {
                    return Err(Error::config(format!(
                        "constant step size must be in (0, 1], got {rho}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Step size at step `t` (1-based).
    pub fn rho(&self, t: usize) -> f64 {
        match *self {
            SviSchedule::PowerLaw { kappa, tau } => (t as f64 + tau).powf(-kappa),
            SviSchedule::Constant { rho } => rho,
        }
    }
}

/// One recorded stochastic-update step.
#[derive(Clone, Copy, Debug)]
pub struct SviStep {
    /// Global natural parameters after the step.
    pub lambda: [f64; 2],
    /// The intermediate full-batch-scaled estimate the step blended toward.
    pub lambda_hat: [f64; 2],
    /// Step size used.
    pub rho: f64,
}

/// Result of a stochastic variational run.
#[derive(Clone, Debug)]
pub struct SviOutput {
    /// Final global natural parameters.
    pub lambda: [f64; 2],
    /// The implied Gaussian factor for the global mean.
    pub global: Factor,
    /// Per-step trace.
    pub trace: Vec<SviStep>,
}

/// Stochastic variational inference for the random-effects model.
///
/// The global factor is the Gaussian on `phi`, parameterized by natural
/// parameters `lambda = (lambda_1, lambda_2)` with
/// `q(phi) = N(lambda_1 latent_var / lambda_2, latent_var / lambda_2)`.
/// Each step samples one observation uniformly, computes its local factor in
/// closed form, forms the `n`-scaled intermediate estimate
/// `lambda_hat = alpha + n (E[x_i]/latent_var, 1)`, and blends
/// `lambda <- (1 - rho_t) lambda + rho_t lambda_hat`.
pub fn svi(
    spec: &ConjugateModelSpec,
    y: &[f64],
    schedule: &SviSchedule,
    epochs: usize,
    seed: StreamSeed,
) -> Result<SviOutput> {
    spec.validate()?;
    require_data(y)?;
    schedule.validate()?;
    if epochs == 0 {
        return Err(Error::config("epochs must be >= 1"));
    }
    let ConjugateModelSpec::GaussianRandomEffects { prior_mean, prior_var, latent_var, obs_var } =
        *spec
    else {
        return Err(Error::config(
            "stochastic updates are only implemented for the random-effects model",
        ));
    };

    let n = y.len();
    let alpha = [prior_mean / prior_var, latent_var / prior_var];
    let mut lambda = alpha;
    let mut rng = seed.rng();
    let total = epochs * n;
    let mut trace = Vec::with_capacity(total);
    for t in 1..=total {
        let i = rng.random_range(0..n);
        // Current global mean from the natural parameters.
        let m_phi = lambda[0] * latent_var / lambda[1];
        // Closed-form local factor for x_i given the global mean.
        let prec_x = 1.0 / latent_var + 1.0 / obs_var;
        let m_x = (m_phi / latent_var + y[i] / obs_var) / prec_x;
        let lambda_hat = [alpha[0] + n as f64 * m_x / latent_var, alpha[1] + n as f64];
        let rho = schedule.rho(t);
        lambda[0] = (1.0 - rho) * lambda[0] + rho * lambda_hat[0];
        lambda[1] = (1.0 - rho) * lambda[1] + rho * lambda_hat[1];
        trace.push(SviStep { lambda, lambda_hat, rho });
    }
    let global = Factor::Normal {
        mean: lambda[0] * latent_var / lambda[1],
        var: latent_var / lambda[1],
    };
    Ok(SviOutput { lambda, global, trace })
}

/// Closed-form KL divergence `KL[q || p]` from an all-Gaussian mean-field
/// family to a full multivariate Gaussian.
///
/// Zero exactly when the means match and `p`'s covariance is diagonal with
/// the factor variances; strictly positive whenever `p` carries correlation
/// the factorized family cannot represent.
pub fn kl_mean_field_gaussian(
    q: &MeanFieldFamily,
    p_mean: &[f64],
    p_cov: &DMatrix<f64>,
) -> Result<f64> {
    let k = q.dim();
    if p_mean.len() != k || p_cov.nrows() != k || p_cov.ncols() != k {
        return Err(Error::dims(format!(
            "family dim {k} vs target mean {} / cov {}x{}",
            p_mean.len(),
            p_cov.nrows(),
            p_cov.ncols()
        )));
    }
    let mut q_var = DVector::zeros(k);
    let mut delta = DVector::zeros(k);
    for (j, f) in q.factors().iter().enumerate() {
        let Factor::Normal { mean, var } = *f else {
            return Err(Error::config("KL diagnostic requires an all-Gaussian family"));
        };
        q_var[j] = var;
        delta[j] = p_mean[j] - mean;
    }
    let chol = stats::cholesky_or_err(p_cov.clone(), "target covariance")?;
    let ln_det_p = stats::ln_det_from_cholesky(&chol);
    let ln_det_q: f64 = q_var.iter().map(|v| v.ln()).sum();
    let trace_term = chol.solve(&DMatrix::from_diagonal(&q_var)).trace();
    let maha = (delta.transpose() * chol.solve(&DMatrix::from_column_slice(k, 1, delta.as_slice())))[0];
    let kl = 0.5 * (trace_term + maha - k as f64 + ln_det_p - ln_det_q);
    Ok(kl.max(0.0))
}

fn require_data(y: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::config("dataset must not be empty"));
    }
    stats::ensure_all_finite(y, "observations")
}
