//! Synthetic likelihood: Gaussian approximation of the summary distribution
//! estimated from model simulations, plus a random-walk Metropolis sampler
//! built on it.
//!
//! At a parameter value `theta`, `m` simulated datasets are summarized and a
//! sample mean / covariance pair is fitted; the observed summary is then
//! scored under that Gaussian. The sampler retains the log-likelihood
//! estimate attached to the current state and never re-estimates it — the
//! chain is a pseudo-marginal method and refreshing the retained value would
//! change its target.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Distribution;
use rayon::prelude::*;

use crate::abc::{validate_proposal_sd, ChainOutput};
use crate::error::{Error, Result};
use crate::model::{Dataset, DrawsMeta, ParamVec, SimulatorModel, WeightedDraws};
use crate::rng::StreamSeed;
use crate::stats;
use crate::summaries::{compute_summary, SummaryFn};

/// Default number of simulations per synthetic-likelihood estimate.
pub const DEFAULT_M: usize = 50;

/// Relative diagonal jitter applied when the sample covariance is not
/// positive definite (absolute when the diagonal is exactly zero).
const JITTER_REL: f64 = 1e-10;

/// Estimated Gaussian approximation of the summary distribution at one
/// parameter value.
#[derive(Clone, Debug)]
pub struct SyntheticLikelihood {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    m: usize,
    flags: Vec<String>,
}

impl SyntheticLikelihood {
    /// Sample mean of the simulated summaries.
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Sample covariance (1/(m-1) normalization), jittered if needed.
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Number of simulations behind the estimate.
    pub fn n_simulations(&self) -> usize {
        self.m
    }

    /// Numerical-fallback flags raised while estimating (e.g. diagonal
    /// jitter on a degenerate covariance).
    pub fn flags(&self) -> &[String] {
        &self.flags
    }
}

/// Estimates the summary mean and covariance at `theta` from `m` fresh
/// simulations.
///
/// Requires `m >= summary.dim() + 2` so the sample covariance is almost
/// surely nonsingular for continuous summaries. If the Cholesky
/// factorization of the sample covariance fails, a diagonal jitter of
/// `1e-10 * mean(diag)` (or `1e-10` when the diagonal is exactly zero) is
/// added and the result flagged `covariance_jitter_applied`; a covariance
/// that is still not positive definite is an error.
///
/// Simulations run concurrently on indexed seed streams, so the result does
/// not depend on the number of threads.
pub fn estimate_synthetic_likelihood(
    model: &dyn SimulatorModel,
    summary: &dyn SummaryFn,
    theta: &ParamVec,
    m: usize,
    seed: StreamSeed,
) -> Result<SyntheticLikelihood> {
    let k = summary.dim();
    if m < k + 2 {
        return Err(Error::config(format!(
            "synthetic likelihood needs m >= summary dim + 2 (= {}), got m = {m}",
            k + 2
        )));
    }
    let sums: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let z = model.simulate(theta, seed.stream(j as u64))?;
            compute_summary(summary, &z)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut mean = DVector::zeros(k);
    for s in &sums {
        for (j, &v) in s.iter().enumerate() {
            mean[j] += v;
        }
    }
    mean /= m as f64;

    let mut cov: DMatrix<f64> = DMatrix::zeros(k, k);
    for s in &sums {
        let d = DVector::from_iterator(k, s.iter().enumerate().map(|(j, &v)| v - mean[j]));
        cov += &d * d.transpose();
    }
    cov /= (m - 1) as f64;

    let mut flags = Vec::new();
    if cov.clone().cholesky().is_none() {
        let mean_diag = cov.diagonal().sum() / k as f64;
        let jitter = if mean_diag > 0.0 { JITTER_REL * mean_diag } else { JITTER_REL };
        for j in 0..k {
            cov[(j, j)] += jitter;
        }
        flags.push("covariance_jitter_applied".to_string());
        if cov.clone().cholesky().is_none() {
            return Err(Error::numerical(
                "summary covariance not positive definite even after diagonal jitter",
            ));
        }
    }
    Ok(SyntheticLikelihood { mean, cov, m, flags })
}

/// Log-density of the observed summary under the estimated Gaussian.
pub fn synthetic_loglik(sl: &SyntheticLikelihood, s_obs: &[f64]) -> Result<f64> {
    if s_obs.len() != sl.mean.len() {
        return Err(Error::dims(format!(
            "observed summary has length {}, estimate has {}",
            s_obs.len(),
            sl.mean.len()
        )));
    }
    stats::ensure_all_finite(s_obs, "observed summary")?;
    let chol = stats::cholesky_or_err(sl.cov.clone(), "synthetic-likelihood covariance")?;
    Ok(stats::mvn_logpdf(&DVector::from_column_slice(s_obs), &sl.mean, &chol))
}

/// Configuration for [`bsl_mcmc`].
#[derive(Clone, Debug)]
pub struct BslConfig {
    /// Simulations per synthetic-likelihood estimate (default [`DEFAULT_M`]).
    pub m: usize,
    /// Number of Metropolis iterations.
    pub chain_length: usize,
    /// Per-coordinate random-walk standard deviations.
    pub proposal_sd: Vec<f64>,
    /// Optional starting point; a prior draw when absent.
    pub init: Option<ParamVec>,
}

/// Random-walk Metropolis targeting the synthetic-likelihood posterior.
///
/// Each iteration simulates `cfg.m` datasets at the proposal and scores the
/// observed summary under the fitted Gaussian; the acceptance ratio uses the
/// *retained* estimate for the current state. Proposals with zero prior
/// density are rejected without spending simulations.
pub fn bsl_mcmc(
    model: &dyn SimulatorModel,
    observed: &Dataset,
    summary: &dyn SummaryFn,
    cfg: &BslConfig,
    seed: StreamSeed,
) -> Result<ChainOutput> {
    bsl_chain(model, observed, summary, cfg, seed, false)
}

/// Label for the re-estimation seed used only by the refresh variant.
const REFRESH_LABEL: u64 = 1;

/// Chain implementation; `refresh_retained` forces re-estimation of the
/// current state's likelihood each iteration. That variant exists only so a
/// regression test can demonstrate the two policies produce different
/// chains; the public API always retains.
pub(crate) fn bsl_chain(
    model: &dyn SimulatorModel,
    observed: &Dataset,
    summary: &dyn SummaryFn,
    cfg: &BslConfig,
    seed: StreamSeed,
    refresh_retained: bool,
) -> Result<ChainOutput> {
    if cfg.chain_length == 0 {
        return Err(Error::config("chain_length must be >= 1"));
    }
    validate_proposal_sd(&cfg.proposal_sd, model.param_dim())?;
    if cfg.m < summary.dim() + 2 {
        return Err(Error::config(format!(
            "synthetic likelihood needs m >= summary dim + 2 (= {}), got m = {}",
            summary.dim() + 2,
            cfg.m
        )));
    }
    let s_obs = compute_summary(summary, observed)?;

    let mut current = match &cfg.init {
        Some(t) => {
            if t.dim() != model.param_dim() {
                return Err(Error::dims(format!(
                    "init has dim {}, model has {}",
                    t.dim(),
                    model.param_dim()
                )));
            }
            t.clone()
        }
        None => model.prior().sample(&mut seed.child(0).rng()),
    };
    let mut current_lp = model.prior().log_density(&current)?;
    if current_lp == f64::NEG_INFINITY {
        return Err(Error::config("initial point lies outside the prior support"));
    }

    let sim_root = seed.child(1);
    let mut chain_rng = seed.child(2).rng();
    let normal = rand_distr::StandardNormal;

    let mut any_jitter = false;
    let sl0 = estimate_synthetic_likelihood(model, summary, &current, cfg.m, sim_root.child(0))?;
    any_jitter |= !sl0.flags().is_empty();
    let mut current_ll = synthetic_loglik(&sl0, &s_obs)?;

    let mut states = Vec::with_capacity(cfg.chain_length);
    let mut accepted = 0usize;
    for i in 1..=cfg.chain_length {
        let prop: Vec<f64> = current
            .as_slice()
            .iter()
            .zip(&cfg.proposal_sd)
            .map(|(&x, &s)| {
                let z: f64 = normal.sample(&mut chain_rng);
                x + s * z
            })
            .collect();
        let u: f64 = chain_rng.random();
        let iter_seed = sim_root.child(i as u64);

        if refresh_retained {
            let sl_cur = estimate_synthetic_likelihood(
                model,
                summary,
                &current,
                cfg.m,
                iter_seed.child(REFRESH_LABEL),
            )?;
            any_jitter |= !sl_cur.flags().is_empty();
            current_ll = synthetic_loglik(&sl_cur, &s_obs)?;
        }

        if let Ok(theta_star) = ParamVec::new(prop) {
            let lp_star = model.prior().log_density(&theta_star)?;
            if lp_star > f64::NEG_INFINITY {
                let sl_star =
                    estimate_synthetic_likelihood(model, summary, &theta_star, cfg.m, iter_seed)?;
                any_jitter |= !sl_star.flags().is_empty();
                let ll_star = synthetic_loglik(&sl_star, &s_obs)?;
                if u.ln() < (ll_star + lp_star) - (current_ll + current_lp) {
                    current = theta_star;
                    current_lp = lp_star;
                    current_ll = ll_star;
                    accepted += 1;
                }
            }
        }
        states.push(current.clone());
    }

    let acceptance_rate = accepted as f64 / cfg.chain_length as f64;
    let mut flags = Vec::new();
    if any_jitter {
        flags.push("covariance_jitter_applied".to_string());
    }
    let draws = WeightedDraws::equal_weight(
        states,
        None,
        DrawsMeta {
            method: if refresh_retained { "bsl_refreshed".to_string() } else { "bsl".to_string() },
            tolerance: None,
            acceptance_rate: Some(acceptance_rate),
            flags,
        },
    )?;
    Ok(ChainOutput { draws, acceptance_rate })
}
