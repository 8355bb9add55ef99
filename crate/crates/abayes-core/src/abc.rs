//! Approximate Bayesian computation: rejection, MCMC, and sequential Monte
//! Carlo samplers, plus post-hoc regression adjustment and an information
//! bound on the cost of a chosen summary.
//!
//! All samplers share one metric abstraction ([`DistanceMetric`]): either a
//! standardized summary distance or a full-data distance on scalar
//! observations. Tolerances come from a [`ToleranceRule`], fixed or
//! quantile-based.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::Distribution;
use rayon::prelude::*;

use crate::distances;
use crate::error::{Error, Result};
use crate::model::{Dataset, DrawsMeta, ParamVec, SimulatorModel, WeightedDraws};
use crate::rng::StreamSeed;
use crate::stats;
use crate::summaries::{compute_summary, SummaryFn, SummaryScale};

/// How the acceptance tolerance is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ToleranceRule {
    /// Accept distances `d <= eps` for a fixed `eps`.
    Fixed(f64),
    /// Keep the `ceil(q * budget)` smallest distances; the realized
    /// tolerance is the largest accepted distance.
    Quantile(f64),
}

impl ToleranceRule {
    fn validate(&self) -> Result<()> {
        match *self {
            ToleranceRule::Fixed(eps) => {
                if !(eps.is_finite() && eps >= 0.0) {
                    return Err(Error::config(format!(
                        "fixed tolerance must be finite and >= 0, got {eps}"
                    )));
                }
            }
            ToleranceRule::Quantile(q) => {
                if !(q > 0.0 && q <= 1.0) {
                    return Err(Error::config(format!(
                        "tolerance quantile must be in (0, 1], got {q}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The full-data distance family (scalar observations).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FullDataDistance {
    /// First Wasserstein distance on the observations.
    Wasserstein,
    /// Two-sample Cramér-von Mises discrepancy.
    CramerVonMises,
    /// Squared maximum mean discrepancy (V-statistic form) under a Gaussian
    /// kernel. `bandwidth: None` applies the median heuristic per
    /// comparison.
    Mmd { bandwidth: Option<f64> },
    /// Energy distance.
    Energy,
}

/// Distance between observed and simulated data.
#[derive(Clone)]
pub enum DistanceMetric {
    /// Standardized Euclidean distance between summary vectors.
    Summary { summary: Arc<dyn SummaryFn>, scale: SummaryScale },
    /// A full-data distance on the scalar observation column. When the
    /// simulator produces a random record count, `count_scale` (if set)
    /// adds `|n_obs - n_sim| / count_scale` so the record count itself
    /// informs the fit; empty simulated datasets are then handled by that
    /// term alone.
    FullData { kind: FullDataDistance, count_scale: Option<f64> },
}

impl std::fmt::Debug for DistanceMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DistanceMetric::Summary { summary, scale } => f
                .debug_struct("Summary")
                .field("summary", &summary.name())
                .field("scale", scale)
                .finish(),
            DistanceMetric::FullData { kind, count_scale } => f
                .debug_struct("FullData")
                .field("kind", kind)
                .field("count_scale", count_scale)
                .finish(),
        }
    }
}

/// Configuration for ABC rejection and the pilot phases of the other ABC
/// samplers.
#[derive(Clone, Debug)]
pub struct AbcConfig {
    /// Number of prior-predictive simulations.
    pub budget: usize,
    /// Tolerance selection rule.
    pub tolerance: ToleranceRule,
    /// Discrepancy metric.
    pub metric: DistanceMetric,
}

impl AbcConfig {
    fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::config("ABC budget must be >= 1"));
        }
        self.tolerance.validate()?;
        if let DistanceMetric::Summary { summary, scale } = &self.metric {
            if summary.dim() != scale.dim() {
                return Err(Error::dims(format!(
                    "summary '{}' has {} components but scale has {}",
                    summary.name(),
                    summary.dim(),
                    scale.dim()
                )));
            }
        }
        if let DistanceMetric::FullData { count_scale: Some(cs), .. } = &self.metric {
            if !(cs.is_finite() && *cs > 0.0) {
                return Err(Error::config(format!("count_scale must be positive, got {cs}")));
            }
        }
        Ok(())
    }
}

/// Precomputed view of the observed data under a metric.
pub(crate) struct MetricEval<'a> {
    metric: &'a DistanceMetric,
    observed_summary: Option<Vec<f64>>,
    observed_scalar: Option<Vec<f64>>,
}

impl<'a> MetricEval<'a> {
    pub(crate) fn new(metric: &'a DistanceMetric, observed: &Dataset) -> Result<Self> {
        match metric {
            DistanceMetric::Summary { summary, .. } => {
                if observed.is_empty() {
                    return Err(Error::degenerate("observed dataset is empty".to_string()));
                }
                Ok(MetricEval {
                    metric,
                    observed_summary: Some(compute_summary(summary.as_ref(), observed)?),
                    observed_scalar: None,
                })
            }
            DistanceMetric::FullData { .. } => {
                let col = observed.scalar_view()?.to_vec();
                if col.is_empty() {
                    return Err(Error::degenerate("observed dataset is empty".to_string()));
                }
                Ok(MetricEval { metric, observed_summary: None, observed_scalar: Some(col) })
            }
        }
    }

    /// Distance to a simulated dataset; also returns the simulated summary
    /// when the metric is summary-based (consumed by regression adjustment).
    pub(crate) fn distance(&self, simulated: &Dataset) -> Result<(f64, Option<Vec<f64>>)> {
        match self.metric {
            DistanceMetric::Summary { summary, scale } => {
                let s = compute_summary(summary.as_ref(), simulated)?;
                let d = crate::summaries::summary_distance(
                    self.observed_summary.as_ref().expect("set at construction"),
                    &s,
                    scale,
                )?;
                Ok((d, Some(s)))
            }
            DistanceMetric::FullData { kind, count_scale } => {
                let obs = self.observed_scalar.as_ref().expect("set at construction");
                let sim = simulated.scalar_view()?;
                let count_term = match count_scale {
                    Some(cs) => (obs.len() as f64 - sim.len() as f64).abs() / cs,
                    None => 0.0,
                };
                if sim.is_empty() {
                    return if count_scale.is_some() {
                        Ok((count_term, None))
                    } else {
                        Err(Error::degenerate(
                            "simulated dataset is empty and no count_scale is configured"
                                .to_string(),
                        ))
                    };
                }
                let core = match kind {
                    FullDataDistance::Wasserstein => distances::wasserstein_1d(obs, sim)?,
                    FullDataDistance::CramerVonMises => distances::cramer_von_mises(obs, sim)?,
                    FullDataDistance::Mmd { bandwidth } => {
                        let bw = match bandwidth {
                            Some(b) => *b,
                            None => distances::median_heuristic_bandwidth(obs, sim)?,
                        };
                        distances::mmd_v(obs, sim, bw)?
                    }
                    FullDataDistance::Energy => distances::energy_distance(obs, sim)?,
                };
                Ok((core + count_term, None))
            }
        }
    }

    fn keeps_summaries(&self) -> bool {
        matches!(self.metric, DistanceMetric::Summary { .. })
    }
}

/// Output of [`abc_reject`].
#[derive(Clone, Debug)]
pub struct RejectionOutput {
    /// Accepted draws, equal weights, with their distances.
    pub draws: WeightedDraws,
    /// Summary vectors of the accepted simulations (summary metrics only).
    pub accepted_summaries: Option<Vec<Vec<f64>>>,
    /// Summary vector of the observed data (summary metrics only).
    pub observed_summary: Option<Vec<f64>>,
    /// Tolerance actually applied (the realized quantile for quantile rules).
    pub realized_tolerance: f64,
    /// Accepted fraction of the budget.
    pub acceptance_rate: f64,
}

/// ABC rejection sampling.
///
/// Simulates `cfg.budget` parameter/dataset pairs from the prior
/// predictive, computes the distance of each to the observed data, and
/// keeps draws per the tolerance rule. Simulation `i` uses its own random
/// stream, so output is reproducible for a fixed seed at any thread count.
pub fn abc_reject(
    model: &dyn SimulatorModel,
    observed: &Dataset,
    cfg: &AbcConfig,
    seed: StreamSeed,
) -> Result<RejectionOutput> {
    cfg.validate()?;
    let eval = MetricEval::new(&cfg.metric, observed)?;
    let theta_seed = seed.child(0);
    let sim_seed = seed.child(1);
    let keep_summaries = eval.keeps_summaries();

    let sims: Vec<Result<(ParamVec, f64, Option<Vec<f64>>)>> = (0..cfg.budget)
        .into_par_iter()
        .map(|i| {
            let mut rng = theta_seed.stream(i as u64).rng();
            let theta = model.prior().sample(&mut rng);
            let z = model.simulate(&theta, sim_seed.stream(i as u64))?;
            let (d, s) = eval.distance(&z)?;
            Ok((theta, d, if keep_summaries { s } else { None }))
        })
        .collect();

    let mut thetas = Vec::with_capacity(cfg.budget);
    let mut dists = Vec::with_capacity(cfg.budget);
    let mut sums: Vec<Option<Vec<f64>>> = Vec::with_capacity(cfg.budget);
    for r in sims {
        let (t, d, s) = r?;
        if !d.is_finite() {
            return Err(Error::non_finite("simulated distance is not finite".to_string()));
        }
        thetas.push(t);
        dists.push(d);
        sums.push(s);
    }

    let accepted_idx: Vec<usize> = match cfg.tolerance {
        ToleranceRule::Fixed(eps) => {
            let idx: Vec<usize> =
                (0..cfg.budget).filter(|&i| dists[i] <= eps).collect();
            if idx.is_empty() {
                return Err(Error::degenerate(format!(
                    "no draws accepted at fixed tolerance {eps} within budget {}",
                    cfg.budget
                )));
            }
            idx
        }
        ToleranceRule::Quantile(q) => {
            let keep = ((q * cfg.budget as f64).ceil() as usize).clamp(1, cfg.budget);
            let mut order: Vec<usize> = (0..cfg.budget).collect();
            // Stable tie-break on the simulation index keeps the accepted
            // set deterministic even with tied distances.
            order.sort_unstable_by(|&a, &b| {
                dists[a].total_cmp(&dists[b]).then(a.cmp(&b))
            });
            order.truncate(keep);
            order.sort_unstable();
            order
        }
    };

    let realized_tolerance = match cfg.tolerance {
        ToleranceRule::Fixed(eps) => eps,
        ToleranceRule::Quantile(_) => accepted_idx
            .iter()
            .map(|&i| dists[i])
            .fold(f64::NEG_INFINITY, f64::max),
    };
    let acceptance_rate = accepted_idx.len() as f64 / cfg.budget as f64;

    let accepted_summaries = if keep_summaries {
        Some(
            accepted_idx
                .iter()
                .map(|&i| sums[i].clone().expect("stored for summary metrics"))
                .collect(),
        )
    } else {
        None
    };
    let draws = WeightedDraws::equal_weight(
        accepted_idx.iter().map(|&i| thetas[i].clone()).collect(),
        Some(accepted_idx.iter().map(|&i| dists[i]).collect()),
        DrawsMeta {
            method: "abc_reject".to_string(),
            tolerance: Some(realized_tolerance),
            acceptance_rate: Some(acceptance_rate),
            flags: Vec::new(),
        },
    )?;
    Ok(RejectionOutput {
        draws,
        accepted_summaries,
        observed_summary: eval.observed_summary.clone(),
        realized_tolerance,
        acceptance_rate,
    })
}

/// Output of the Markov chain ABC and synthetic-likelihood samplers.
#[derive(Clone, Debug)]
pub struct ChainOutput {
    /// The chain states in order, equal weights.
    pub draws: WeightedDraws,
    /// Accepted moves divided by proposals.
    pub acceptance_rate: f64,
}

/// ABC-MCMC: a random-walk Metropolis chain targeting the ABC posterior at
/// a fixed tolerance.
///
/// A pilot rejection run (using `cfg` verbatim) fixes the tolerance — the
/// realized quantile for quantile rules — and the chain starts from the
/// pilot draw with the smallest distance. Each iteration proposes
/// `theta* = theta + N(0, diag(proposal_sd^2))`, simulates one fresh
/// dataset at `theta*`, and accepts iff the prior-ratio Metropolis test
/// passes **and** the fresh dataset lies within the tolerance.
pub fn abc_mcmc(
    model: &dyn SimulatorModel,
    observed: &Dataset,
    cfg: &AbcConfig,
    proposal_sd: &[f64],
    chain_length: usize,
    seed: StreamSeed,
) -> Result<ChainOutput> {
    cfg.validate()?;
    validate_proposal_sd(proposal_sd, model.param_dim())?;
    if chain_length == 0 {
        return Err(Error::config("chain_length must be >= 1"));
    }
    let eval = MetricEval::new(&cfg.metric, observed)?;

    // Pilot rejection fixes the tolerance and the starting state.
    let pilot = abc_reject(model, observed, cfg, seed.child(0))?;
    let eps = pilot.realized_tolerance;
    let pd = pilot.draws.distances().expect("rejection always records distances");
    let start_idx = (0..pilot.draws.len())
        .min_by(|&a, &b| pd[a].total_cmp(&pd[b]))
        .expect("non-empty by construction");
    let mut current = pilot.draws.draws()[start_idx].clone();
    let mut current_lp = model.prior().log_density(&current)?;
    let mut current_d = pd[start_idx];

    let mut chain_rng = seed.child(1).rng();
    let sim_seed = seed.child(2);
    let normal = rand_distr::StandardNormal;

    let mut states = Vec::with_capacity(chain_length);
    let mut dists = Vec::with_capacity(chain_length);
    let mut accepted = 0usize;
    for i in 0..chain_length {
        let prop: Vec<f64> = current
            .as_slice()
            .iter()
            .zip(proposal_sd)
            .map(|(&x, &s)| {
                let z: f64 = normal.sample(&mut chain_rng);
                x + s * z
            })
            .collect();
        let u: f64 = chain_rng.random();
        let theta_star = ParamVec::new(prop)?;
        let lp_star = model.prior().log_density(&theta_star)?;
        // Proposals outside the prior support can never be accepted, and
        // simulators need not handle parameters outside that support.
        if lp_star.is_finite() {
            // One fresh dataset per proposal (the pseudo-marginal form of
            // the acceptance test).
            let z = model.simulate(&theta_star, sim_seed.stream(i as u64))?;
            let (d_star, _) = eval.distance(&z)?;
            let mh_pass = u.ln() < lp_star - current_lp;
            if mh_pass && d_star <= eps {
                current = theta_star;
                current_lp = lp_star;
                current_d = d_star;
                accepted += 1;
            }
        }
        states.push(current.clone());
        dists.push(current_d);
    }
    let acceptance_rate = accepted as f64 / chain_length as f64;
    let draws = WeightedDraws::equal_weight(
        states,
        Some(dists),
        DrawsMeta {
            method: "abc_mcmc".to_string(),
            tolerance: Some(eps),
            acceptance_rate: Some(acceptance_rate),
            flags: Vec::new(),
        },
    )?;
    Ok(ChainOutput { draws, acceptance_rate })
}

/// Stopping rule for [`abc_smc`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SmcStop {
    /// Stop once the round tolerance reaches this target.
    TargetTolerance(f64),
    /// Stop after the first round whose acceptance rate falls below this.
    MinAcceptRate(f64),
}

/// Configuration for [`abc_smc`].
#[derive(Clone, Debug)]
pub struct SmcConfig {
    /// Particles per population (>= 2).
    pub n_particles: usize,
    /// Tolerance decay quantile: each round's tolerance is this quantile of
    /// the previous population's distances.
    pub quantile: f64,
    /// Perturbation kernel covariance multiplier (2.0 by default: twice the
    /// weighted population covariance).
    pub kernel_scale: f64,
    /// Stopping rule.
    pub stop: SmcStop,
    /// Initial tolerance. `None` computes the `quantile` level of a pilot
    /// prior-predictive run of size `ceil(n_particles / quantile)`;
    /// `Some(f64::INFINITY)` makes the initial population a plain prior
    /// sample.
    pub initial_tolerance: Option<f64>,
    /// Hard cap on perturbation rounds (safety backstop).
    pub max_rounds: usize,
    /// Discrepancy metric.
    pub metric: DistanceMetric,
}

/// Per-round progress record.
#[derive(Clone, Copy, Debug)]
pub struct SmcRound {
    /// Tolerance applied this round.
    pub tolerance: f64,
    /// Particles accepted divided by proposal attempts.
    pub acceptance_rate: f64,
    /// Effective sample size of the round's weights.
    pub ess: f64,
}

/// Output of [`abc_smc`].
#[derive(Clone, Debug)]
pub struct SmcOutput {
    /// Final weighted population with distances.
    pub draws: WeightedDraws,
    /// Round-by-round tolerances, acceptance rates, and weight ESS.
    pub rounds: Vec<SmcRound>,
    /// Tolerance of the final population.
    pub final_tolerance: f64,
}

/// ABC sequential Monte Carlo (population Monte Carlo scheme).
///
/// The initial population comes from rejection at the initial tolerance.
/// Each later round resamples by weight, perturbs with a Gaussian kernel
/// whose covariance is `kernel_scale` times the weighted population
/// covariance, accepts within the shrinking tolerance, and reweights by
/// prior density over kernel mixture density. Rounds stop per `cfg.stop`
/// (or at `max_rounds`).
pub fn abc_smc(
    model: &dyn SimulatorModel,
    observed: &Dataset,
    cfg: &SmcConfig,
    seed: StreamSeed,
) -> Result<SmcOutput> {
    if cfg.n_particles < 2 {
        return Err(Error::config("SMC needs at least two particles"));
    }
    if !(cfg.quantile > 0.0 && cfg.quantile < 1.0) {
        return Err(Error::config(format!(
            "SMC quantile must be in (0, 1), got {}",
            cfg.quantile
        )));
    }
    if !(cfg.kernel_scale.is_finite() && cfg.kernel_scale > 0.0) {
        return Err(Error::config(format!(
            "kernel_scale must be positive, got {}",
            cfg.kernel_scale
        )));
    }
    match cfg.stop {
        // +inf is a valid target: the schedule stops right after the initial
        // population, which is useful for prior-sanity runs.
        SmcStop::TargetTolerance(t) if t.is_nan() || t < 0.0 => {
            return Err(Error::config(format!("target tolerance must be >= 0, got {t}")));
        }
        SmcStop::MinAcceptRate(r) if !(r > 0.0 && r <= 1.0) => {
            return Err(Error::config(format!("min acceptance rate must be in (0, 1], got {r}")));
        }
        _ => {}
    }
    let eval = MetricEval::new(&cfg.metric, observed)?;
    let dim = model.param_dim();

    // ---- Initial population -------------------------------------------
    let init_tol = match cfg.initial_tolerance {
        Some(t) if t.is_nan() || t < 0.0 => {
            return Err(Error::config(format!("initial tolerance must be >= 0, got {t}")));
        }
        Some(t) => t,
        None => {
            // Pilot prior-predictive run to set the first tolerance.
            let pilot_n = (cfg.n_particles as f64 / cfg.quantile).ceil() as usize;
            let pilot_theta = seed.child(100);
            let pilot_sim = seed.child(101);
            let pilot: Vec<Result<f64>> = (0..pilot_n)
                .into_par_iter()
                .map(|i| {
                    let mut rng = pilot_theta.stream(i as u64).rng();
                    let theta = model.prior().sample(&mut rng);
                    let z = model.simulate(&theta, pilot_sim.stream(i as u64))?;
                    Ok(eval.distance(&z)?.0)
                })
                .collect();
            let mut ds = pilot.into_iter().collect::<Result<Vec<f64>>>()?;
            stats::sort_floats(&mut ds);
            let k = ((cfg.quantile * ds.len() as f64).ceil() as usize).clamp(1, ds.len());
            ds[k - 1]
        }
    };

    let init_seed = seed.child(0);
    let init: Vec<Result<(ParamVec, f64, usize)>> = (0..cfg.n_particles)
        .into_par_iter()
        .map(|slot| {
            let local = init_seed.stream(slot as u64);
            let mut rng = local.rng();
            let sim_base = local.child(1);
            for attempt in 0..MAX_ATTEMPTS_PER_PARTICLE {
                let theta = model.prior().sample(&mut rng);
                let z = model.simulate(&theta, sim_base.stream(attempt))?;
                let (d, _) = eval.distance(&z)?;
                if d <= init_tol {
                    return Ok((theta, d, attempt as usize + 1));
                }
            }
            Err(Error::degenerate(format!(
                "SMC initialization: no acceptance within {MAX_ATTEMPTS_PER_PARTICLE} attempts at tolerance {init_tol}"
            )))
        })
        .collect();
    let mut particles = Vec::with_capacity(cfg.n_particles);
    let mut dists = Vec::with_capacity(cfg.n_particles);
    let mut attempts_total = 0usize;
    for r in init {
        let (t, d, a) = r?;
        particles.push(t);
        dists.push(d);
        attempts_total += a;
    }
    let mut weights = vec![1.0 / cfg.n_particles as f64; cfg.n_particles];
    let mut rounds = vec![SmcRound {
        tolerance: init_tol,
        acceptance_rate: cfg.n_particles as f64 / attempts_total as f64,
        ess: cfg.n_particles as f64,
    }];
    let mut current_tol = init_tol;

    // ---- Perturbation rounds ------------------------------------------
    for round in 0..cfg.max_rounds {
        if let SmcStop::TargetTolerance(t) = cfg.stop {
            if current_tol <= t {
                break;
            }
        }
        // Next tolerance: the decay quantile of the current distances,
        // floored at the target when one is set.
        let mut sorted = dists.clone();
        stats::sort_floats(&mut sorted);
        let k = ((cfg.quantile * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        let mut next_tol = sorted[k - 1];
        if let SmcStop::TargetTolerance(t) = cfg.stop {
            next_tol = next_tol.max(t);
        }

        // Perturbation kernel: kernel_scale times the weighted covariance.
        let points: Vec<Vec<f64>> = particles.iter().map(|p| p.as_slice().to_vec()).collect();
        let (_, mut cov) = stats::weighted_mean_and_cov(&points, &weights);
        cov *= cfg.kernel_scale;
        let chol = Cholesky::new(cov.clone()).ok_or_else(|| {
            Error::degenerate(format!(
                "SMC round {}: particle population has singular covariance",
                round + 1
            ))
        })?;
        let cumw = cumulative(&weights);

        let round_seed = seed.child(1 + round as u64);
        let prev_particles = particles.clone();
        let prev_weights = weights.clone();
        let results: Vec<Result<(ParamVec, f64, f64, usize)>> = (0..cfg.n_particles)
            .into_par_iter()
            .map(|slot| {
                let local = round_seed.stream(slot as u64);
                let mut rng = local.rng();
                let sim_base = local.child(1);
                let normal = rand_distr::StandardNormal;
                for attempt in 0..MAX_ATTEMPTS_PER_PARTICLE {
                    let j = pick_index(&cumw, rng.random());
                    let z: DVector<f64> =
                        DVector::from_fn(dim, |_, _| normal.sample(&mut rng));
                    let step = chol.l() * z;
                    let prop: Vec<f64> = prev_particles[j]
                        .as_slice()
                        .iter()
                        .zip(step.iter())
                        .map(|(&x, &s)| x + s)
                        .collect();
                    let theta = ParamVec::new(prop)?;
                    let lp = model.prior().log_density(&theta)?;
                    if lp == f64::NEG_INFINITY {
                        continue;
                    }
                    let zdata = model.simulate(&theta, sim_base.stream(attempt))?;
                    let (d, _) = eval.distance(&zdata)?;
                    if d <= next_tol {
                        // Weight: prior density over kernel mixture density.
                        let tv = DVector::from_column_slice(theta.as_slice());
                        let mut mix = Vec::with_capacity(prev_particles.len());
                        for (p, &w) in prev_particles.iter().zip(&prev_weights) {
                            let pv = DVector::from_column_slice(p.as_slice());
                            mix.push(w.ln() + stats::mvn_logpdf(&tv, &pv, &chol));
                        }
                        let log_w = lp - stats::logsumexp(&mix);
                        return Ok((theta, d, log_w, attempt as usize + 1));
                    }
                }
                Err(Error::degenerate(format!(
                    "SMC round {}: no acceptance within {MAX_ATTEMPTS_PER_PARTICLE} attempts at tolerance {next_tol}",
                    round + 1
                )))
            })
            .collect();

        let mut new_particles = Vec::with_capacity(cfg.n_particles);
        let mut new_dists = Vec::with_capacity(cfg.n_particles);
        let mut log_weights = Vec::with_capacity(cfg.n_particles);
        let mut attempts = 0usize;
        for r in results {
            let (t, d, lw, a) = r?;
            new_particles.push(t);
            new_dists.push(d);
            log_weights.push(lw);
            attempts += a;
        }
        let lse = stats::logsumexp(&log_weights);
        let new_weights: Vec<f64> = log_weights.iter().map(|lw| (lw - lse).exp()).collect();
        let ess = 1.0 / new_weights.iter().map(|w| w * w).sum::<f64>();
        if ess < 2.0 {
            return Err(Error::degenerate(format!(
                "SMC round {}: weight ESS {ess:.3} fell below 2",
                round + 1
            )));
        }
        let acceptance_rate = cfg.n_particles as f64 / attempts as f64;
        particles = new_particles;
        dists = new_dists;
        weights = new_weights;
        current_tol = next_tol;
        rounds.push(SmcRound { tolerance: next_tol, acceptance_rate, ess });

        match cfg.stop {
            SmcStop::TargetTolerance(t) => {
                if current_tol <= t {
                    break;
                }
            }
            SmcStop::MinAcceptRate(r) => {
                if acceptance_rate < r {
                    break;
                }
            }
        }
    }

    let draws = WeightedDraws::new(
        particles,
        weights,
        Some(dists),
        DrawsMeta {
            method: "abc_smc".to_string(),
            tolerance: Some(current_tol),
            acceptance_rate: rounds.last().map(|r| r.acceptance_rate),
            flags: Vec::new(),
        },
    )?;
    Ok(SmcOutput { draws, rounds, final_tolerance: current_tol })
}

const MAX_ATTEMPTS_PER_PARTICLE: u64 = 1_000_000;

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn pick_index(cumw: &[f64], u: f64) -> usize {
    let target = u * cumw.last().copied().unwrap_or(1.0);
    match cumw.binary_search_by(|c| c.total_cmp(&target)) {
        Ok(i) => (i + 1).min(cumw.len() - 1),
        Err(i) => i.min(cumw.len() - 1),
    }
}

pub(crate) fn validate_proposal_sd(proposal_sd: &[f64], dim: usize) -> Result<()> {
    if proposal_sd.len() != dim {
        return Err(Error::dims(format!(
            "proposal_sd has {} components but the model has {dim} parameters",
            proposal_sd.len()
        )));
    }
    if proposal_sd.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::config(
            "proposal standard deviations must be positive and finite".to_string(),
        ));
    }
    Ok(())
}

/// Linear regression adjustment of accepted ABC draws.
///
/// Fits, per parameter coordinate, a weighted linear regression of the
/// accepted draws on the summary discrepancies `eta(z_i) - eta(y)` and
/// shifts each draw to the observed summary:
/// `theta_i - beta' (eta(z_i) - eta(y))`. Weights and distances carry over.
/// A singular normal-equations matrix falls back to ridge regression
/// (lambda = 1e-8 times the trace) and records a flag in the metadata.
pub fn regression_adjust(
    draws: &WeightedDraws,
    simulated_summaries: &[Vec<f64>],
    observed_summary: &[f64],
) -> Result<WeightedDraws> {
    let n = draws.len();
    if simulated_summaries.len() != n {
        return Err(Error::dims(format!(
            "{n} draws but {} summary vectors",
            simulated_summaries.len()
        )));
    }
    let k = observed_summary.len();
    if k == 0 {
        return Err(Error::config("observed summary is empty"));
    }
    if simulated_summaries.iter().any(|s| s.len() != k) {
        return Err(Error::dims("summary vectors have inconsistent lengths".to_string()));
    }
    stats::ensure_all_finite(observed_summary, "observed summary")?;
    if n <= k + 1 {
        return Err(Error::degenerate(format!(
            "regression adjustment needs more draws ({n}) than regressors ({})",
            k + 1
        )));
    }

    // Design matrix with intercept; rows weighted by the draw weights.
    let w = draws.weights();
    let mut xtx: DMatrix<f64> = DMatrix::zeros(k + 1, k + 1);
    let mut xty: DMatrix<f64> = DMatrix::zeros(k + 1, draws.dim());
    let mut diffs = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(k + 1);
        row.push(1.0);
        for j in 0..k {
            row.push(simulated_summaries[i][j] - observed_summary[j]);
        }
        stats::ensure_all_finite(&row, "summary discrepancy")?;
        for a in 0..=k {
            for b in 0..=k {
                xtx[(a, b)] += w[i] * row[a] * row[b];
            }
            for c in 0..draws.dim() {
                xty[(a, c)] += w[i] * row[a] * draws.draws()[i].get(c);
            }
        }
        diffs.push(row);
    }

    let mut flags = draws.meta().flags.clone();
    let chol = match Cholesky::new(xtx.clone()) {
        Some(c) => c,
        None => {
            let lambda = 1e-8 * xtx.trace();
            for d in 0..=k {
                xtx[(d, d)] += lambda;
            }
            flags.push("regression_ridge_fallback".to_string());
            Cholesky::new(xtx).ok_or_else(|| {
                Error::numerical(
                    "regression adjustment: normal equations singular even after ridge"
                        .to_string(),
                )
            })?
        }
    };
    let beta = chol.solve(&xty); // (k+1) x p

    let mut adjusted = Vec::with_capacity(n);
    for i in 0..n {
        let mut t = draws.draws()[i].as_slice().to_vec();
        for (c, tv) in t.iter_mut().enumerate() {
            let mut shift = 0.0;
            for j in 0..k {
                shift += beta[(j + 1, c)] * diffs[i][j + 1];
            }
            *tv -= shift;
        }
        adjusted.push(ParamVec::new(t)?);
    }

    WeightedDraws::new(
        adjusted,
        w.to_vec(),
        draws.distances().map(|d| d.to_vec()),
        DrawsMeta {
            method: format!("{}+adjusted", draws.meta().method),
            tolerance: draws.meta().tolerance,
            acceptance_rate: draws.meta().acceptance_rate,
            flags,
        },
    )
}

/// Upper bound on the information lost by conditioning on a summary
/// instead of the full data, from the two Fisher information matrices:
/// `0.5 [ ln(det I_eta / det I) - p + tr(I_eta^{-1} I) ]`.
///
/// Both matrices must be symmetric positive definite. The bound is zero
/// exactly when `I_eta = I` (no information lost at first order).
pub fn kl_sufficiency_bound(i_full: &DMatrix<f64>, i_summary: &DMatrix<f64>) -> Result<f64> {
    let p = i_full.nrows();
    if i_full.ncols() != p || i_summary.nrows() != p || i_summary.ncols() != p {
        return Err(Error::dims(format!(
            "information matrices must both be {p} x {p}"
        )));
    }
    for (name, m) in [("full-data", i_full), ("summary", i_summary)] {
        for a in 0..p {
            for b in 0..p {
                if !m[(a, b)].is_finite() {
                    return Err(Error::non_finite(format!(
                        "{name} information matrix has a non-finite entry"
                    )));
                }
                if (m[(a, b)] - m[(b, a)]).abs() > 1e-10 * (1.0 + m[(a, b)].abs()) {
                    return Err(Error::config(format!(
                        "{name} information matrix is not symmetric"
                    )));
                }
            }
        }
    }
    let chol_full = stats::cholesky_or_err(i_full.clone(), "full-data information")?;
    let chol_sum = stats::cholesky_or_err(i_summary.clone(), "summary information")?;
    let ln_det_full = stats::ln_det_from_cholesky(&chol_full);
    let ln_det_sum = stats::ln_det_from_cholesky(&chol_sum);
    let trace = chol_sum.solve(i_full).trace();
    Ok(0.5 * (ln_det_sum - ln_det_full - p as f64 + trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MarginalPrior, PriorSpec};
    use approx::assert_relative_eq;

    /// Bernoulli(theta) with three trials, reported as a scalar column.
    struct BernoulliTriple {
        prior: PriorSpec,
    }

    impl BernoulliTriple {
        fn new() -> Self {
            BernoulliTriple {
                prior: PriorSpec::new(vec![MarginalPrior::Uniform { low: 0.0, high: 1.0 }])
                    .unwrap(),
            }
        }
    }

    impl SimulatorModel for BernoulliTriple {
        fn param_dim(&self) -> usize {
            1
        }
        fn prior(&self) -> &PriorSpec {
            &self.prior
        }
        fn simulate(&self, theta: &ParamVec, seed: StreamSeed) -> Result<Dataset> {
            let mut rng = seed.rng();
            let p = theta.get(0);
            let vals: Vec<f64> =
                (0..3).map(|_| if rng.random::<f64>() < p { 1.0 } else { 0.0 }).collect();
            Dataset::from_column(vals)
        }
    }

    fn wasserstein_cfg(budget: usize, tol: ToleranceRule) -> AbcConfig {
        AbcConfig {
            budget,
            tolerance: tol,
            metric: DistanceMetric::FullData {
                kind: FullDataDistance::Wasserstein,
                count_scale: None,
            },
        }
    }

    /// Exact-match rejection on the Bernoulli toy reproduces the known
    /// closed-form posterior shape theta^2 (1 - theta).
    #[test]
    fn rejection_exact_match_bernoulli_density() {
        let model = BernoulliTriple::new();
        let y = Dataset::from_column(vec![1.0, 1.0, 0.0]).unwrap();
        let cfg = wasserstein_cfg(200_000, ToleranceRule::Fixed(0.0));
        let out = abc_reject(&model, &y, &cfg, StreamSeed::new(17)).unwrap();
        // Normalized histogram vs the exact density 12 theta^2 (1 - theta).
        let bins = 20;
        let mut hist = vec![0.0; bins];
        for (d, w) in out.draws.draws().iter().zip(out.draws.weights()) {
            let b = ((d.get(0) * bins as f64) as usize).min(bins - 1);
            hist[b] += w;
        }
        let mut tv = 0.0;
        for b in 0..bins {
            let lo = b as f64 / bins as f64;
            let hi = (b + 1) as f64 / bins as f64;
            let exact = 4.0 * (hi.powi(3) - lo.powi(3)) - 3.0 * (hi.powi(4) - lo.powi(4));
            tv += 0.5 * (hist[b] - exact).abs();
        }
        assert!(tv < 0.02, "TV distance to exact posterior too large: {tv}");
    }

    #[test]
    fn rejection_quantile_keeps_exact_count() {
        let model = BernoulliTriple::new();
        let y = Dataset::from_column(vec![1.0, 1.0, 0.0]).unwrap();
        let cfg = wasserstein_cfg(1000, ToleranceRule::Quantile(0.0123));
        let out = abc_reject(&model, &y, &cfg, StreamSeed::new(3)).unwrap();
        assert_eq!(out.draws.len(), (0.0123f64 * 1000.0).ceil() as usize);
        assert_relative_eq!(out.acceptance_rate, 13.0 / 1000.0, epsilon = 1e-15);
    }

    #[test]
    fn rejection_nested_acceptance_for_shrinking_tolerance() {
        let model = BernoulliTriple::new();
        let y = Dataset::from_column(vec![1.0, 1.0, 0.0]).unwrap();
        let seed = StreamSeed::new(5);
        let loose = abc_reject(&model, &y, &wasserstein_cfg(2000, ToleranceRule::Quantile(0.2)), seed)
            .unwrap();
        let tight = abc_reject(&model, &y, &wasserstein_cfg(2000, ToleranceRule::Quantile(0.05)), seed)
            .unwrap();
        // Same seed, same simulations: the tighter acceptance set nests
        // inside the looser one.
        let loose_set: std::collections::HashSet<u64> = loose
            .draws
            .draws()
            .iter()
            .map(|d| d.get(0).to_bits())
            .collect();
        assert!(tight
            .draws
            .draws()
            .iter()
            .all(|d| loose_set.contains(&d.get(0).to_bits())));
        assert!(tight.realized_tolerance <= loose.realized_tolerance);
    }

    #[test]
    fn rejection_fixed_zero_acceptances_errors() {
        let model = BernoulliTriple::new();
        // Observed data no Bernoulli triple can match at distance 0.
        let y = Dataset::from_column(vec![0.5, 0.5, 0.5]).unwrap();
        let cfg = wasserstein_cfg(200, ToleranceRule::Fixed(0.0));
        assert!(matches!(
            abc_reject(&model, &y, &cfg, StreamSeed::new(1)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn rejection_is_thread_count_invariant() {
        let model = BernoulliTriple::new();
        let y = Dataset::from_column(vec![1.0, 1.0, 0.0]).unwrap();
        let cfg = wasserstein_cfg(4000, ToleranceRule::Quantile(0.05));
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| abc_reject(&model, &y, &cfg, StreamSeed::new(8)).unwrap())
        };
        let single = run(1);
        let multi = run(4);
        assert_eq!(single.draws.draws(), multi.draws.draws());
        assert_eq!(single.realized_tolerance, multi.realized_tolerance);
    }

    #[test]
    fn mcmc_requires_positive_proposal_sd() {
        let model = BernoulliTriple::new();
        let y = Dataset::from_column(vec![1.0, 1.0, 0.0]).unwrap();
        let cfg = wasserstein_cfg(500, ToleranceRule::Quantile(0.1));
        assert!(abc_mcmc(&model, &y, &cfg, &[0.0], 100, StreamSeed::new(2)).is_err());
    }

    #[test]
    fn smc_infinite_initial_tolerance_is_prior_sample() {
        let model = BernoulliTriple::new();
        let y = Dataset::from_column(vec![1.0, 1.0, 0.0]).unwrap();
        let cfg = SmcConfig {
            n_particles: 3000,
            quantile: 0.5,
            kernel_scale: 2.0,
            stop: SmcStop::TargetTolerance(f64::INFINITY),
            initial_tolerance: Some(f64::INFINITY),
            max_rounds: 5,
            metric: DistanceMetric::FullData {
                kind: FullDataDistance::Wasserstein,
                count_scale: None,
            },
        };
        let out = abc_smc(&model, &y, &cfg, StreamSeed::new(4)).unwrap();
        // Stops immediately: one (initial) round, uniform weights, and the
        // first moment matches the uniform prior closely.
        assert_eq!(out.rounds.len(), 1);
        let mean: f64 = out
            .draws
            .draws()
            .iter()
            .zip(out.draws.weights())
            .map(|(d, w)| d.get(0) * w)
            .sum();
        assert!((mean - 0.5).abs() < 0.03, "prior-sample mean {mean} far from 0.5");
    }

    #[test]
    fn regression_adjust_recovers_exact_linear_relation() {
        // theta_i = 2 + 3 * s_i with s_obs = 0: adjusted draws are all 2.
        let draws: Vec<ParamVec> = (0..10)
            .map(|i| ParamVec::new(vec![2.0 + 3.0 * (i as f64 - 5.0)]).unwrap())
            .collect();
        let sums: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 - 5.0]).collect();
        let wd = WeightedDraws::equal_weight(draws, None, DrawsMeta::default()).unwrap();
        let adj = regression_adjust(&wd, &sums, &[0.0]).unwrap();
        for d in adj.draws() {
            assert_relative_eq!(d.get(0), 2.0, epsilon = 1e-10);
        }
        // Weights survive the adjustment up to renormalization round-off.
        for (a, b) in adj.weights().iter().zip(wd.weights()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn regression_adjust_singular_design_sets_ridge_flag() {
        // Constant summary component: the design matrix is rank deficient.
        let draws: Vec<ParamVec> =
            (0..8).map(|i| ParamVec::new(vec![i as f64]).unwrap()).collect();
        let sums: Vec<Vec<f64>> = (0..8).map(|_| vec![1.0]).collect();
        let wd = WeightedDraws::equal_weight(draws, None, DrawsMeta::default()).unwrap();
        let adj = regression_adjust(&wd, &sums, &[1.0]).unwrap();
        assert!(adj.meta().flags.iter().any(|f| f == "regression_ridge_fallback"));
    }

    #[test]
    fn kl_bound_scalar_example() {
        let i_full = DMatrix::from_element(1, 1, 1.0);
        let i_sum = DMatrix::from_element(1, 1, 0.5);
        let b = kl_sufficiency_bound(&i_full, &i_sum).unwrap();
        assert_relative_eq!(b, 0.5 * (1.0 - 2.0f64.ln()), epsilon = 1e-12);
        // Equal information: bound is exactly zero.
        assert_relative_eq!(
            kl_sufficiency_bound(&i_full, &i_full).unwrap(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn kl_bound_rejects_non_pd() {
        let bad = DMatrix::from_element(1, 1, -1.0);
        let ok = DMatrix::from_element(1, 1, 1.0);
        assert!(kl_sufficiency_bound(&bad, &ok).is_err());
        assert!(kl_sufficiency_bound(&ok, &bad).is_err());
    }
}
