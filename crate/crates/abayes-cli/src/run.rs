//! Experiment execution: observed-data preparation and method dispatch.

use std::sync::Arc;

use abayes_core::abc::{
    abc_mcmc, abc_reject, abc_smc, regression_adjust, AbcConfig, DistanceMetric, FullDataDistance,
    SmcConfig, SmcStop, ToleranceRule,
};
use abayes_core::benchmarks::{
    ConjugateGaussianModel, FourSummary, GaussianLgm, NineSummary, NormalGammaModel, PoissonLgm,
    RandomEffectsModel, StereologicalModel,
};
use abayes_core::bsl::{bsl_mcmc, BslConfig};
use abayes_core::diagnostics::{summarize, summarize_chain, PosteriorSummary};
use abayes_core::laplace::{
    hyper_marginal_grid, latent_marginal, marginal_likelihood_laplace, GridSpec,
};
use abayes_core::model::{
    Dataset, DrawsMeta, ParamVec, SimulatorModel, WeightedDraws,
};
use abayes_core::pm::{pm_mh, LognormalNoiseEstimator, PmConfig};
use abayes_core::rng::StreamSeed;
use abayes_core::summaries::{pilot_scale, MeanAndSd, SampleMean, SummaryFn};
use abayes_core::vb::{cavi, svi, MeanFieldFamily, SviSchedule};
use rand::Rng;
use rand_distr::{Gamma as GammaDist, Normal as NormalDist};
use toml::Table;

use crate::config::{
    map_core_err, CliError, DistanceChoice, MethodSpec, ModelSpec, RuleChoice, StopChoice,
};
use crate::report::{weighted_kde, Curve};

/// A model with its synthetic observed dataset, ready to run methods on.
pub enum Prepared {
    ConjugateGaussian { model: ConjugateGaussianModel, observed: Dataset },
    NormalGamma { model: NormalGammaModel, observed: Dataset },
    RandomEffects { model: RandomEffectsModel, observed: Dataset, drawn_phi: f64 },
    GaussianLgm { bench: GaussianLgm, observed: Vec<f64> },
    PoissonLgm { bench: PoissonLgm, observed: Vec<f64> },
    Stereological { model: StereologicalModel, observed: Dataset },
}

/// Everything one method block produces.
pub struct Artifacts {
    pub draws: WeightedDraws,
    pub summary: PosteriorSummary,
    /// One density curve per inferred parameter.
    pub curves: Vec<Curve>,
    /// Extra named curves (latent marginals).
    pub extra_curves: Vec<(String, Curve)>,
    /// Extra sections merged into the summary file.
    pub summary_extras: Table,
    /// Realized run facts for the manifest (tolerance, acceptance rate,
    /// traces, evidence, pilot scales).
    pub run_extras: Table,
}

/// Simulates the observed dataset declared by the `[model]` section.
/// Returns the prepared model plus realized-data facts for the manifest.
pub fn prepare(spec: &ModelSpec) -> Result<(Prepared, Table), CliError> {
    let stage = "simulating observed data";
    let mut facts = Table::new();
    let prepared = match *spec {
        ModelSpec::ConjugateGaussian { n, obs_var, prior_mean, prior_var, true_mu, data_seed } => {
            let model = ConjugateGaussianModel::new(n, obs_var, prior_mean, prior_var)
                .map_err(map_core_err("model", stage))?;
            let observed = SimulatorModel::simulate(
                &model,
                &ParamVec::new(vec![true_mu]).map_err(map_core_err("model", stage))?,
                StreamSeed::new(data_seed),
            )
            .map_err(map_core_err("model", stage))?;
            facts.insert("data_rows".into(), (observed.n_rows() as i64).into());
            Prepared::ConjugateGaussian { model, observed }
        }
        ModelSpec::NormalGamma { n, mu0, kappa0, a0, b0, true_mu, true_sd, data_seed } => {
            let model =
                NormalGammaModel::new(mu0, kappa0, a0, b0).map_err(map_core_err("model", stage))?;
            let mut rng = StreamSeed::new(data_seed).rng();
            let noise = NormalDist::new(true_mu, true_sd)
                .map_err(|e| CliError::runtime("model", stage, e))?;
            let y: Vec<f64> = (0..n).map(|_| rng.sample(noise)).collect();
            let observed = Dataset::from_column(y).map_err(map_core_err("model", stage))?;
            facts.insert("data_rows".into(), (observed.n_rows() as i64).into());
            Prepared::NormalGamma { model, observed }
        }
        ModelSpec::RandomEffects { n, prior_mean, prior_var, latent_var, obs_var, data_seed } => {
            let model = RandomEffectsModel::new(n, prior_mean, prior_var, latent_var, obs_var)
                .map_err(map_core_err("model", stage))?;
            let (observed, drawn_phi, _latents) = model
                .simulate(StreamSeed::new(data_seed))
                .map_err(map_core_err("model", stage))?;
            facts.insert("data_rows".into(), (observed.n_rows() as i64).into());
            facts.insert("drawn_phi".into(), drawn_phi.into());
            Prepared::RandomEffects { model, observed, drawn_phi }
        }
        ModelSpec::GaussianLgm { latent_dim, noise_var, true_phi, data_seed } => {
            let bench =
                GaussianLgm::new(latent_dim, noise_var).map_err(map_core_err("model", stage))?;
            let observed = bench
                .simulate(true_phi, StreamSeed::new(data_seed))
                .map_err(map_core_err("model", stage))?;
            facts.insert("data_rows".into(), (observed.len() as i64).into());
            Prepared::GaussianLgm { bench, observed }
        }
        ModelSpec::PoissonLgm { latent_dim, true_phi, data_seed } => {
            let bench = PoissonLgm::new(latent_dim).map_err(map_core_err("model", stage))?;
            let (_latents, observed) = bench
                .simulate(true_phi, StreamSeed::new(data_seed))
                .map_err(map_core_err("model", stage))?;
            facts.insert("data_rows".into(), (observed.len() as i64).into());
            Prepared::PoissonLgm { bench, observed }
        }
        ModelSpec::Stereological { true_lambda, true_sigma, true_xi, data_seed } => {
            let model = StereologicalModel::new();
            let observed = SimulatorModel::simulate(
                &model,
                &ParamVec::new(vec![true_lambda, true_sigma, true_xi])
                    .map_err(map_core_err("model", stage))?,
                StreamSeed::new(data_seed),
            )
            .map_err(map_core_err("model", stage))?;
            facts.insert("data_rows".into(), (observed.n_rows() as i64).into());
            Prepared::Stereological { model, observed }
        }
    };
    Ok((prepared, facts))
}

impl Prepared {
    /// The simulator view, for the likelihood-free methods.
    fn simulator(&self) -> Option<(&dyn SimulatorModel, &Dataset)> {
        match self {
            Prepared::ConjugateGaussian { model, observed } => Some((model, observed)),
            Prepared::Stereological { model, observed } => Some((model, observed)),
            _ => None,
        }
    }
}

fn inapplicable(method: &str, model: &ModelSpec) -> CliError {
    CliError::config(format!(
        "method \"{method}\" is not available for model \"{}\"",
        model.name()
    ))
}

fn summary_fn(name: &str, observed: &Dataset) -> Result<Arc<dyn SummaryFn>, CliError> {
    match name {
        "mean" => Ok(Arc::new(SampleMean)),
        "mean-sd" => Ok(Arc::new(MeanAndSd)),
        "four" => Ok(Arc::new(FourSummary)),
        "nine" => {
            let nine = NineSummary::fit(observed)
                .map_err(map_core_err("summary", "fitting the nine-component summary"))?;
            Ok(Arc::new(nine))
        }
        other => Err(CliError::config(format!("unknown summary \"{other}\""))),
    }
}

/// Builds the distance metric for the ABC samplers, recording the realized
/// pilot scale (when one is estimated) into `run_extras`.
fn build_metric(
    method: &str,
    sim: &dyn SimulatorModel,
    observed: &Dataset,
    distance: &DistanceChoice,
    summary: &str,
    count_scale: Option<f64>,
    seed: StreamSeed,
    run_extras: &mut Table,
) -> Result<DistanceMetric, CliError> {
    match distance {
        DistanceChoice::Summaries { pilot } => {
            let sfn = summary_fn(summary, observed)?;
            let scale = pilot_scale(sim, sfn.as_ref(), *pilot, seed)
                .map_err(map_core_err(method, "running the pilot scale estimate"))?;
            run_extras.insert(
                "summary_scale".into(),
                toml::Value::Array(scale.values().iter().map(|&v| v.into()).collect()),
            );
            Ok(DistanceMetric::Summary { summary: sfn, scale })
        }
        DistanceChoice::Wasserstein => {
            Ok(DistanceMetric::FullData { kind: FullDataDistance::Wasserstein, count_scale })
        }
        DistanceChoice::CramerVonMises => {
            Ok(DistanceMetric::FullData { kind: FullDataDistance::CramerVonMises, count_scale })
        }
        DistanceChoice::Mmd { bandwidth } => Ok(DistanceMetric::FullData {
            kind: FullDataDistance::Mmd { bandwidth: *bandwidth },
            count_scale,
        }),
        DistanceChoice::Energy => {
            Ok(DistanceMetric::FullData { kind: FullDataDistance::Energy, count_scale })
        }
    }
}

fn rule_to_core(rule: RuleChoice) -> ToleranceRule {
    match rule {
        RuleChoice::Quantile(q) => ToleranceRule::Quantile(q),
        RuleChoice::Fixed(eps) => ToleranceRule::Fixed(eps),
    }
}

fn param_vec(method: &str, v: &[f64]) -> Result<ParamVec, CliError> {
    ParamVec::new(v.to_vec()).map_err(map_core_err(method, "validating the initial state"))
}

/// Equal-weight draws from i.i.d. sampled parameter vectors.
fn draws_from_samples(
    method: &str,
    samples: Vec<Vec<f64>>,
    label: &str,
) -> Result<WeightedDraws, CliError> {
    let stage = "collecting draws";
    let mut vecs = Vec::with_capacity(samples.len());
    for s in samples {
        vecs.push(ParamVec::new(s).map_err(map_core_err(method, stage))?);
    }
    let meta = DrawsMeta { method: label.to_string(), ..DrawsMeta::default() };
    WeightedDraws::equal_weight(vecs, None, meta).map_err(map_core_err(method, stage))
}

/// Runs one resolved method block and assembles its artifacts.
pub fn run_block(
    prep: &Prepared,
    model: &ModelSpec,
    method: &MethodSpec,
    method_name: &str,
    seed: u64,
) -> Result<Artifacts, CliError> {
    let root = StreamSeed::new(seed);
    let mut run_extras = Table::new();
    let mut summary_extras = Table::new();
    let mut extra_curves = Vec::new();

    let (draws, summary) = match method {
        MethodSpec::AbcReject { budget, rule, distance, summary, count_scale, adjust } => {
            let (sim, observed) =
                prep.simulator().ok_or_else(|| inapplicable(method_name, model))?;
            let metric = build_metric(
                method_name,
                sim,
                observed,
                distance,
                summary,
                *count_scale,
                root.child(1),
                &mut run_extras,
            )?;
            let cfg = AbcConfig { budget: *budget, tolerance: rule_to_core(*rule), metric };
            let out = abc_reject(sim, observed, &cfg, root.child(2))
                .map_err(map_core_err(method_name, "rejection sampling"))?;
            run_extras.insert("realized_tolerance".into(), out.realized_tolerance.into());
            run_extras.insert("acceptance_rate".into(), out.acceptance_rate.into());
            let final_draws = if *adjust {
                let summaries = out.accepted_summaries.as_deref().ok_or_else(|| {
                    CliError::config(format!(
                        "method {method_name}: adjust requires a summary-based distance"
                    ))
                })?;
                let obs_summary = out.observed_summary.as_deref().unwrap_or_default();
                regression_adjust(&out.draws, summaries, obs_summary)
                    .map_err(map_core_err(method_name, "regression-adjusting the draws"))?
            } else {
                out.draws
            };
            let s = summarize(&final_draws)
                .map_err(map_core_err(method_name, "summarizing the draws"))?;
            (final_draws, s)
        }
        MethodSpec::AbcMcmc { budget, rule, chain_length, proposal_sd, distance, summary, count_scale } => {
            let (sim, observed) =
                prep.simulator().ok_or_else(|| inapplicable(method_name, model))?;
            let metric = build_metric(
                method_name,
                sim,
                observed,
                distance,
                summary,
                *count_scale,
                root.child(1),
                &mut run_extras,
            )?;
            let cfg = AbcConfig { budget: *budget, tolerance: rule_to_core(*rule), metric };
            let out = abc_mcmc(sim, observed, &cfg, proposal_sd, *chain_length, root.child(2))
                .map_err(map_core_err(method_name, "running the chain"))?;
            run_extras.insert("acceptance_rate".into(), out.acceptance_rate.into());
            if let Some(eps) = out.draws.meta().tolerance {
                run_extras.insert("realized_tolerance".into(), eps.into());
            }
            let s = summarize_chain(&out.draws)
                .map_err(map_core_err(method_name, "summarizing the chain"))?;
            (out.draws, s)
        }
        MethodSpec::AbcSmc {
            n_particles,
            quantile,
            kernel_scale,
            stop,
            initial_tolerance,
            max_rounds,
            distance,
            summary,
            count_scale,
        } => {
            let (sim, observed) =
                prep.simulator().ok_or_else(|| inapplicable(method_name, model))?;
            let metric = build_metric(
                method_name,
                sim,
                observed,
                distance,
                summary,
                *count_scale,
                root.child(1),
                &mut run_extras,
            )?;
            let cfg = SmcConfig {
                n_particles: *n_particles,
                quantile: *quantile,
                kernel_scale: *kernel_scale,
                stop: match *stop {
                    StopChoice::TargetTolerance(eps) => SmcStop::TargetTolerance(eps),
                    StopChoice::MinAcceptRate(r) => SmcStop::MinAcceptRate(r),
                },
                initial_tolerance: *initial_tolerance,
                max_rounds: *max_rounds,
                metric,
            };
            let out = abc_smc(sim, observed, &cfg, root.child(2))
                .map_err(map_core_err(method_name, "running the particle rounds"))?;
            run_extras.insert("realized_tolerance".into(), out.final_tolerance.into());
            let rounds: Vec<toml::Value> = out
                .rounds
                .iter()
                .map(|r| {
                    let mut t = Table::new();
                    t.insert("tolerance".into(), r.tolerance.into());
                    t.insert("acceptance_rate".into(), r.acceptance_rate.into());
                    t.insert("ess".into(), r.ess.into());
                    toml::Value::Table(t)
                })
                .collect();
            run_extras.insert("rounds".into(), toml::Value::Array(rounds));
            let s = summarize(&out.draws)
                .map_err(map_core_err(method_name, "summarizing the draws"))?;
            (out.draws, s)
        }
        MethodSpec::Bsl { m, chain_length, proposal_sd, init, summary } => {
            let (sim, observed) =
                prep.simulator().ok_or_else(|| inapplicable(method_name, model))?;
            let sfn = summary_fn(summary, observed)?;
            let cfg = BslConfig {
                m: *m,
                chain_length: *chain_length,
                proposal_sd: proposal_sd.clone(),
                init: match init {
                    Some(v) => Some(param_vec(method_name, v)?),
                    None => None,
                },
            };
            let out = bsl_mcmc(sim, observed, sfn.as_ref(), &cfg, root.child(2))
                .map_err(map_core_err(method_name, "running the chain"))?;
            run_extras.insert("acceptance_rate".into(), out.acceptance_rate.into());
            let s = summarize_chain(&out.draws)
                .map_err(map_core_err(method_name, "summarizing the chain"))?;
            (out.draws, s)
        }
        MethodSpec::PmMh { omega, chain_length, proposal_sd, init } => {
            let Prepared::ConjugateGaussian { model: cg, observed } = prep else {
                return Err(inapplicable(method_name, model));
            };
            let cg2 = cg.clone();
            let obs2 = observed.clone();
            let loglik = move |theta: &ParamVec| {
                cg2.log_likelihood(theta, &obs2).unwrap_or(f64::NEG_INFINITY)
            };
            let estimator = LognormalNoiseEstimator::new(Box::new(loglik), *omega)
                .map_err(map_core_err(method_name, "building the likelihood estimator"))?;
            let cfg = PmConfig {
                proposal_sd: proposal_sd.clone(),
                chain_length: *chain_length,
                init: match init {
                    Some(v) => Some(param_vec(method_name, v)?),
                    None => None,
                },
            };
            let out = pm_mh(cg.prior(), &estimator, &cfg, root.child(2))
                .map_err(map_core_err(method_name, "running the chain"))?;
            run_extras.insert("acceptance_rate".into(), out.acceptance_rate.into());
            let s = summarize_chain(&out.draws)
                .map_err(map_core_err(method_name, "summarizing the chain"))?;
            (out.draws, s)
        }
        MethodSpec::Cavi { max_iter, rel_tol, n_draws } => {
            let (spec, y, keep) = match prep {
                Prepared::NormalGamma { model, observed } => {
                    (model.to_spec(), observed.as_slice().to_vec(), 2)
                }
                Prepared::RandomEffects { model, observed, .. } => {
                    (model.to_spec(), observed.as_slice().to_vec(), 1)
                }
                _ => return Err(inapplicable(method_name, model)),
            };
            let (family, trace) = cavi(&spec, &y, None, *max_iter, *rel_tol)
                .map_err(map_core_err(method_name, "coordinate ascent"))?;
            run_extras.insert(
                "elbo_trace".into(),
                toml::Value::Array(trace.iter().map(|&v| v.into()).collect()),
            );
            variational_extras(&mut summary_extras, &family);
            let draws =
                sample_family(method_name, &family, keep, *n_draws, root.child(3))?;
            let s =
                summarize(&draws).map_err(map_core_err(method_name, "summarizing the draws"))?;
            (draws, s)
        }
        MethodSpec::Svi { epochs, kappa, tau, n_draws } => {
            let Prepared::RandomEffects { model: re, observed, .. } = prep else {
                return Err(inapplicable(method_name, model));
            };
            let schedule = SviSchedule::PowerLaw { kappa: *kappa, tau: *tau };
            let out = svi(&re.to_spec(), observed.as_slice(), &schedule, *epochs, root.child(2))
                .map_err(map_core_err(method_name, "stochastic updates"))?;
            run_extras.insert(
                "natural_parameters".into(),
                toml::Value::Array(vec![out.lambda[0].into(), out.lambda[1].into()]),
            );
            run_extras.insert("steps".into(), (out.trace.len() as i64).into());
            let mut vt = Table::new();
            vt.insert("factor_means".into(), toml::Value::Array(vec![out.global.mean().into()]));
            vt.insert("factor_vars".into(), toml::Value::Array(vec![out.global.var().into()]));
            summary_extras.insert("variational".into(), toml::Value::Table(vt));
            let family = MeanFieldFamily::new(vec![out.global.clone()])
                .map_err(map_core_err(method_name, "collecting the fitted factor"))?;
            let draws = sample_family(method_name, &family, 1, *n_draws, root.child(3))?;
            let s =
                summarize(&draws).map_err(map_core_err(method_name, "summarizing the draws"))?;
            (draws, s)
        }
        MethodSpec::LaplaceInla { half_width_sd, points_per_dim, latent_marginal: want_latent, latent_index } => {
            let (lgm, y) = match prep {
                Prepared::GaussianLgm { bench, observed } => (bench.model(), observed.as_slice()),
                Prepared::PoissonLgm { bench, observed } => (bench.model(), observed.as_slice()),
                _ => return Err(inapplicable(method_name, model)),
            };
            let grid_spec = GridSpec {
                center: None,
                half_width_sd: *half_width_sd,
                points_per_dim: *points_per_dim,
            };
            let hyper = hyper_marginal_grid(&lgm, 0, &grid_spec, y)
                .map_err(map_core_err(method_name, "evaluating the hyperparameter grid"))?;
            let evidence = marginal_likelihood_laplace(&lgm, &grid_spec, y)
                .map_err(map_core_err(method_name, "integrating the evidence"))?;
            run_extras.insert("log_evidence".into(), evidence.into());
            let mut gt = Table::new();
            gt.insert("log_evidence".into(), evidence.into());
            gt.insert("hyper_grid_points".into(), (hyper.grid().len() as i64).into());
            if *want_latent {
                let lat = latent_marginal(&lgm, *latent_index, &grid_spec, y)
                    .map_err(map_core_err(method_name, "evaluating the latent marginal"))?;
                gt.insert("latent_index".into(), (*latent_index as i64).into());
                gt.insert("latent_mean".into(), lat.mean().into());
                gt.insert("latent_sd".into(), lat.sd().into());
                extra_curves.push((
                    format!("latent_{latent_index}"),
                    Curve { grid: lat.grid().to_vec(), density: lat.density().to_vec() },
                ));
            }
            summary_extras.insert("grid".into(), toml::Value::Table(gt));
            let draws = grid_to_draws(method_name, hyper.grid(), hyper.density())?;
            let s =
                summarize(&draws).map_err(map_core_err(method_name, "summarizing the grid"))?;
            (draws, s)
        }
        MethodSpec::Oracle { n_draws } => {
            let mut rng = root.child(3).rng();
            let stage = "sampling the analytic posterior";
            let samples: Vec<Vec<f64>> = match prep {
                Prepared::ConjugateGaussian { model: cg, observed } => {
                    let (mean, var) =
                        cg.posterior(observed).map_err(map_core_err(method_name, stage))?;
                    let dist = NormalDist::new(mean, var.sqrt())
                        .map_err(|e| CliError::runtime(method_name, stage, e))?;
                    (0..*n_draws).map(|_| vec![rng.sample(dist)]).collect()
                }
                Prepared::NormalGamma { model: ng, observed } => {
                    let post =
                        ng.posterior(observed).map_err(map_core_err(method_name, stage))?;
                    let gamma = GammaDist::new(post.a_n, 1.0 / post.b_n)
                        .map_err(|e| CliError::runtime(method_name, stage, e))?;
                    (0..*n_draws)
                        .map(|_| {
                            let tau: f64 = rng.sample(gamma);
                            let mu_sd = (1.0 / (post.kappa_n * tau)).sqrt();
                            let mu = post.mu_n + mu_sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
                            vec![mu, tau]
                        })
                        .collect()
                }
                Prepared::RandomEffects { model: re, observed, .. } => {
                    let (mean, var) =
                        re.phi_posterior(observed).map_err(map_core_err(method_name, stage))?;
                    let dist = NormalDist::new(mean, var.sqrt())
                        .map_err(|e| CliError::runtime(method_name, stage, e))?;
                    (0..*n_draws).map(|_| vec![rng.sample(dist)]).collect()
                }
                _ => return Err(inapplicable(method_name, model)),
            };
            let draws = draws_from_samples(method_name, samples, method_name)?;
            let s =
                summarize(&draws).map_err(map_core_err(method_name, "summarizing the draws"))?;
            (draws, s)
        }
    };

    let curves: Vec<Curve> = (0..draws.dim())
        .map(|j| weighted_kde(&draws.param_column(j), draws.weights()))
        .collect();
    // Grid methods report the exact grid density rather than a KDE of the
    // kept points.
    let curves = if let MethodSpec::LaplaceInla { .. } = method {
        vec![Curve {
            grid: draws.param_column(0),
            density: grid_density_from_draws(&draws),
        }]
    } else {
        curves
    };

    Ok(Artifacts { draws, summary, curves, extra_curves, summary_extras, run_extras })
}

/// Samples the first `keep` coordinates of a fitted mean-field family.
fn sample_family(
    method: &str,
    family: &MeanFieldFamily,
    keep: usize,
    n_draws: usize,
    seed: StreamSeed,
) -> Result<WeightedDraws, CliError> {
    let mut rng = seed.rng();
    let samples: Vec<Vec<f64>> = (0..n_draws)
        .map(|_| {
            let full = family.sample(&mut rng);
            full[..keep].to_vec()
        })
        .collect();
    draws_from_samples(method, samples, method)
}

fn variational_extras(extras: &mut Table, family: &MeanFieldFamily) {
    let mut vt = Table::new();
    vt.insert(
        "factor_means".into(),
        toml::Value::Array(family.factors().iter().map(|f| f.mean().into()).collect()),
    );
    vt.insert(
        "factor_vars".into(),
        toml::Value::Array(family.factors().iter().map(|f| f.var().into()).collect()),
    );
    extras.insert("variational".into(), toml::Value::Table(vt));
}

/// Turns a normalized grid density into weighted draws: each grid point
/// becomes a draw whose weight is its trapezoid cell mass.
fn grid_to_draws(method: &str, grid: &[f64], density: &[f64]) -> Result<WeightedDraws, CliError> {
    let stage = "collecting grid draws";
    let n = grid.len();
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let left = if i == 0 { 0.0 } else { 0.5 * (grid[i] - grid[i - 1]) };
        let right = if i + 1 == n { 0.0 } else { 0.5 * (grid[i + 1] - grid[i]) };
        weights.push(density[i] * (left + right));
    }
    let draws: Result<Vec<ParamVec>, _> = grid.iter().map(|&g| ParamVec::new(vec![g])).collect();
    let meta = DrawsMeta { method: method.to_string(), ..DrawsMeta::default() };
    WeightedDraws::new(draws.map_err(map_core_err(method, stage))?, weights, None, meta)
        .map_err(map_core_err(method, stage))
}

/// Recovers the grid density from grid-backed draws (weights are cell
/// masses, so dividing by the cell width restores the density).
fn grid_density_from_draws(draws: &WeightedDraws) -> Vec<f64> {
    let grid = draws.param_column(0);
    let w = draws.weights();
    let n = grid.len();
    (0..n)
        .map(|i| {
            let left = if i == 0 { 0.0 } else { 0.5 * (grid[i] - grid[i - 1]) };
            let right = if i + 1 == n { 0.0 } else { 0.5 * (grid[i + 1] - grid[i]) };
            let cell = left + right;
            if cell > 0.0 {
                w[i] / cell
            } else {
                0.0
            }
        })
        .collect()
}
