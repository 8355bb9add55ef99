//! Approximate Bayesian inference engines for simulator-based and
//! structured models.
//!
//! The crate provides five inference families behind one vocabulary of
//! models, draws, and diagnostics:
//!
//! * [`abc`] — approximate Bayesian computation: rejection, MCMC, and
//!   sequential Monte Carlo samplers driven by summary or full-data
//!   distances, plus linear regression adjustment of accepted draws.
//! * [`bsl`] — Bayesian synthetic likelihood: a Gaussian surrogate for the
//!   summary distribution inside a Metropolis-Hastings chain.
//! * [`vb`] — variational Bayes: coordinate-ascent and stochastic natural
//!   gradient optimization of mean-field families on conjugate models.
//! * [`laplace`] — Laplace and nested grid approximations for latent
//!   Gaussian models: conditional modes, hyperparameter grids, latent
//!   marginals, and evidence estimates.
//! * [`pm`] — pseudo-marginal Metropolis-Hastings for unbiased
//!   log-likelihood estimators.
//!
//! Supporting modules: [`model`] (parameter vectors, priors, datasets,
//! simulators, weighted draws), [`summaries`] and [`distances`] (summary
//! statistics and discrepancy metrics), [`diagnostics`] (posterior
//! summaries, effective sample size, distribution comparisons),
//! [`benchmarks`] (reference models with known answers), and [`rng`]
//! (deterministic splittable random streams).
//!
//! # Determinism
//!
//! Every sampler takes a [`rng::StreamSeed`]. Identical inputs and seed give
//! byte-identical output regardless of how many threads the ambient rayon
//! pool uses, because parallel work is keyed by stream index, not by
//! scheduling order.
//!
//! # Example
//!
//! ```
//! use abayes_core::benchmarks::ConjugateGaussianModel;
//! use abayes_core::abc::{abc_reject, AbcConfig, DistanceMetric, ToleranceRule};
//! use abayes_core::summaries::{SampleMean, SummaryScale};
//! use abayes_core::diagnostics::summarize;
//! use abayes_core::model::{ParamVec, SimulatorModel};
//! use abayes_core::rng::StreamSeed;
//! use std::sync::Arc;
//!
//! let model = ConjugateGaussianModel::new(20, 1.0, 0.0, 10.0).unwrap();
//! let y = model
//!     .simulate(&ParamVec::new(vec![1.0]).unwrap(), StreamSeed::new(7))
//!     .unwrap();
//! let cfg = AbcConfig {
//!     budget: 20_000,
//!     tolerance: ToleranceRule::Quantile(0.01),
//!     metric: DistanceMetric::Summary {
//!         summary: Arc::new(SampleMean),
//!         scale: SummaryScale::unit(1),
//!     },
//! };
//! let run = abc_reject(&model, &y, &cfg, StreamSeed::new(1)).unwrap();
//! let posterior = summarize(&run.draws).unwrap();
//! assert!(posterior.params[0].sd > 0.0);
//! ```

pub mod abc;
pub mod benchmarks;
pub mod bsl;
pub mod diagnostics;
pub mod distances;
mod error;
pub mod laplace;
pub mod model;
pub mod pm;
pub mod rng;
mod stats;
pub mod summaries;
pub mod vb;

pub use error::{Error, Result};
