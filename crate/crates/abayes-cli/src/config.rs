//! Config-file schema: parsing, validation, and default materialization.
//!
//! The file format is TOML with four sections:
//!
//! * `[experiment]` — model name, method name (run mode), seed, output
//!   directory.
//! * `[model]` — model-specific keys; every key has a default.
//! * `[method]` — method-specific keys (run mode).
//! * `[compare]` + `[[methods]]` — reference label and method blocks
//!   (compare mode).
//!
//! Validation is strict: unknown keys, type mismatches, and out-of-domain
//! values are all reported with the full key path (for example
//! `methods[1].proposal_sd`), and nothing is simulated before the whole
//! file validates.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use toml::value::Value;
use toml::Table;

/// Failures surfaced to the user, split by exit code: configuration
/// problems exit 2, runtime problems exit 3.
#[derive(Debug)]
pub enum CliError {
    /// The config file (or a CLI override) is invalid; the message names
    /// the offending key.
    Config(String),
    /// A validated experiment failed while executing; the message names
    /// the method and the stage.
    Runtime(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn runtime(method: &str, stage: &str, err: impl std::fmt::Display) -> Self {
        CliError::Runtime(format!("in {method} during {stage}: {err}"))
    }
}

/// Maps a core-library error raised while running a method: invalid-config
/// errors keep exit code 2 (the value came from the config file), anything
/// else is a runtime failure tagged with method and stage.
pub fn map_core_err(method: &str, stage: &str) -> impl '_ + FnOnce(abayes_core::Error) -> CliError {
    move |e| match e {
        abayes_core::Error::InvalidConfig(m) => {
            CliError::Config(format!("method {method}: {m}"))
        }
        other => CliError::runtime(method, stage, other),
    }
}

// ---------------------------------------------------------------------------
// Key-path-aware table reader
// ---------------------------------------------------------------------------

/// A TOML table being consumed key by key. Each getter removes its key, so
/// `finish` can reject whatever was not recognized, with full paths.
struct TableCtx {
    path: String,
    table: Table,
}

impl TableCtx {
    fn new(path: &str, table: Table) -> Self {
        TableCtx { path: path.to_string(), table }
    }

    fn key_path(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{}", self.path, key)
        }
    }

    fn take(&mut self, key: &str) -> Option<Value> {
        self.table.remove(key)
    }

    fn f64_value(&self, key: &str, v: &Value) -> Result<f64, CliError> {
        match v {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(CliError::config(format!("{} must be a number", self.key_path(key)))),
        }
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => self.f64_value(key, &v),
        }
    }

    fn opt_f64(&mut self, key: &str) -> Result<Option<f64>, CliError> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => Ok(Some(self.f64_value(key, &v)?)),
        }
    }

    fn int_value(&self, key: &str, v: &Value) -> Result<i64, CliError> {
        match v {
            Value::Integer(i) => Ok(*i),
            _ => Err(CliError::config(format!("{} must be an integer", self.key_path(key)))),
        }
    }

    fn usize_(&mut self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => {
                let i = self.int_value(key, &v)?;
                usize::try_from(i).map_err(|_| {
                    CliError::config(format!("{} must be non-negative", self.key_path(key)))
                })
            }
        }
    }

    fn u64_(&mut self, key: &str, default: u64) -> Result<u64, CliError> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => {
                let i = self.int_value(key, &v)?;
                u64::try_from(i).map_err(|_| {
                    CliError::config(format!("{} must be non-negative", self.key_path(key)))
                })
            }
        }
    }

    fn opt_u64(&mut self, key: &str) -> Result<Option<u64>, CliError> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => {
                let i = self.int_value(key, &v)?;
                u64::try_from(i)
                    .map(Some)
                    .map_err(|_| CliError::config(format!("{} must be non-negative", self.key_path(key))))
            }
        }
    }

    fn bool_(&mut self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(b),
            Some(_) => Err(CliError::config(format!("{} must be a boolean", self.key_path(key)))),
        }
    }

    fn string(&mut self, key: &str, default: &str) -> Result<String, CliError> {
        match self.take(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s),
            Some(_) => Err(CliError::config(format!("{} must be a string", self.key_path(key)))),
        }
    }

    fn opt_string(&mut self, key: &str) -> Result<Option<String>, CliError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(CliError::config(format!("{} must be a string", self.key_path(key)))),
        }
    }

    fn required_string(&mut self, key: &str) -> Result<String, CliError> {
        self.opt_string(key)?
            .ok_or_else(|| CliError::config(format!("{} is required", self.key_path(key))))
    }

    /// A number, or an array of numbers; a scalar is broadcast to `dim`.
    fn f64_vec(&mut self, key: &str, dim: usize) -> Result<Option<Vec<f64>>, CliError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for item in &items {
                    out.push(self.f64_value(key, item)?);
                }
                if out.len() != dim {
                    return Err(CliError::config(format!(
                        "{} must have {dim} entries, got {}",
                        self.key_path(key),
                        out.len()
                    )));
                }
                Ok(Some(out))
            }
            Some(v) => Ok(Some(vec![self.f64_value(key, &v)?; dim])),
        }
    }

    fn sub_table(&mut self, key: &str) -> Result<Option<TableCtx>, CliError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(TableCtx::new(&self.key_path(key), t))),
            Some(_) => Err(CliError::config(format!("{} must be a table", self.key_path(key)))),
        }
    }

    /// Errors on any keys that no getter consumed.
    fn finish(self) -> Result<(), CliError> {
        if self.table.is_empty() {
            return Ok(());
        }
        let mut keys: Vec<&String> = self.table.keys().collect();
        keys.sort();
        let mut msg = String::from("unknown key");
        if keys.len() > 1 {
            msg.push('s');
        }
        for (i, k) in keys.iter().enumerate() {
            let sep = if i == 0 { ' ' } else { ',' };
            let _ = write!(msg, "{sep}{}", self.key_path(k));
        }
        Err(CliError::Config(msg))
    }
}

fn positive(value: f64, key: &str) -> Result<f64, CliError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(CliError::config(format!("{key} must be positive and finite, got {value}")))
    }
}

fn finite(value: f64, key: &str) -> Result<f64, CliError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(CliError::config(format!("{key} must be finite, got {value}")))
    }
}

fn in_open_unit(value: f64, key: &str) -> Result<f64, CliError> {
    if value.is_finite() && value > 0.0 && value <= 1.0 {
        Ok(value)
    } else {
        Err(CliError::config(format!("{key} must lie in (0, 1], got {value}")))
    }
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

/// The built-in model names, in the order `list-models` prints them.
pub const MODEL_NAMES: [&str; 6] = [
    "conjugate-gaussian",
    "normal-gamma",
    "random-effects",
    "gaussian-lgm",
    "poisson-lgm",
    "stereological",
];

/// A fully resolved model section: every key explicit, defaults filled.
#[derive(Clone, Debug)]
pub enum ModelSpec {
    ConjugateGaussian {
        n: usize,
        obs_var: f64,
        prior_mean: f64,
        prior_var: f64,
        true_mu: f64,
        data_seed: u64,
    },
    NormalGamma {
        n: usize,
        mu0: f64,
        kappa0: f64,
        a0: f64,
        b0: f64,
        true_mu: f64,
        true_sd: f64,
        data_seed: u64,
    },
    RandomEffects {
        n: usize,
        prior_mean: f64,
        prior_var: f64,
        latent_var: f64,
        obs_var: f64,
        data_seed: u64,
    },
    GaussianLgm {
        latent_dim: usize,
        noise_var: f64,
        true_phi: f64,
        data_seed: u64,
    },
    PoissonLgm {
        latent_dim: usize,
        true_phi: f64,
        data_seed: u64,
    },
    Stereological {
        true_lambda: f64,
        true_sigma: f64,
        true_xi: f64,
        data_seed: u64,
    },
}

impl ModelSpec {
    pub fn resolve(name: &str, table: Table) -> Result<Self, CliError> {
        let mut t = TableCtx::new("model", table);
        let spec = match name {
            "conjugate-gaussian" => ModelSpec::ConjugateGaussian {
                n: t.usize_("n", 50)?,
                obs_var: positive(t.f64("obs_var", 1.0)?, "model.obs_var")?,
                prior_mean: finite(t.f64("prior_mean", 0.0)?, "model.prior_mean")?,
                prior_var: positive(t.f64("prior_var", 10.0)?, "model.prior_var")?,
                true_mu: finite(t.f64("true_mu", 1.0)?, "model.true_mu")?,
                data_seed: t.u64_("data_seed", 1)?,
            },
            "normal-gamma" => ModelSpec::NormalGamma {
                n: t.usize_("n", 100)?,
                mu0: finite(t.f64("mu0", 0.0)?, "model.mu0")?,
                kappa0: positive(t.f64("kappa0", 1.0)?, "model.kappa0")?,
                a0: positive(t.f64("a0", 2.0)?, "model.a0")?,
                b0: positive(t.f64("b0", 2.0)?, "model.b0")?,
                true_mu: finite(t.f64("true_mu", 1.5)?, "model.true_mu")?,
                true_sd: positive(t.f64("true_sd", 0.8)?, "model.true_sd")?,
                data_seed: t.u64_("data_seed", 1)?,
            },
            "random-effects" => ModelSpec::RandomEffects {
                n: t.usize_("n", 200)?,
                prior_mean: finite(t.f64("prior_mean", 0.0)?, "model.prior_mean")?,
                prior_var: positive(t.f64("prior_var", 10.0)?, "model.prior_var")?,
                latent_var: positive(t.f64("latent_var", 1.0)?, "model.latent_var")?,
                obs_var: positive(t.f64("obs_var", 1.0)?, "model.obs_var")?,
                data_seed: t.u64_("data_seed", 1)?,
            },
            "gaussian-lgm" => ModelSpec::GaussianLgm {
                latent_dim: t.usize_("latent_dim", 10)?,
                noise_var: positive(t.f64("noise_var", 1.0)?, "model.noise_var")?,
                true_phi: positive(t.f64("true_phi", 1.0)?, "model.true_phi")?,
                data_seed: t.u64_("data_seed", 1)?,
            },
            "poisson-lgm" => ModelSpec::PoissonLgm {
                latent_dim: t.usize_("latent_dim", 20)?,
                true_phi: positive(t.f64("true_phi", 1.0)?, "model.true_phi")?,
                data_seed: t.u64_("data_seed", 1)?,
            },
            "stereological" => ModelSpec::Stereological {
                true_lambda: positive(t.f64("true_lambda", 30.0)?, "model.true_lambda")?,
                true_sigma: positive(t.f64("true_sigma", 1.5)?, "model.true_sigma")?,
                true_xi: finite(t.f64("true_xi", 0.1)?, "model.true_xi")?,
                data_seed: t.u64_("data_seed", 1)?,
            },
            other => {
                return Err(CliError::config(format!(
                    "experiment.model: unknown model \"{other}\"; expected one of {}",
                    MODEL_NAMES.join(", ")
                )))
            }
        };
        t.finish()?;
        Ok(spec)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::ConjugateGaussian { .. } => "conjugate-gaussian",
            ModelSpec::NormalGamma { .. } => "normal-gamma",
            ModelSpec::RandomEffects { .. } => "random-effects",
            ModelSpec::GaussianLgm { .. } => "gaussian-lgm",
            ModelSpec::PoissonLgm { .. } => "poisson-lgm",
            ModelSpec::Stereological { .. } => "stereological",
        }
    }

    /// Names of the parameters the method infers (draw-file columns).
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            ModelSpec::ConjugateGaussian { .. } => &["mu"],
            ModelSpec::NormalGamma { .. } => &["mu", "tau"],
            ModelSpec::RandomEffects { .. } => &["phi"],
            ModelSpec::GaussianLgm { .. } | ModelSpec::PoissonLgm { .. } => &["phi"],
            ModelSpec::Stereological { .. } => &["lambda", "sigma", "xi"],
        }
    }

    pub fn param_dim(&self) -> usize {
        self.param_names().len()
    }

    /// Methods that can run on this model.
    pub fn supported_methods(&self) -> &'static [&'static str] {
        match self {
            ModelSpec::ConjugateGaussian { .. } => {
                &["abc-reject", "abc-mcmc", "abc-smc", "bsl", "pm-mh", "oracle"]
            }
            ModelSpec::NormalGamma { .. } => &["cavi", "oracle"],
            ModelSpec::RandomEffects { .. } => &["cavi", "svi", "oracle"],
            ModelSpec::GaussianLgm { .. } | ModelSpec::PoissonLgm { .. } => &["laplace-inla"],
            ModelSpec::Stereological { .. } => &["abc-reject", "abc-mcmc", "abc-smc", "bsl"],
        }
    }

    /// Summary statistics available for this model's datasets; the first
    /// entry is the default.
    pub fn summary_names(&self) -> &'static [&'static str] {
        match self {
            ModelSpec::ConjugateGaussian { .. } => &["mean", "mean-sd"],
            ModelSpec::Stereological { .. } => &["nine", "four"],
            _ => &[],
        }
    }

    /// The model section with every default materialized.
    pub fn manifest(&self) -> Table {
        let mut t = Table::new();
        match *self {
            ModelSpec::ConjugateGaussian { n, obs_var, prior_mean, prior_var, true_mu, data_seed } => {
                t.insert("n".into(), (n as i64).into());
                t.insert("obs_var".into(), obs_var.into());
                t.insert("prior_mean".into(), prior_mean.into());
                t.insert("prior_var".into(), prior_var.into());
                t.insert("true_mu".into(), true_mu.into());
                t.insert("data_seed".into(), (data_seed as i64).into());
            }
            ModelSpec::NormalGamma { n, mu0, kappa0, a0, b0, true_mu, true_sd, data_seed } => {
                t.insert("n".into(), (n as i64).into());
                t.insert("mu0".into(), mu0.into());
                t.insert("kappa0".into(), kappa0.into());
                t.insert("a0".into(), a0.into());
                t.insert("b0".into(), b0.into());
                t.insert("true_mu".into(), true_mu.into());
                t.insert("true_sd".into(), true_sd.into());
                t.insert("data_seed".into(), (data_seed as i64).into());
            }
            ModelSpec::RandomEffects { n, prior_mean, prior_var, latent_var, obs_var, data_seed } => {
                t.insert("n".into(), (n as i64).into());
                t.insert("prior_mean".into(), prior_mean.into());
                t.insert("prior_var".into(), prior_var.into());
                t.insert("latent_var".into(), latent_var.into());
                t.insert("obs_var".into(), obs_var.into());
                t.insert("data_seed".into(), (data_seed as i64).into());
            }
            ModelSpec::GaussianLgm { latent_dim, noise_var, true_phi, data_seed } => {
                t.insert("latent_dim".into(), (latent_dim as i64).into());
                t.insert("noise_var".into(), noise_var.into());
                t.insert("true_phi".into(), true_phi.into());
                t.insert("data_seed".into(), (data_seed as i64).into());
            }
            ModelSpec::PoissonLgm { latent_dim, true_phi, data_seed } => {
                t.insert("latent_dim".into(), (latent_dim as i64).into());
                t.insert("true_phi".into(), true_phi.into());
                t.insert("data_seed".into(), (data_seed as i64).into());
            }
            ModelSpec::Stereological { true_lambda, true_sigma, true_xi, data_seed } => {
                t.insert("true_lambda".into(), true_lambda.into());
                t.insert("true_sigma".into(), true_sigma.into());
                t.insert("true_xi".into(), true_xi.into());
                t.insert("data_seed".into(), (data_seed as i64).into());
            }
        }
        t
    }
}

// ---------------------------------------------------------------------------
// Methods
// ---------------------------------------------------------------------------

/// The method names accepted in configs, in the order `list-methods`
/// prints them.
pub const METHOD_NAMES: [&str; 9] = [
    "abc-reject",
    "abc-mcmc",
    "abc-smc",
    "bsl",
    "cavi",
    "svi",
    "laplace-inla",
    "pm-mh",
    "oracle",
];

/// Discrepancy used by the ABC samplers.
#[derive(Clone, Debug)]
pub enum DistanceChoice {
    /// Standardized Euclidean distance between summary vectors; the scale
    /// comes from a prior-predictive pilot run of `pilot` simulations.
    Summaries { pilot: usize },
    Wasserstein,
    CramerVonMises,
    Mmd { bandwidth: Option<f64> },
    Energy,
}

/// Tolerance selection for rejection-style samplers.
#[derive(Clone, Copy, Debug)]
pub enum RuleChoice {
    Quantile(f64),
    Fixed(f64),
}

/// Stopping rule for the sequential sampler.
#[derive(Clone, Copy, Debug)]
pub enum StopChoice {
    TargetTolerance(f64),
    MinAcceptRate(f64),
}

/// A fully resolved method block: every key explicit, defaults filled.
#[derive(Clone, Debug)]
pub enum MethodSpec {
    AbcReject {
        budget: usize,
        rule: RuleChoice,
        distance: DistanceChoice,
        summary: String,
        count_scale: Option<f64>,
        adjust: bool,
    },
    AbcMcmc {
        budget: usize,
        rule: RuleChoice,
        chain_length: usize,
        proposal_sd: Vec<f64>,
        distance: DistanceChoice,
        summary: String,
        count_scale: Option<f64>,
    },
    AbcSmc {
        n_particles: usize,
        quantile: f64,
        kernel_scale: f64,
        stop: StopChoice,
        initial_tolerance: Option<f64>,
        max_rounds: usize,
        distance: DistanceChoice,
        summary: String,
        count_scale: Option<f64>,
    },
    Bsl {
        m: usize,
        chain_length: usize,
        proposal_sd: Vec<f64>,
        init: Option<Vec<f64>>,
        summary: String,
    },
    PmMh {
        omega: f64,
        chain_length: usize,
        proposal_sd: Vec<f64>,
        init: Option<Vec<f64>>,
    },
    Cavi {
        max_iter: usize,
        rel_tol: f64,
        n_draws: usize,
    },
    Svi {
        epochs: usize,
        kappa: f64,
        tau: f64,
        n_draws: usize,
    },
    LaplaceInla {
        half_width_sd: f64,
        points_per_dim: usize,
        latent_marginal: bool,
        latent_index: usize,
    },
    Oracle {
        n_draws: usize,
    },
}

impl MethodSpec {
    /// Resolves one method block. `path` is the key prefix for error
    /// messages (`method` in run mode, `methods[i]` in compare mode).
    pub fn resolve(
        name: &str,
        table: Table,
        path: &str,
        model: &ModelSpec,
    ) -> Result<Self, CliError> {
        if !METHOD_NAMES.contains(&name) {
            return Err(CliError::config(format!(
                "{path}: unknown method \"{name}\"; expected one of {}",
                METHOD_NAMES.join(", ")
            )));
        }
        if !model.supported_methods().contains(&name) {
            return Err(CliError::config(format!(
                "{path}: method \"{name}\" is not available for model \"{}\" (supported: {})",
                model.name(),
                model.supported_methods().join(", ")
            )));
        }
        let mut t = TableCtx::new(path, table);
        let dim = model.param_dim();
        let spec = match name {
            "abc-reject" => {
                let distance = Self::distance(&mut t, path)?;
                let summary = Self::summary(&mut t, path, model)?;
                let adjust = t.bool_("adjust", false)?;
                if adjust && !matches!(distance, DistanceChoice::Summaries { .. }) {
                    return Err(CliError::config(format!(
                        "{path}.adjust requires distance = \"summaries\""
                    )));
                }
                MethodSpec::AbcReject {
                    budget: Self::at_least(t.usize_("budget", 100_000)?, 1, path, "budget")?,
                    rule: Self::rule(&mut t, path, 0.01)?,
                    distance,
                    summary,
                    count_scale: t.opt_f64("count_scale")?,
                    adjust,
                }
            }
            "abc-mcmc" => MethodSpec::AbcMcmc {
                budget: Self::at_least(t.usize_("budget", 50_000)?, 1, path, "budget")?,
                rule: Self::rule(&mut t, path, 0.01)?,
                chain_length: Self::at_least(t.usize_("chain_length", 20_000)?, 1, path, "chain_length")?,
                proposal_sd: Self::proposal(&mut t, path, dim)?,
                distance: Self::distance(&mut t, path)?,
                summary: Self::summary(&mut t, path, model)?,
                count_scale: t.opt_f64("count_scale")?,
            },
            "abc-smc" => {
                let target = t.opt_f64("target_tolerance")?;
                let min_rate = t.opt_f64("min_accept_rate")?;
                let stop = match (target, min_rate) {
                    (Some(_), Some(_)) => {
                        return Err(CliError::config(format!(
                            "{path}: target_tolerance and min_accept_rate are mutually exclusive"
                        )))
                    }
                    (Some(eps), None) => {
                        StopChoice::TargetTolerance(positive(eps, &format!("{path}.target_tolerance"))?)
                    }
                    (None, Some(r)) => {
                        StopChoice::MinAcceptRate(in_open_unit(r, &format!("{path}.min_accept_rate"))?)
                    }
                    (None, None) => StopChoice::MinAcceptRate(0.015),
                };
                MethodSpec::AbcSmc {
                    n_particles: Self::at_least(t.usize_("n_particles", 1_000)?, 2, path, "n_particles")?,
                    quantile: in_open_unit(t.f64("quantile", 0.5)?, &format!("{path}.quantile"))?,
                    kernel_scale: positive(t.f64("kernel_scale", 2.0)?, &format!("{path}.kernel_scale"))?,
                    stop,
                    initial_tolerance: t.opt_f64("initial_tolerance")?,
                    max_rounds: Self::at_least(t.usize_("max_rounds", 25)?, 1, path, "max_rounds")?,
                    distance: Self::distance(&mut t, path)?,
                    summary: Self::summary(&mut t, path, model)?,
                    count_scale: t.opt_f64("count_scale")?,
                }
            }
            "bsl" => MethodSpec::Bsl {
                m: Self::at_least(t.usize_("m", 50)?, 3, path, "m")?,
                chain_length: Self::at_least(t.usize_("chain_length", 5_000)?, 1, path, "chain_length")?,
                proposal_sd: Self::proposal(&mut t, path, dim)?,
                init: t.f64_vec("init", dim)?,
                summary: Self::summary(&mut t, path, model)?,
            },
            "pm-mh" => MethodSpec::PmMh {
                omega: positive(t.f64("omega", 1.0)?, &format!("{path}.omega"))?,
                chain_length: Self::at_least(t.usize_("chain_length", 20_000)?, 1, path, "chain_length")?,
                proposal_sd: Self::proposal(&mut t, path, dim)?,
                init: t.f64_vec("init", dim)?,
            },
            "cavi" => MethodSpec::Cavi {
                max_iter: Self::at_least(t.usize_("max_iter", 10_000)?, 1, path, "max_iter")?,
                rel_tol: positive(t.f64("rel_tol", 1e-8)?, &format!("{path}.rel_tol"))?,
                n_draws: Self::at_least(t.usize_("n_draws", 10_000)?, 2, path, "n_draws")?,
            },
            "svi" => MethodSpec::Svi {
                epochs: Self::at_least(t.usize_("epochs", 200)?, 1, path, "epochs")?,
                kappa: t.f64("kappa", 0.7)?,
                tau: t.f64("tau", 1.0)?,
                n_draws: Self::at_least(t.usize_("n_draws", 10_000)?, 2, path, "n_draws")?,
            },
            "laplace-inla" => {
                let points = Self::at_least(t.usize_("points_per_dim", 41)?, 5, path, "points_per_dim")?;
                if points % 2 == 0 {
                    return Err(CliError::config(format!(
                        "{path}.points_per_dim must be odd so the grid brackets its center, got {points}"
                    )));
                }
                MethodSpec::LaplaceInla {
                    half_width_sd: positive(t.f64("half_width_sd", 4.0)?, &format!("{path}.half_width_sd"))?,
                    points_per_dim: points,
                    latent_marginal: t.bool_("latent_marginal", true)?,
                    latent_index: t.usize_("latent_index", 0)?,
                }
            }
            "oracle" => MethodSpec::Oracle {
                n_draws: Self::at_least(t.usize_("n_draws", 10_000)?, 2, path, "n_draws")?,
            },
            _ => unreachable!("validated against METHOD_NAMES above"),
        };
        t.finish()?;
        Ok(spec)
    }

    fn at_least(v: usize, min: usize, path: &str, key: &str) -> Result<usize, CliError> {
        if v >= min {
            Ok(v)
        } else {
            Err(CliError::config(format!("{path}.{key} must be >= {min}, got {v}")))
        }
    }

    fn rule(t: &mut TableCtx, path: &str, default_quantile: f64) -> Result<RuleChoice, CliError> {
        let quantile = t.opt_f64("quantile")?;
        let tolerance = t.opt_f64("tolerance")?;
        match (quantile, tolerance) {
            (Some(_), Some(_)) => Err(CliError::config(format!(
                "{path}: quantile and tolerance are mutually exclusive"
            ))),
            (Some(q), None) => Ok(RuleChoice::Quantile(in_open_unit(q, &format!("{path}.quantile"))?)),
            (None, Some(eps)) => Ok(RuleChoice::Fixed(positive(eps, &format!("{path}.tolerance"))?)),
            (None, None) => Ok(RuleChoice::Quantile(default_quantile)),
        }
    }

    fn proposal(t: &mut TableCtx, path: &str, dim: usize) -> Result<Vec<f64>, CliError> {
        let sd = t.f64_vec("proposal_sd", dim)?.ok_or_else(|| {
            CliError::config(format!("{path}.proposal_sd is required (number or array)"))
        })?;
        for &v in &sd {
            positive(v, &format!("{path}.proposal_sd"))?;
        }
        Ok(sd)
    }

    fn distance(t: &mut TableCtx, path: &str) -> Result<DistanceChoice, CliError> {
        let kind = t.string("distance", "summaries")?;
        let pilot_opt = t.opt_u64("pilot")?;
        let bandwidth = t.opt_f64("mmd_bandwidth")?;
        if bandwidth.is_some() && kind != "mmd" {
            return Err(CliError::config(format!(
                "{path}.mmd_bandwidth only applies when distance = \"mmd\""
            )));
        }
        if pilot_opt.is_some() && kind != "summaries" {
            return Err(CliError::config(format!(
                "{path}.pilot only applies when distance = \"summaries\""
            )));
        }
        match kind.as_str() {
            "summaries" => {
                let pilot = pilot_opt.unwrap_or(2_000) as usize;
                if pilot < 2 {
                    return Err(CliError::config(format!("{path}.pilot must be >= 2, got {pilot}")));
                }
                Ok(DistanceChoice::Summaries { pilot })
            }
            "wasserstein" => Ok(DistanceChoice::Wasserstein),
            "cvm" => Ok(DistanceChoice::CramerVonMises),
            "mmd" => {
                if let Some(b) = bandwidth {
                    positive(b, &format!("{path}.mmd_bandwidth"))?;
                }
                Ok(DistanceChoice::Mmd { bandwidth })
            }
            "energy" => Ok(DistanceChoice::Energy),
            other => Err(CliError::config(format!(
                "{path}.distance: unknown distance \"{other}\"; expected summaries, wasserstein, cvm, mmd, or energy"
            ))),
        }
    }

    fn summary(t: &mut TableCtx, path: &str, model: &ModelSpec) -> Result<String, CliError> {
        let names = model.summary_names();
        match t.opt_string("summary")? {
            None => Ok(names.first().copied().unwrap_or("mean").to_string()),
            Some(s) => {
                if names.contains(&s.as_str()) {
                    Ok(s)
                } else {
                    Err(CliError::config(format!(
                        "{path}.summary: \"{s}\" is not defined for model \"{}\" (available: {})",
                        model.name(),
                        names.join(", ")
                    )))
                }
            }
        }
    }

    /// The method section with every default materialized.
    pub fn manifest(&self, name: &str) -> Table {
        let mut t = Table::new();
        t.insert("name".into(), name.into());
        let ins_usize = |t: &mut Table, k: &str, v: usize| {
            t.insert(k.into(), (v as i64).into());
        };
        let ins_dist = |t: &mut Table, d: &DistanceChoice| match d {
            DistanceChoice::Summaries { pilot } => {
                t.insert("distance".into(), "summaries".into());
                t.insert("pilot".into(), (*pilot as i64).into());
            }
            DistanceChoice::Wasserstein => {
                t.insert("distance".into(), "wasserstein".into());
            }
            DistanceChoice::CramerVonMises => {
                t.insert("distance".into(), "cvm".into());
            }
            DistanceChoice::Mmd { bandwidth } => {
                t.insert("distance".into(), "mmd".into());
                t.insert(
                    "mmd_bandwidth".into(),
                    bandwidth.map(Value::from).unwrap_or_else(|| "median-heuristic".into()),
                );
            }
            DistanceChoice::Energy => {
                t.insert("distance".into(), "energy".into());
            }
        };
        let ins_rule = |t: &mut Table, r: &RuleChoice| match *r {
            RuleChoice::Quantile(q) => {
                t.insert("quantile".into(), q.into());
            }
            RuleChoice::Fixed(eps) => {
                t.insert("tolerance".into(), eps.into());
            }
        };
        let ins_vec = |t: &mut Table, k: &str, v: &[f64]| {
            t.insert(k.into(), Value::Array(v.iter().map(|&x| x.into()).collect()));
        };
        match self {
            MethodSpec::AbcReject { budget, rule, distance, summary, count_scale, adjust } => {
                ins_usize(&mut t, "budget", *budget);
                ins_rule(&mut t, rule);
                ins_dist(&mut t, distance);
                t.insert("summary".into(), summary.as_str().into());
                if let Some(c) = count_scale {
                    t.insert("count_scale".into(), (*c).into());
                }
                t.insert("adjust".into(), (*adjust).into());
            }
            MethodSpec::AbcMcmc { budget, rule, chain_length, proposal_sd, distance, summary, count_scale } => {
                ins_usize(&mut t, "budget", *budget);
                ins_rule(&mut t, rule);
                ins_usize(&mut t, "chain_length", *chain_length);
                ins_vec(&mut t, "proposal_sd", proposal_sd);
                ins_dist(&mut t, distance);
                t.insert("summary".into(), summary.as_str().into());
                if let Some(c) = count_scale {
                    t.insert("count_scale".into(), (*c).into());
                }
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
                ins_usize(&mut t, "n_particles", *n_particles);
                t.insert("quantile".into(), (*quantile).into());
                t.insert("kernel_scale".into(), (*kernel_scale).into());
                match *stop {
                    StopChoice::TargetTolerance(eps) => {
                        t.insert("target_tolerance".into(), eps.into());
                    }
                    StopChoice::MinAcceptRate(r) => {
                        t.insert("min_accept_rate".into(), r.into());
                    }
                }
                if let Some(eps0) = initial_tolerance {
                    t.insert("initial_tolerance".into(), (*eps0).into());
                }
                ins_usize(&mut t, "max_rounds", *max_rounds);
                ins_dist(&mut t, distance);
                t.insert("summary".into(), summary.as_str().into());
                if let Some(c) = count_scale {
                    t.insert("count_scale".into(), (*c).into());
                }
            }
            MethodSpec::Bsl { m, chain_length, proposal_sd, init, summary } => {
                ins_usize(&mut t, "m", *m);
                ins_usize(&mut t, "chain_length", *chain_length);
                ins_vec(&mut t, "proposal_sd", proposal_sd);
                if let Some(init) = init {
                    ins_vec(&mut t, "init", init);
                }
                t.insert("summary".into(), summary.as_str().into());
            }
            MethodSpec::PmMh { omega, chain_length, proposal_sd, init } => {
                t.insert("omega".into(), (*omega).into());
                ins_usize(&mut t, "chain_length", *chain_length);
                ins_vec(&mut t, "proposal_sd", proposal_sd);
                if let Some(init) = init {
                    ins_vec(&mut t, "init", init);
                }
            }
            MethodSpec::Cavi { max_iter, rel_tol, n_draws } => {
                ins_usize(&mut t, "max_iter", *max_iter);
                t.insert("rel_tol".into(), (*rel_tol).into());
                ins_usize(&mut t, "n_draws", *n_draws);
            }
            MethodSpec::Svi { epochs, kappa, tau, n_draws } => {
                ins_usize(&mut t, "epochs", *epochs);
                t.insert("kappa".into(), (*kappa).into());
                t.insert("tau".into(), (*tau).into());
                ins_usize(&mut t, "n_draws", *n_draws);
            }
            MethodSpec::LaplaceInla { half_width_sd, points_per_dim, latent_marginal, latent_index } => {
                t.insert("half_width_sd".into(), (*half_width_sd).into());
                ins_usize(&mut t, "points_per_dim", *points_per_dim);
                t.insert("latent_marginal".into(), (*latent_marginal).into());
                ins_usize(&mut t, "latent_index", *latent_index);
            }
            MethodSpec::Oracle { n_draws } => {
                ins_usize(&mut t, "n_draws", *n_draws);
            }
        }
        t
    }
}

// ---------------------------------------------------------------------------
// Whole-file configs
// ---------------------------------------------------------------------------

/// Resolved `abayes run` configuration.
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub model: ModelSpec,
    pub method_name: String,
    pub method: MethodSpec,
}

/// One method block of an `abayes compare` configuration.
pub struct Block {
    pub label: String,
    pub method_name: String,
    pub method: MethodSpec,
    pub seed: u64,
}

/// Resolved `abayes compare` configuration.
pub struct CompareConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub model: ModelSpec,
    pub reference: String,
    pub blocks: Vec<Block>,
}

fn read_root(path: &Path) -> Result<Table, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<Table>()
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

struct Experiment {
    model_name: String,
    method_name: Option<String>,
    seed: u64,
    out_dir: PathBuf,
}

fn read_experiment(
    root: &mut TableCtx,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
) -> Result<Experiment, CliError> {
    let mut exp = root
        .sub_table("experiment")?
        .ok_or_else(|| CliError::config("missing [experiment] section"))?;
    let model_name = exp.required_string("model")?;
    let method_name = exp.opt_string("method")?;
    let seed = exp.u64_("seed", 0)?;
    let out_dir = exp.string("out_dir", "abayes-out")?;
    exp.finish()?;
    Ok(Experiment {
        model_name,
        method_name,
        seed: seed_override.unwrap_or(seed),
        out_dir: out_override.unwrap_or_else(|| PathBuf::from(out_dir)),
    })
}

/// Loads and validates a run-mode config file.
pub fn load_run(
    path: &Path,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
) -> Result<RunConfig, CliError> {
    let mut root = TableCtx::new("", read_root(path)?);
    let exp = read_experiment(&mut root, seed_override, out_override)?;
    let method_name = exp
        .method_name
        .ok_or_else(|| CliError::config("experiment.method is required by `abayes run`"))?;
    let model_table = root.sub_table("model")?.map(|t| t.table).unwrap_or_default();
    let model = ModelSpec::resolve(&exp.model_name, model_table)?;
    let method_table = root.sub_table("method")?.map(|t| t.table).unwrap_or_default();
    let method = MethodSpec::resolve(&method_name, method_table, "method", &model)?;
    root.finish()?;
    Ok(RunConfig { seed: exp.seed, out_dir: exp.out_dir, model, method_name, method })
}

/// Loads and validates a compare-mode config file.
pub fn load_compare(
    path: &Path,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
) -> Result<CompareConfig, CliError> {
    let mut root = TableCtx::new("", read_root(path)?);
    let exp = read_experiment(&mut root, seed_override, out_override)?;
    if exp.method_name.is_some() {
        return Err(CliError::config(
            "experiment.method is not allowed with `abayes compare`; list method blocks under [[methods]]",
        ));
    }
    let model_table = root.sub_table("model")?.map(|t| t.table).unwrap_or_default();
    let model = ModelSpec::resolve(&exp.model_name, model_table)?;

    let mut cmp = root
        .sub_table("compare")?
        .ok_or_else(|| CliError::config("missing [compare] section (set compare.reference)"))?;
    let reference = cmp.required_string("reference")?;
    cmp.finish()?;

    let raw_blocks = match root.take("methods") {
        None => {
            return Err(CliError::config(
                "compare mode needs at least two [[methods]] blocks, found none",
            ))
        }
        Some(Value::Array(items)) => items,
        Some(_) => return Err(CliError::config("methods must be an array of tables")),
    };
    if raw_blocks.len() < 2 {
        return Err(CliError::config(format!(
            "compare mode needs at least two [[methods]] blocks, found {}",
            raw_blocks.len()
        )));
    }

    let mut blocks = Vec::with_capacity(raw_blocks.len());
    for (i, raw) in raw_blocks.into_iter().enumerate() {
        let path_i = format!("methods[{i}]");
        let Value::Table(table) = raw else {
            return Err(CliError::config(format!("{path_i} must be a table")));
        };
        let mut t = TableCtx::new(&path_i, table);
        let method_name = t.required_string("method")?;
        let label = t.opt_string("name")?.unwrap_or_else(|| method_name.clone());
        if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(CliError::config(format!(
                "{path_i}.name must be non-empty and use only letters, digits, '-', '_' (it names an output directory), got \"{label}\""
            )));
        }
        if let Some(m) = t.opt_string("model")? {
            if m != exp.model_name {
                return Err(CliError::config(format!(
                    "{path_i}.model: all blocks must use the experiment model \"{}\", got \"{m}\"",
                    exp.model_name
                )));
            }
        }
        let seed = t.opt_u64("seed")?.unwrap_or(exp.seed);
        let method = MethodSpec::resolve(&method_name, t.table, &path_i, &model)?;
        blocks.push(Block { label, method_name, method, seed });
    }
    root.finish()?;

    for i in 0..blocks.len() {
        for j in (i + 1)..blocks.len() {
            if blocks[i].label == blocks[j].label {
                return Err(CliError::config(format!(
                    "methods[{j}].name: label \"{}\" is already used by methods[{i}]; labels must be unique",
                    blocks[j].label
                )));
            }
        }
    }
    if !blocks.iter().any(|b| b.label == reference) {
        return Err(CliError::config(format!(
            "compare.reference: no [[methods]] block is named \"{reference}\""
        )));
    }
    Ok(CompareConfig {
        seed: exp.seed,
        out_dir: exp.out_dir,
        model,
        reference,
        blocks,
    })
}
