//! Core model vocabulary: parameter vectors, priors, datasets, simulators,
//! and weighted posterior draws.

use rand::Rng;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::rng::{StreamSeed, TaskRng};
use crate::stats;

/// A fixed-length vector of finite parameter values.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVec(Vec<f64>);

impl ParamVec {
    /// Build a parameter vector, rejecting NaN/infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        stats::ensure_all_finite(&values, "parameter vector")?;
        Ok(ParamVec(values))
    }

    /// Number of coordinates.
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Borrow the coordinates.
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Coordinate `j`.
    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }

    /// Consume into the underlying vector.
    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for ParamVec {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// One independent prior marginal.
#[derive(Clone, Debug, PartialEq)]
pub enum MarginalPrior {
    /// Uniform on the open-closed interval `[low, high]`.
    Uniform { low: f64, high: f64 },
    /// Normal with the given mean and **variance**.
    Normal { mean: f64, var: f64 },
    /// Log-normal: `ln x` is normal with the given mean and **variance**.
    LogNormal { mean: f64, var: f64 },
    /// Gamma with shape `shape` and **rate** `rate` (mean `shape / rate`).
    Gamma { shape: f64, rate: f64 },
}

impl MarginalPrior {
    fn validate(&self) -> Result<()> {
        match *self {
            MarginalPrior::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(Error::config(format!(
                        "uniform prior requires finite low < high, got [{low}, {high}]"
                    )));
                }
            }
            MarginalPrior::Normal { mean, var } | MarginalPrior::LogNormal { mean, var } => {
                if !(mean.is_finite() && var.is_finite() && var > 0.0) {
                    return Err(Error::config(format!(
                        "normal/log-normal prior requires finite mean and variance > 0, got ({mean}, {var})"
                    )));
                }
            }
            MarginalPrior::Gamma { shape, rate } => {
                if !(shape.is_finite() && rate.is_finite() && shape > 0.0 && rate > 0.0) {
                    return Err(Error::config(format!(
                        "gamma prior requires shape > 0 and rate > 0, got ({shape}, {rate})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Log density at `x`; `-inf` outside the support.
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            MarginalPrior::Uniform { low, high } => {
                if x >= low && x <= high {
                    -(high - low).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            MarginalPrior::Normal { mean, var } => stats::normal_logpdf(x, mean, var),
            MarginalPrior::LogNormal { mean, var } => {
                if x > 0.0 {
                    stats::normal_logpdf(x.ln(), mean, var) - x.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            MarginalPrior::Gamma { shape, rate } => {
                if x > 0.0 {
                    shape * rate.ln() - statrs::function::gamma::ln_gamma(shape)
                        + (shape - 1.0) * x.ln()
                        - rate * x
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// Draw one value.
    pub fn sample(&self, rng: &mut TaskRng) -> f64 {
        match *self {
            MarginalPrior::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            MarginalPrior::Normal { mean, var } => {
                let z: f64 = rand_distr::StandardNormal.sample(rng);
                mean + var.sqrt() * z
            }
            MarginalPrior::LogNormal { mean, var } => {
                let z: f64 = rand_distr::StandardNormal.sample(rng);
                (mean + var.sqrt() * z).exp()
            }
            MarginalPrior::Gamma { shape, rate } => {
                let g = rand_distr::Gamma::new(shape, 1.0 / rate)
                    .expect("parameters validated at construction");
                g.sample(rng)
            }
        }
    }
}

/// Independent product prior over the parameter coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorSpec {
    marginals: Vec<MarginalPrior>,
}

impl PriorSpec {
    /// Build a product prior; validates every marginal's parameters.
    pub fn new(marginals: Vec<MarginalPrior>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::config("prior must have at least one marginal"));
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(PriorSpec { marginals })
    }

    /// Number of parameter coordinates.
    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    /// The marginal components.
    pub fn marginals(&self) -> &[MarginalPrior] {
        &self.marginals
    }

    /// Joint log density; `-inf` outside the support.
    pub fn log_density(&self, theta: &ParamVec) -> Result<f64> {
        if theta.dim() != self.dim() {
            return Err(Error::dims(format!(
                "prior has {} coordinates but theta has {}",
                self.dim(),
                theta.dim()
            )));
        }
        Ok(self
            .marginals
            .iter()
            .zip(theta.as_slice())
            .map(|(m, &x)| m.log_density(x))
            .sum())
    }

    /// Draw one parameter vector.
    pub fn sample(&self, rng: &mut TaskRng) -> ParamVec {
        ParamVec(self.marginals.iter().map(|m| m.sample(rng)).collect())
    }
}

/// A rectangular dataset: `rows` observations of `cols` columns, row-major.
///
/// Observed datasets are non-empty; simulated datasets from models with a
/// random record count (for example a Poisson number of inclusions) may have
/// zero rows, which downstream summaries handle by a documented zero-vector
/// convention.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Dataset {
    /// Build a dataset from row-major values; all entries must be finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "dataset buffer has {} values, expected {rows} x {cols}",
                data.len()
            )));
        }
        if rows > 0 && cols == 0 {
            return Err(Error::dims("dataset with rows > 0 must have cols > 0".to_string()));
        }
        stats::ensure_all_finite(&data, "dataset")?;
        Ok(Dataset { data, rows, cols })
    }

    /// Single-column dataset from a vector of scalar observations.
    pub fn from_column(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Dataset::new(n, if n == 0 { 0 } else { 1 }, values)
    }

    /// Dataset with no rows.
    pub fn empty() -> Self {
        Dataset { data: Vec::new(), rows: 0, cols: 0 }
    }

    /// Number of rows (observations).
    pub fn n_rows(&self) -> usize {
        self.rows
    }

    /// Number of columns (components per observation).
    pub fn n_cols(&self) -> usize {
        self.cols
    }

    /// True when the dataset has no rows.
    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    /// Borrow row `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Copy out column `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    /// Borrow the full row-major buffer.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// For single-column data, borrow the observations directly.
    pub fn scalar_view(&self) -> Result<&[f64]> {
        if self.rows == 0 || self.cols == 1 {
            Ok(&self.data)
        } else {
            Err(Error::dims(format!(
                "operation requires scalar (single-column) data, got {} columns",
                self.cols
            )))
        }
    }

    /// Stack two datasets with equal column counts.
    pub fn vstack(&self, other: &Dataset) -> Result<Dataset> {
        if self.is_empty() {
            return Ok(other.clone());
        }
        if other.is_empty() {
            return Ok(self.clone());
        }
        if self.cols != other.cols {
            return Err(Error::dims(format!(
                "cannot stack datasets with {} and {} columns",
                self.cols, other.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Dataset::new(self.rows + other.rows, self.cols, data)
    }
}

/// A generative model: prior plus a forward simulator.
///
/// `simulate` must be a pure function of `(theta, seed)`: identical inputs
/// produce identical datasets, which is what makes every sampler in this
/// crate replayable.
pub trait SimulatorModel: Sync {
    /// Number of parameters.
    fn param_dim(&self) -> usize;

    /// The prior over parameters.
    fn prior(&self) -> &PriorSpec;

    /// Simulate one dataset at `theta`.
    fn simulate(&self, theta: &ParamVec, seed: StreamSeed) -> Result<Dataset>;

    /// Exact log likelihood, where available (conjugate benchmark models).
    fn log_likelihood(&self, _theta: &ParamVec, _data: &Dataset) -> Option<f64> {
        None
    }
}

/// Metadata attached to a set of weighted draws.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DrawsMeta {
    /// Name of the producing method (for reports and persisted files).
    pub method: String,
    /// Tolerance actually used, for tolerance-based samplers.
    pub tolerance: Option<f64>,
    /// Fraction of proposals accepted, for samplers where that is defined.
    pub acceptance_rate: Option<f64>,
    /// Free-form warning flags (ridge fallback, clipped ESS, ...).
    pub flags: Vec<String>,
}

/// Weighted posterior draws with optional per-draw distances.
///
/// Weights are stored normalized: non-negative, finite, summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedDraws {
    draws: Vec<ParamVec>,
    weights: Vec<f64>,
    distances: Option<Vec<f64>>,
    meta: DrawsMeta,
}

impl WeightedDraws {
    /// Build a draw set. Weights may be unnormalized; they are validated
    /// (non-negative, finite, positive total) and normalized here.
    pub fn new(
        draws: Vec<ParamVec>,
        weights: Vec<f64>,
        distances: Option<Vec<f64>>,
        meta: DrawsMeta,
    ) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::degenerate("draw set must be non-empty"));
        }
        if weights.len() != draws.len() {
            return Err(Error::dims(format!(
                "{} draws but {} weights",
                draws.len(),
                weights.len()
            )));
        }
        let dim = draws[0].dim();
        if draws.iter().any(|d| d.dim() != dim) {
            return Err(Error::dims("draws have inconsistent dimensions".to_string()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::non_finite("weights must be finite and non-negative".to_string()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::degenerate("weights sum to zero"));
        }
        if let Some(d) = &distances {
            if d.len() != draws.len() {
                return Err(Error::dims(format!(
                    "{} draws but {} distances",
                    draws.len(),
                    d.len()
                )));
            }
            stats::ensure_all_finite(d, "distances")?;
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(WeightedDraws { draws, weights, distances, meta })
    }

    /// Equal-weight draw set.
    pub fn equal_weight(draws: Vec<ParamVec>, distances: Option<Vec<f64>>, meta: DrawsMeta) -> Result<Self> {
        let n = draws.len();
        WeightedDraws::new(draws, vec![1.0; n.max(1)], distances, meta)
    }

    /// Number of draws.
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    /// True when there are no draws (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Parameter dimension.
    pub fn dim(&self) -> usize {
        self.draws[0].dim()
    }

    /// The draws.
    pub fn draws(&self) -> &[ParamVec] {
        &self.draws
    }

    /// Normalized weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Per-draw distances, when the producing method defines them.
    pub fn distances(&self) -> Option<&[f64]> {
        self.distances.as_deref()
    }

    /// Metadata.
    pub fn meta(&self) -> &DrawsMeta {
        &self.meta
    }

    /// Mutable metadata (used by engines to append flags).
    pub fn meta_mut(&mut self) -> &mut DrawsMeta {
        &mut self.meta
    }

    /// Copy out coordinate `j` of every draw.
    pub fn param_column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.get(j)).collect()
    }

    /// Index of a draw sampled proportionally to weight, given a uniform
    /// variate in [0, 1).
    pub(crate) fn weighted_index(&self, u: f64) -> usize {
        let mut acc = 0.0;
        let target = u;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if target < acc {
                return i;
            }
        }
        self.weights.len() - 1
    }
}

/// Draw `n` parameter vectors from the prior with equal weights.
pub fn sample_prior(prior: &PriorSpec, n: usize, seed: StreamSeed) -> Result<WeightedDraws> {
    if n == 0 {
        return Err(Error::config("sample_prior requires n >= 1"));
    }
    let mut rng = seed.rng();
    let draws: Vec<ParamVec> = (0..n).map(|_| prior.sample(&mut rng)).collect();
    WeightedDraws::equal_weight(
        draws,
        None,
        DrawsMeta { method: "prior".to_string(), ..DrawsMeta::default() },
    )
}

/// Joint prior log density at `theta` (`-inf` outside the support).
pub fn log_prior_density(prior: &PriorSpec, theta: &ParamVec) -> Result<f64> {
    prior.log_density(theta)
}

/// Weighted posterior expectation of `g` over the draws.
pub fn posterior_expectation(
    draws: &WeightedDraws,
    g: impl Fn(&[f64]) -> f64,
) -> Result<f64> {
    let mut acc = 0.0;
    for (d, &w) in draws.draws().iter().zip(draws.weights()) {
        let v = g(d.as_slice());
        if !v.is_finite() {
            return Err(Error::non_finite(
                "posterior_expectation integrand returned a non-finite value".to_string(),
            ));
        }
        acc += w * v;
    }
    Ok(acc)
}

/// Posterior predictive sample: `n_pred` composite draws, each built by
/// resampling one `theta` proportionally to weight and running one forward
/// simulation. The simulated datasets are stacked row-wise.
pub fn predictive_sample(
    model: &dyn SimulatorModel,
    draws: &WeightedDraws,
    n_pred: usize,
    seed: StreamSeed,
) -> Result<Dataset> {
    if draws.dim() != model.param_dim() {
        return Err(Error::dims(format!(
            "draws have dimension {} but model has {} parameters",
            draws.dim(),
            model.param_dim()
        )));
    }
    if n_pred == 0 {
        return Ok(Dataset::empty());
    }
    let mut pick_rng = seed.child(0).rng();
    let sim_seed = seed.child(1);
    let mut out = Dataset::empty();
    for i in 0..n_pred {
        let idx = draws.weighted_index(pick_rng.random::<f64>());
        let z = model.simulate(&draws.draws()[idx], sim_seed.stream(i as u64))?;
        out = out.vstack(&z)?;
    }
    Ok(out)
}
