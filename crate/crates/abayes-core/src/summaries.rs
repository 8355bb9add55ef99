//! Summary statistics and the standardized summary distance.
//!
//! A [`SummaryFn`] maps a dataset to a fixed-length vector. Summary-based
//! samplers compare those vectors with [`summary_distance`], a Euclidean
//! distance after per-component standardization by a [`SummaryScale`] —
//! typically the prior-predictive median absolute deviation produced by
//! [`pilot_scale`], so that no single component dominates by units alone.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Dataset, SimulatorModel};
use crate::rng::StreamSeed;
use crate::stats;

/// Smallest allowed scale component; prevents division blow-ups when a
/// summary component is (nearly) constant under the prior predictive.
pub const SCALE_FLOOR: f64 = 1e-8;

/// A deterministic map from datasets to fixed-length summary vectors.
pub trait SummaryFn: Sync + Send {
    /// Length of the summary vector.
    fn dim(&self) -> usize;

    /// Short name for reports and persisted metadata.
    fn name(&self) -> &str;

    /// Compute the summary vector.
    fn compute(&self, data: &Dataset) -> Result<Vec<f64>>;
}

/// Compute a summary and validate its length and finiteness.
pub fn compute_summary(summary: &dyn SummaryFn, data: &Dataset) -> Result<Vec<f64>> {
    let s = summary.compute(data)?;
    if s.len() != summary.dim() {
        return Err(Error::dims(format!(
            "summary '{}' declared {} components but produced {}",
            summary.name(),
            summary.dim(),
            s.len()
        )));
    }
    stats::ensure_all_finite(&s, &format!("summary '{}'", summary.name()))?;
    Ok(s)
}

/// Sample mean of a scalar dataset (one component).
#[derive(Clone, Copy, Debug)]
pub struct SampleMean;

impl SummaryFn for SampleMean {
    fn dim(&self) -> usize {
        1
    }

    fn name(&self) -> &str {
        "mean"
    }

    fn compute(&self, data: &Dataset) -> Result<Vec<f64>> {
        let xs = data.scalar_view()?;
        if xs.is_empty() {
            return Err(Error::degenerate("sample mean of an empty dataset".to_string()));
        }
        Ok(vec![xs.iter().sum::<f64>() / xs.len() as f64])
    }
}

/// Sample mean and standard deviation of a scalar dataset (two components).
#[derive(Clone, Copy, Debug)]
pub struct MeanAndSd;

impl SummaryFn for MeanAndSd {
    fn dim(&self) -> usize {
        2
    }

    fn name(&self) -> &str {
        "mean_sd"
    }

    fn compute(&self, data: &Dataset) -> Result<Vec<f64>> {
        let xs = data.scalar_view()?;
        if xs.len() < 2 {
            return Err(Error::degenerate(
                "mean/sd summary needs at least two observations".to_string(),
            ));
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        Ok(vec![mean, var.sqrt()])
    }
}

/// Positive per-component scales used to standardize summary differences.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryScale {
    values: Vec<f64>,
}

impl SummaryScale {
    /// Build a scale vector; every component must be positive and finite.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("summary scale must be non-empty"));
        }
        if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::config(
                "summary scale components must be positive and finite".to_string(),
            ));
        }
        Ok(SummaryScale { values })
    }

    /// All-ones scale of the given length (no standardization).
    pub fn unit(dim: usize) -> Self {
        SummaryScale { values: vec![1.0; dim.max(1)] }
    }

    /// Scale components.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of components.
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Standardized Euclidean distance between two summary vectors:
/// `sqrt(sum_j ((a_j - b_j) / scale_j)^2)`.
pub fn summary_distance(a: &[f64], b: &[f64], scale: &SummaryScale) -> Result<f64> {
    if a.len() != b.len() || a.len() != scale.dim() {
        return Err(Error::dims(format!(
            "summary distance needs equal lengths, got {}, {}, scale {}",
            a.len(),
            b.len(),
            scale.dim()
        )));
    }
    stats::ensure_all_finite(a, "summary a")?;
    stats::ensure_all_finite(b, "summary b")?;
    let s: f64 = a
        .iter()
        .zip(b)
        .zip(scale.values())
        .map(|((x, y), s)| {
            let d = (x - y) / s;
            d * d
        })
        .sum();
    Ok(s.sqrt())
}

/// Prior-predictive pilot scale: simulate `n_pilot` datasets from the prior
/// predictive, summarize each, and take the per-component median absolute
/// deviation, floored at [`SCALE_FLOOR`].
///
/// Simulations fan out over per-task streams, so the result is independent
/// of thread count.
pub fn pilot_scale(
    model: &dyn SimulatorModel,
    summary: &dyn SummaryFn,
    n_pilot: usize,
    seed: StreamSeed,
) -> Result<SummaryScale> {
    if n_pilot < 2 {
        return Err(Error::config("pilot_scale requires n_pilot >= 2"));
    }
    let theta_seed = seed.child(0);
    let sim_seed = seed.child(1);
    let summaries: Vec<Result<Vec<f64>>> = (0..n_pilot)
        .into_par_iter()
        .map(|i| {
            let mut rng = theta_seed.stream(i as u64).rng();
            let theta = model.prior().sample(&mut rng);
            let z = model.simulate(&theta, sim_seed.stream(i as u64))?;
            compute_summary(summary, &z)
        })
        .collect();
    let mut columns = vec![Vec::with_capacity(n_pilot); summary.dim()];
    for s in summaries {
        let s = s?;
        for (j, v) in s.into_iter().enumerate() {
            columns[j].push(v);
        }
    }
    let scales: Vec<f64> = columns
        .iter()
        .map(|col| stats::mad(col).max(SCALE_FLOOR))
        .collect();
    SummaryScale::new(scales)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MarginalPrior, ParamVec, PriorSpec};
    use approx::assert_relative_eq;

    #[test]
    fn sample_mean_summary() {
        let d = Dataset::from_column(vec![1.0, 2.0, 6.0]).unwrap();
        assert_eq!(compute_summary(&SampleMean, &d).unwrap(), vec![3.0]);
        assert!(compute_summary(&SampleMean, &Dataset::empty()).is_err());
    }

    #[test]
    fn summary_distance_standardizes() {
        let scale = SummaryScale::new(vec![2.0, 1.0]).unwrap();
        let d = summary_distance(&[2.0, 1.0], &[0.0, 0.0], &scale).unwrap();
        assert_relative_eq!(d, (1.0f64 + 1.0).sqrt(), epsilon = 1e-15);
        // identical vectors at distance zero
        assert_eq!(summary_distance(&[1.0], &[1.0], &SummaryScale::unit(1)).unwrap(), 0.0);
    }

    #[test]
    fn summary_scale_validation() {
        assert!(SummaryScale::new(vec![1.0, 0.0]).is_err());
        assert!(SummaryScale::new(vec![-1.0]).is_err());
        assert!(SummaryScale::new(vec![]).is_err());
        assert!(SummaryScale::new(vec![0.5]).is_ok());
    }

    struct StandardNormalModel {
        prior: PriorSpec,
    }

    impl StandardNormalModel {
        fn new() -> Self {
            StandardNormalModel {
                prior: PriorSpec::new(vec![MarginalPrior::Uniform { low: -1.0, high: 1.0 }])
                    .unwrap(),
            }
        }
    }

    impl SimulatorModel for StandardNormalModel {
        fn param_dim(&self) -> usize {
            1
        }
        fn prior(&self) -> &PriorSpec {
            &self.prior
        }
        fn simulate(&self, _theta: &ParamVec, seed: StreamSeed) -> Result<Dataset> {
            use rand_distr::Distribution;
            let mut rng = seed.rng();
            let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
            Dataset::from_column(vec![z])
        }
    }

    /// The pilot scale of a standard-normal summary component is the MAD of
    /// N(0, 1), about 0.6745, regardless of the parameter draw.
    #[test]
    fn pilot_scale_of_standard_normal_component() {
        let model = StandardNormalModel::new();
        let scale = pilot_scale(&model, &SampleMean, 10_000, StreamSeed::new(99)).unwrap();
        let target = 0.674_489_75;
        assert!(
            (scale.values()[0] - target).abs() < 0.1 * target,
            "MAD {} not within 10% of {}",
            scale.values()[0],
            target
        );
    }

    #[test]
    fn pilot_scale_floors_constant_components() {
        struct ConstModel {
            prior: PriorSpec,
        }
        impl SimulatorModel for ConstModel {
            fn param_dim(&self) -> usize {
                1
            }
            fn prior(&self) -> &PriorSpec {
                &self.prior
            }
            fn simulate(&self, _theta: &ParamVec, _seed: StreamSeed) -> Result<Dataset> {
                Dataset::from_column(vec![4.0, 4.0])
            }
        }
        let model = ConstModel {
            prior: PriorSpec::new(vec![MarginalPrior::Uniform { low: 0.0, high: 1.0 }]).unwrap(),
        };
        let scale = pilot_scale(&model, &SampleMean, 16, StreamSeed::new(1)).unwrap();
        assert_eq!(scale.values()[0], SCALE_FLOOR);
    }

    #[test]
    fn pilot_scale_is_deterministic() {
        let model = StandardNormalModel::new();
        let a = pilot_scale(&model, &SampleMean, 64, StreamSeed::new(5)).unwrap();
        let b = pilot_scale(&model, &SampleMean, 64, StreamSeed::new(5)).unwrap();
        assert_eq!(a, b);
    }
}
