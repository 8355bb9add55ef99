//! Posterior summaries, effective sample size, and distribution comparison.

use crate::error::{Error, Result};
use crate::model::WeightedDraws;
use crate::stats::sort_floats;

/// Interval levels reported by [`summarize`].
pub const INTERVAL_LEVELS: [f64; 3] = [0.5, 0.9, 0.95];

/// Per-parameter posterior summary.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSummary {
    /// Weighted posterior mean.
    pub mean: f64,
    /// Weighted posterior standard deviation (population form).
    pub sd: f64,
    /// Equal-tailed weighted quantile intervals at the levels in
    /// [`INTERVAL_LEVELS`], as `(low, high)` pairs.
    pub intervals: [(f64, f64); 3],
}

/// Posterior summary for a whole draw set.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSummary {
    /// One entry per parameter coordinate.
    pub params: Vec<ParamSummary>,
    /// Effective sample size, when the producing method is a Markov chain
    /// (filled by [`summarize_chain`]; `None` from [`summarize`]).
    pub ess: Option<f64>,
    /// Name of the producing method, copied from the draws metadata.
    pub method: String,
    /// Warning flags, copied from the draws metadata plus any added here.
    pub flags: Vec<String>,
}

/// Weighted quantile: smallest draw value whose cumulative weight reaches
/// `level`. Draws are sorted by value; weights are assumed normalized.
fn weighted_quantile(sorted_pairs: &[(f64, f64)], level: f64) -> f64 {
    let mut acc = 0.0;
    for &(v, w) in sorted_pairs {
        acc += w;
        if acc >= level {
            return v;
        }
    }
    sorted_pairs.last().expect("non-empty by construction").0
}

/// Weighted moment-and-interval summary of a draw set.
pub fn summarize(draws: &WeightedDraws) -> Result<PosteriorSummary> {
    let p = draws.dim();
    let w = draws.weights();
    let mut params = Vec::with_capacity(p);
    for j in 0..p {
        let xs = draws.param_column(j);
        let mean: f64 = xs.iter().zip(w).map(|(x, w)| x * w).sum();
        let var: f64 = xs.iter().zip(w).map(|(x, w)| w * (x - mean) * (x - mean)).sum();
        let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(w.iter().copied()).collect();
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut intervals = [(0.0, 0.0); 3];
        for (k, level) in INTERVAL_LEVELS.iter().enumerate() {
            let tail = (1.0 - level) / 2.0;
            intervals[k] = (
                weighted_quantile(&pairs, tail),
                weighted_quantile(&pairs, 1.0 - tail),
            );
        }
        params.push(ParamSummary { mean, sd: var.sqrt(), intervals });
    }
    Ok(PosteriorSummary {
        params,
        ess: None,
        method: draws.meta().method.clone(),
        flags: draws.meta().flags.clone(),
    })
}

/// Like [`summarize`], but also computes the chain effective sample size
/// and records any ESS flags. Intended for equal-weight Markov chain output.
pub fn summarize_chain(draws: &WeightedDraws) -> Result<PosteriorSummary> {
    let mut summary = summarize(draws)?;
    let e = ess(draws)?;
    summary.ess = Some(e.value);
    if e.clipped {
        summary.flags.push("ess_clipped_to_chain_length".to_string());
    }
    if e.degenerate {
        summary.flags.push("ess_degenerate_chain".to_string());
    }
    Ok(summary)
}

/// Effective sample size estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EssEstimate {
    /// Minimum ESS over parameter coordinates.
    pub value: f64,
    /// True when the raw estimate exceeded the chain length and was clipped.
    pub clipped: bool,
    /// True when some coordinate had zero variance (constant chain); the
    /// ESS is reported as the chain length in that case.
    pub degenerate: bool,
}

/// Effective sample size of an (equal-weight) chain via the initial
/// positive sequence estimator of the autocorrelation time, taken
/// coordinate-wise and minimized over coordinates. Estimates above the
/// chain length are clipped to it (flagged).
pub fn ess(draws: &WeightedDraws) -> Result<EssEstimate> {
    let n = draws.len();
    if n < 2 {
        return Err(Error::degenerate("ESS requires a chain of length >= 2"));
    }
    let mut min_ess = f64::INFINITY;
    let mut clipped = false;
    let mut degenerate = false;
    for j in 0..draws.dim() {
        let xs = draws.param_column(j);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = xs.iter().map(|x| x - mean).collect();
        let gamma0: f64 = centered.iter().map(|c| c * c).sum::<f64>() / n as f64;
        if gamma0 <= 0.0 {
            degenerate = true;
            min_ess = min_ess.min(n as f64);
            continue;
        }
        let gamma = |t: usize| -> f64 {
            let mut acc = 0.0;
            for i in 0..n - t {
                acc += centered[i] * centered[i + t];
            }
            acc / n as f64
        };
        // Initial positive sequence: sum consecutive autocovariance pairs
        // while the pair sums stay positive.
        let mut tau_sum = 0.0; // sum over k of Gamma_k = gamma_{2k} + gamma_{2k+1}
        let mut k = 0usize;
        loop {
            let t0 = 2 * k;
            let t1 = 2 * k + 1;
            if t0 >= n - 1 {
                break;
            }
            let g0 = if t0 == 0 { gamma0 } else { gamma(t0) };
            let g1 = if t1 < n - 1 { gamma(t1) } else { 0.0 };
            let pair = g0 + g1;
            if pair <= 0.0 {
                break;
            }
            tau_sum += pair;
            k += 1;
        }
        let tau = (2.0 * tau_sum / gamma0 - 1.0).max(1e-12);
        let mut e = n as f64 / tau;
        if e > n as f64 {
            e = n as f64;
            clipped = true;
        }
        min_ess = min_ess.min(e);
    }
    Ok(EssEstimate { value: min_ess, clipped, degenerate })
}

/// Total variation distance between two weighted draw sets on coordinate
/// `coord`, via histograms with `bins` equal-width bins spanning the union
/// of both sample ranges.
pub fn total_variation_1d(
    a: &WeightedDraws,
    b: &WeightedDraws,
    coord: usize,
    bins: usize,
) -> Result<f64> {
    if bins == 0 {
        return Err(Error::config("total_variation_1d requires bins >= 1"));
    }
    if coord >= a.dim() || coord >= b.dim() {
        return Err(Error::dims(format!(
            "coordinate {coord} out of range for dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let xa = a.param_column(coord);
    let xb = b.param_column(coord);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in xa.iter().chain(xb.iter()) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if lo == hi {
        // Both samples concentrate on a single shared point: identical
        // histograms, distance zero.
        return Ok(0.0);
    }
    let width = (hi - lo) / bins as f64;
    let mut ha = vec![0.0; bins];
    let mut hb = vec![0.0; bins];
    let bin_of = |v: f64| -> usize { (((v - lo) / width) as usize).min(bins - 1) };
    for (v, w) in xa.iter().zip(a.weights()) {
        ha[bin_of(*v)] += w;
    }
    for (v, w) in xb.iter().zip(b.weights()) {
        hb[bin_of(*v)] += w;
    }
    Ok(0.5 * ha.iter().zip(&hb).map(|(p, q)| (p - q).abs()).sum::<f64>())
}

/// Equal-tailed weighted interval of a single coordinate at the given level
/// (helper shared with report code).
pub fn weighted_interval(draws: &WeightedDraws, coord: usize, level: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&level) || level <= 0.0 {
        return Err(Error::config(format!("interval level must be in (0,1), got {level}")));
    }
    let xs = draws.param_column(coord);
    let mut pairs: Vec<(f64, f64)> =
        xs.iter().copied().zip(draws.weights().iter().copied()).collect();
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let tail = (1.0 - level) / 2.0;
    Ok((weighted_quantile(&pairs, tail), weighted_quantile(&pairs, 1.0 - tail)))
}

/// Unweighted sample median (convenience re-export used by report code).
pub fn sample_median(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::degenerate("median of an empty sample"));
    }
    let mut v = xs.to_vec();
    sort_floats(&mut v);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
