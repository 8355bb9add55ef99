//! Density curves, total-variation distances, and the comparison table.

/// A one-dimensional density sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

/// Number of grid points for kernel density curves.
pub const KDE_POINTS: usize = 201;

/// Number of grid points a total-variation comparison is evaluated on.
const TV_POINTS: usize = 513;

fn weighted_mean_sd(values: &[f64], weights: &[f64]) -> (f64, f64) {
    let mean: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    let var: f64 = values.iter().zip(weights).map(|(v, w)| w * (v - mean) * (v - mean)).sum();
    (mean, var.max(0.0).sqrt())
}

/// Weighted quantile on normalized weights: smallest value whose
/// cumulative weight reaches `level`.
fn weighted_quantile(values: &[f64], weights: &[f64], level: f64) -> f64 {
    let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    for &(v, w) in &pairs {
        acc += w;
        if acc >= level {
            return v;
        }
    }
    pairs.last().map(|p| p.0).unwrap_or(f64::NAN)
}

/// Gaussian kernel density estimate of a weighted sample, on
/// [`KDE_POINTS`] grid points spanning the draws plus three bandwidths.
///
/// The bandwidth is the common plug-in rule `0.9 min(sd, iqr/1.34)
/// n_eff^(-1/5)` with the effective sample size of the weights standing in
/// for the sample count; a floor keeps the curve finite when the draws are
/// (nearly) constant.
pub fn weighted_kde(values: &[f64], weights: &[f64]) -> Curve {
    let (mean, sd) = weighted_mean_sd(values, weights);
    let iqr = weighted_quantile(values, weights, 0.75) - weighted_quantile(values, weights, 0.25);
    let n_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut spread = sd.min(iqr / 1.34);
    if !(spread > 0.0) {
        spread = sd.max(iqr / 1.34);
    }
    let mut h = 0.9 * spread * n_eff.powf(-0.2);
    if !(h > 0.0 && h.is_finite()) {
        h = 1e-9 * (1.0 + mean.abs());
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let step = (hi - lo) / (KDE_POINTS - 1) as f64;
    let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
    let grid: Vec<f64> = (0..KDE_POINTS).map(|i| lo + i as f64 * step).collect();
    let density: Vec<f64> = grid
        .iter()
        .map(|&g| {
            values
                .iter()
                .zip(weights)
                .map(|(&v, &w)| {
                    let z = (g - v) / h;
                    w * norm * (-0.5 * z * z).exp()
                })
                .sum()
        })
        .collect();
    Curve { grid, density }
}

/// Linear interpolation of a curve at `x`, zero outside its grid.
fn interp(curve: &Curve, x: f64) -> f64 {
    let g = &curve.grid;
    if x < g[0] || x > *g.last().unwrap() {
        return 0.0;
    }
    match g.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) => curve.density[i],
        Err(i) => {
            let (x0, x1) = (g[i - 1], g[i]);
            let (y0, y1) = (curve.density[i - 1], curve.density[i]);
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        }
    }
}

/// Total-variation distance between two density curves: both are
/// resampled onto a shared grid covering their union support, renormalized
/// to unit trapezoid mass, and `0.5 * integral |f - g|` is returned.
/// Identical curves short-circuit to exactly zero.
pub fn tv_distance(a: &Curve, b: &Curve) -> f64 {
    if a == b {
        return 0.0;
    }
    let lo = a.grid[0].min(b.grid[0]);
    let hi = a.grid.last().unwrap().max(*b.grid.last().unwrap());
    let step = (hi - lo) / (TV_POINTS - 1) as f64;
    let xs: Vec<f64> = (0..TV_POINTS).map(|i| lo + i as f64 * step).collect();
    let fa: Vec<f64> = xs.iter().map(|&x| interp(a, x)).collect();
    let fb: Vec<f64> = xs.iter().map(|&x| interp(b, x)).collect();
    let mass = |f: &[f64]| -> f64 {
        (0..TV_POINTS - 1).map(|i| 0.5 * (f[i] + f[i + 1]) * step).sum()
    };
    let (ma, mb) = (mass(&fa), mass(&fb));
    if !(ma > 0.0) || !(mb > 0.0) {
        return 1.0;
    }
    let tv: f64 = (0..TV_POINTS - 1)
        .map(|i| {
            let d0 = (fa[i] / ma - fb[i] / mb).abs();
            let d1 = (fa[i + 1] / ma - fb[i + 1] / mb).abs();
            0.5 * (d0 + d1) * step
        })
        .sum();
    0.5 * tv
}

/// One row of the comparison table.
pub struct ReportRow {
    pub method: String,
    pub param: String,
    pub mean: f64,
    pub sd: f64,
    pub ci90: (f64, f64),
    pub tv_vs_reference: f64,
}

/// Renders the comparison table for stdout.
pub fn render_table(rows: &[ReportRow], reference: &str) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:<14} {:>12} {:>12} {:>26} {:>10}\n",
        "param", "method", "mean", "sd", "90% interval", "tv"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:<14} {:>12.5} {:>12.5} [{:>11.5}, {:>11.5}] {:>10.4}\n",
            r.param, r.method, r.mean, r.sd, r.ci90.0, r.ci90.1, r.tv_vs_reference
        ));
    }
    out.push_str(&format!("tv column: total-variation distance to \"{reference}\"\n"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kde_integrates_to_about_one() {
        let values: Vec<f64> = (0..200).map(|i| (i as f64) / 40.0 - 2.5).collect();
        let weights = vec![1.0 / 200.0; 200];
        let c = weighted_kde(&values, &weights);
        let step = c.grid[1] - c.grid[0];
        let mass: f64 = (0..c.grid.len() - 1)
            .map(|i| 0.5 * (c.density[i] + c.density[i + 1]) * step)
            .sum();
        assert!((mass - 1.0).abs() < 1e-3, "mass {mass}");
    }

    #[test]
    fn identical_curves_have_zero_tv() {
        let values: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let weights = vec![0.02; 50];
        let c = weighted_kde(&values, &weights);
        assert_eq!(tv_distance(&c, &c.clone()), 0.0);
    }

    #[test]
    fn disjoint_curves_have_tv_near_one() {
        let a = Curve { grid: vec![0.0, 1.0], density: vec![1.0, 1.0] };
        let b = Curve { grid: vec![10.0, 11.0], density: vec![1.0, 1.0] };
        let tv = tv_distance(&a, &b);
        assert!(tv > 0.95, "tv {tv}");
    }

    #[test]
    fn shifted_gaussians_match_the_analytic_overlap() {
        // TV between N(0,1) and N(1,1) is 2 Phi(1/2) - 1 ~ 0.3829.
        let gauss = |mu: f64| {
            let grid: Vec<f64> = (0..2001).map(|i| mu - 8.0 + (i as f64) * 8.0 / 1000.0).collect();
            let density = grid
                .iter()
                .map(|&x| (-0.5 * (x - mu) * (x - mu)).exp() / (2.0 * std::f64::consts::PI).sqrt())
                .collect();
            Curve { grid, density }
        };
        let tv = tv_distance(&gauss(0.0), &gauss(1.0));
        assert!((tv - 0.3829).abs() < 5e-3, "tv {tv}");
    }

    #[test]
    fn constant_draws_keep_the_kde_finite() {
        let values = vec![2.0; 10];
        let weights = vec![0.1; 10];
        let c = weighted_kde(&values, &weights);
        assert!(c.density.iter().all(|d| d.is_finite()));
        assert!(c.density.iter().any(|&d| d > 0.0));
    }
}
