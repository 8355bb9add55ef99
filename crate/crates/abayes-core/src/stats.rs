//! Small numerical helpers shared by the engine modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Sort a slice of floats by total order (NaNs would sort last, but callers
/// validate finiteness first).
pub(crate) fn sort_floats(xs: &mut [f64]) {
    xs.sort_unstable_by(f64::total_cmp);
}

/// Median of a non-empty slice; even lengths average the middle pair.
pub(crate) fn median_of(xs: &[f64]) -> f64 {
    debug_assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    sort_floats(&mut v);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median absolute deviation about the median (no consistency factor).
pub(crate) fn mad(xs: &[f64]) -> f64 {
    let m = median_of(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - m).abs()).collect();
    median_of(&dev)
}

/// log(sum(exp(xs))) guarded against overflow; -inf for all -inf input.
pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log density of N(mean, var) at x.
pub(crate) fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    debug_assert!(var > 0.0);
    let z = x - mean;
    -0.5 * (LN_2PI + var.ln() + z * z / var)
}

/// Standard normal CDF.
pub(crate) fn std_normal_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Log determinant of the factored matrix, from its Cholesky factor.
pub(crate) fn ln_det_from_cholesky(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Multivariate normal log density at `x` for mean `mean` and covariance
/// factored as `chol`.
pub(crate) fn mvn_logpdf(x: &DVector<f64>, mean: &DVector<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    let k = x.len() as f64;
    let diff = x - mean;
    let solved = chol.solve(&diff);
    let quad = diff.dot(&solved);
    -0.5 * (k * LN_2PI + ln_det_from_cholesky(chol) + quad)
}

/// Cholesky factorization with an informative error on failure.
pub(crate) fn cholesky_or_err(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m)
        .ok_or_else(|| Error::numerical(format!("{what}: matrix is not positive definite")))
}

/// Weighted mean and covariance of row vectors (weights normalized by caller
/// or not; they are re-normalized internally). Covariance is the weighted
/// population form sum_i w_i (x_i - mu)(x_i - mu)'.
pub(crate) fn weighted_mean_and_cov(points: &[Vec<f64>], weights: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let n = points.len();
    debug_assert!(n > 0 && weights.len() == n);
    let d = points[0].len();
    let wsum: f64 = weights.iter().sum();
    let mut mean = DVector::zeros(d);
    for (p, &w) in points.iter().zip(weights) {
        for j in 0..d {
            mean[j] += w * p[j];
        }
    }
    mean /= wsum;
    let mut cov = DMatrix::zeros(d, d);
    for (p, &w) in points.iter().zip(weights) {
        for a in 0..d {
            let da = p[a] - mean[a];
            for b in a..d {
                let v = w * da * (p[b] - mean[b]);
                cov[(a, b)] += v;
            }
        }
    }
    cov /= wsum;
    for a in 0..d {
        for b in 0..a {
            cov[(a, b)] = cov[(b, a)];
        }
    }
    (mean, cov)
}

/// Trapezoid-rule cell weights for an increasing (possibly non-uniform) grid.
pub(crate) fn trapezoid_cells(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    debug_assert!(n >= 2);
    let mut w = vec![0.0; n];
    w[0] = 0.5 * (grid[1] - grid[0]);
    w[n - 1] = 0.5 * (grid[n - 1] - grid[n - 2]);
    for i in 1..n - 1 {
        w[i] = 0.5 * (grid[i + 1] - grid[i - 1]);
    }
    w
}

/// Validate that every element of `xs` is finite.
pub(crate) fn ensure_all_finite(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::non_finite(format!("{what} contains a NaN or infinity")))
    }
}

/// Maximize a unimodal scalar function on [a, b] by golden-section search.
/// Returns the abscissa of the maximum.
pub(crate) fn golden_section_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn median_and_mad() {
        assert_eq!(median_of(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_of(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        // deviations about median 2: [1, 0, 1] -> MAD 1
        assert_eq!(mad(&[1.0, 2.0, 3.0]), 1.0);
    }

    #[test]
    fn logsumexp_matches_direct() {
        let xs = [-1.0f64, 0.5, 2.0];
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert_relative_eq!(logsumexp(&xs), direct, max_relative = 1e-14);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn normal_cdf_symmetry() {
        assert_relative_eq!(std_normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(std_normal_cdf(1.0) + std_normal_cdf(-1.0), 1.0, epsilon = 1e-14);
        assert_eq!(std_normal_cdf(f64::INFINITY), 1.0);
        assert_eq!(std_normal_cdf(f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn mvn_logpdf_matches_scalar_normal() {
        let chol = Cholesky::new(DMatrix::from_element(1, 1, 2.0)).unwrap();
        let x = DVector::from_element(1, 0.7);
        let mean = DVector::from_element(1, -0.3);
        assert_relative_eq!(
            mvn_logpdf(&x, &mean, &chol),
            normal_logpdf(0.7, -0.3, 2.0),
            epsilon = 1e-14
        );
    }

    #[test]
    fn trapezoid_cells_sum_to_range() {
        let grid = [0.0, 0.5, 1.5, 2.0];
        let cells = trapezoid_cells(&grid);
        assert_relative_eq!(cells.iter().sum::<f64>(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let f = |x: f64| -(x - 1.3) * (x - 1.3);
        let xmax = golden_section_max(&f, -5.0, 5.0, 1e-10);
        assert_relative_eq!(xmax, 1.3, epsilon = 1e-8);
    }

    #[test]
    fn weighted_cov_simple() {
        let pts = vec![vec![0.0], vec![2.0]];
        let (mean, cov) = weighted_mean_and_cov(&pts, &[1.0, 1.0]);
        assert_relative_eq!(mean[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(cov[(0, 0)], 1.0, epsilon = 1e-15);
    }
}
