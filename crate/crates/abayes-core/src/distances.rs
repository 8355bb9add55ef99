//! Full-data discrepancy metrics between scalar samples.
//!
//! These operate directly on two samples of scalar observations, with no
//! summary statistics in between. All four are symmetric in their arguments
//! and vanish on identical samples (the MMD in its V-statistic form; the
//! unbiased MMD estimator may be negative by design).

use crate::error::{Error, Result};
use crate::stats::{ensure_all_finite, median_of, sort_floats};

fn check_sample(xs: &[f64], what: &str) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::degenerate(format!("{what} sample is empty")));
    }
    ensure_all_finite(xs, what)
}

/// First Wasserstein distance between two scalar samples.
///
/// Equal sample sizes use the order-statistic form: the mean absolute
/// difference of sorted values. Unequal sizes integrate the quantile
/// difference exactly: both inverse CDFs are step functions with jumps at
/// `i/n` and `j/m`, so the integrand is constant between consecutive
/// breakpoints of the merged partition. Either way the result is the exact
/// distance between the two empirical distributions, so the metric axioms
/// hold up to floating-point rounding.
pub fn wasserstein_1d(x: &[f64], z: &[f64]) -> Result<f64> {
    check_sample(x, "first")?;
    check_sample(z, "second")?;
    let mut xs = x.to_vec();
    let mut zs = z.to_vec();
    sort_floats(&mut xs);
    sort_floats(&mut zs);
    if xs.len() == zs.len() {
        let n = xs.len() as f64;
        Ok(xs.iter().zip(&zs).map(|(a, b)| (a - b).abs()).sum::<f64>() / n)
    } else {
        // Breakpoints are compared in integer units of 1/(n m) so segment
        // boundaries never depend on floating-point division.
        let (n, m) = (xs.len() as u64, zs.len() as u64);
        let mut acc = 0.0;
        let (mut i, mut j) = (0u64, 0u64);
        let mut pos = 0u64;
        while i < n && j < m {
            let next_x = (i + 1) * m;
            let next_z = (j + 1) * n;
            let next = next_x.min(next_z);
            acc += (next - pos) as f64 * (xs[i as usize] - zs[j as usize]).abs();
            pos = next;
            if next_x == next {
                i += 1;
            }
            if next_z == next {
                j += 1;
            }
        }
        Ok(acc / (n * m) as f64)
    }
}

/// Two-sample Cramér-von Mises discrepancy.
///
/// Computes the integral of the squared difference of the two empirical
/// CDFs against the pooled empirical measure, by a single merge sweep over
/// the pooled order statistics (ties handled by value groups):
/// `sum_t m(t) (F_x(t) - F_z(t))^2 / (n + m)` where `m(t)` is the pooled
/// multiplicity of the value `t`.
pub fn cramer_von_mises(x: &[f64], z: &[f64]) -> Result<f64> {
    check_sample(x, "first")?;
    check_sample(z, "second")?;
    let mut xs = x.to_vec();
    let mut zs = z.to_vec();
    sort_floats(&mut xs);
    sort_floats(&mut zs);
    let (n, m) = (xs.len(), zs.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut acc = 0.0;
    while i < n || j < m {
        // Next distinct pooled value.
        let t = match (xs.get(i), zs.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        let mut mult = 0usize;
        while i < n && xs[i] == t {
            i += 1;
            mult += 1;
        }
        while j < m && zs[j] == t {
            j += 1;
            mult += 1;
        }
        let fx = i as f64 / n as f64;
        let fz = j as f64 / m as f64;
        acc += mult as f64 * (fx - fz) * (fx - fz);
    }
    Ok(acc / (n + m) as f64)
}

/// Gaussian kernel `exp(-(a-b)^2 / (2 h^2))`; equals one at `a == b`.
pub fn gaussian_kernel(a: f64, b: f64, bandwidth: f64) -> f64 {
    let d = a - b;
    (-(d * d) / (2.0 * bandwidth * bandwidth)).exp()
}

/// Median pairwise absolute difference over the pooled sample, the default
/// kernel bandwidth. Errors when the pooled sample has fewer than two points
/// or when all points coincide (zero spread).
pub fn median_heuristic_bandwidth(x: &[f64], z: &[f64]) -> Result<f64> {
    check_sample(x, "first")?;
    check_sample(z, "second")?;
    let pooled: Vec<f64> = x.iter().chain(z.iter()).copied().collect();
    let mut dists = Vec::with_capacity(pooled.len() * (pooled.len() - 1) / 2);
    for a in 0..pooled.len() {
        for b in a + 1..pooled.len() {
            dists.push((pooled[a] - pooled[b]).abs());
        }
    }
    let med = median_of(&dists);
    if med <= 0.0 {
        return Err(Error::degenerate(
            "median pairwise distance is zero; kernel bandwidth undefined".to_string(),
        ));
    }
    Ok(med)
}

fn validate_bandwidth(bandwidth: f64) -> Result<()> {
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(Error::config(format!("kernel bandwidth must be positive, got {bandwidth}")));
    }
    Ok(())
}

/// Unbiased estimate of the squared maximum mean discrepancy under the
/// Gaussian kernel. Requires at least two points per sample; may be
/// negative (no clamping here — clamp at reporting time if needed).
pub fn mmd_unbiased(x: &[f64], z: &[f64], bandwidth: f64) -> Result<f64> {
    check_sample(x, "first")?;
    check_sample(z, "second")?;
    validate_bandwidth(bandwidth)?;
    let (n, m) = (x.len(), z.len());
    if n < 2 || m < 2 {
        return Err(Error::degenerate(
            "unbiased MMD requires at least two points per sample".to_string(),
        ));
    }
    let mut kxx = 0.0;
    for a in 0..n {
        for b in 0..n {
            if a != b {
                kxx += gaussian_kernel(x[a], x[b], bandwidth);
            }
        }
    }
    let mut kzz = 0.0;
    for a in 0..m {
        for b in 0..m {
            if a != b {
                kzz += gaussian_kernel(z[a], z[b], bandwidth);
            }
        }
    }
    let mut kxz = 0.0;
    for a in 0..n {
        for b in 0..m {
            kxz += gaussian_kernel(x[a], z[b], bandwidth);
        }
    }
    Ok(kxx / (n * (n - 1)) as f64 + kzz / (m * (m - 1)) as f64 - 2.0 * kxz / (n * m) as f64)
}

/// V-statistic (biased, non-negative) form of the squared MMD under the
/// Gaussian kernel. Zero exactly when the samples are identical multisets;
/// this is the form used as an ABC distance.
pub fn mmd_v(x: &[f64], z: &[f64], bandwidth: f64) -> Result<f64> {
    check_sample(x, "first")?;
    check_sample(z, "second")?;
    validate_bandwidth(bandwidth)?;
    let (n, m) = (x.len() as f64, z.len() as f64);
    let mut kxx = 0.0;
    for &a in x {
        for &b in x {
            kxx += gaussian_kernel(a, b, bandwidth);
        }
    }
    let mut kzz = 0.0;
    for &a in z {
        for &b in z {
            kzz += gaussian_kernel(a, b, bandwidth);
        }
    }
    let mut kxz = 0.0;
    for &a in x {
        for &b in z {
            kxz += gaussian_kernel(a, b, bandwidth);
        }
    }
    // Clamp tiny negative round-off; the exact V-statistic is non-negative.
    Ok((kxx / (n * n) + kzz / (m * m) - 2.0 * kxz / (n * m)).max(0.0))
}

/// Energy distance in V-statistic form:
/// `2 E|X - Z| - E|X - X'| - E|Z - Z'|` over the empirical distributions.
pub fn energy_distance(x: &[f64], z: &[f64]) -> Result<f64> {
    check_sample(x, "first")?;
    check_sample(z, "second")?;
    let (n, m) = (x.len() as f64, z.len() as f64);
    let mut cross = 0.0;
    for &a in x {
        for &b in z {
            cross += (a - b).abs();
        }
    }
    let mut within_x = 0.0;
    for &a in x {
        for &b in x {
            within_x += (a - b).abs();
        }
    }
    let mut within_z = 0.0;
    for &a in z {
        for &b in z {
            within_z += (a - b).abs();
        }
    }
    Ok((2.0 * cross / (n * m) - within_x / (n * n) - within_z / (m * m)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wasserstein_point_masses() {
        assert_relative_eq!(wasserstein_1d(&[0.0], &[3.0]).unwrap(), 3.0, epsilon = 1e-15);
        assert_relative_eq!(
            wasserstein_1d(&[0.0, 2.0], &[1.0, 3.0]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_eq!(wasserstein_1d(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn wasserstein_unequal_sizes_exact_value() {
        // Quantile functions differ by 1 exactly on (1/3, 1/2] and (2/3, 1].
        assert_relative_eq!(
            wasserstein_1d(&[0.0, 1.0], &[0.0, 1.0, 2.0]).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        // Point mass against three points: mean absolute deviation.
        assert_relative_eq!(
            wasserstein_1d(&[1.0], &[0.0, 1.0, 5.0]).unwrap(),
            (1.0 + 0.0 + 4.0) / 3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn wasserstein_unequal_sizes_location_shift() {
        // Shifting a sample by c moves every quantile by c.
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let z: Vec<f64> = (0..25).map(|i| i as f64 * 0.4 + 1.5).collect();
        let base = wasserstein_1d(&x, &z).unwrap();
        let shifted: Vec<f64> = z.iter().map(|v| v + 2.0).collect();
        let moved = wasserstein_1d(&x, &shifted).unwrap();
        assert!(moved > base);
        let same_shift: Vec<f64> = x.iter().map(|v| v + 2.0).collect();
        assert_relative_eq!(wasserstein_1d(&same_shift, &shifted).unwrap(), base, epsilon = 1e-12);
    }

    #[test]
    fn wasserstein_rejects_empty() {
        assert!(wasserstein_1d(&[], &[1.0]).is_err());
        assert!(wasserstein_1d(&[1.0], &[]).is_err());
    }

    #[test]
    fn cvm_zero_on_identical_multisets() {
        assert_eq!(cramer_von_mises(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), 0.0);
        let v = cramer_von_mises(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn cvm_positive_and_symmetric() {
        let x = [0.0, 1.0, 2.0];
        let z = [0.5, 1.5];
        let a = cramer_von_mises(&x, &z).unwrap();
        let b = cramer_von_mises(&z, &x).unwrap();
        assert!(a > 0.0);
        assert_relative_eq!(a, b, epsilon = 1e-15);
    }

    #[test]
    fn kernel_is_one_at_equal_points() {
        assert_eq!(gaussian_kernel(1.7, 1.7, 0.3), 1.0);
        assert!(gaussian_kernel(0.0, 1.0, 0.5) < 1.0);
    }

    #[test]
    fn mmd_v_zero_on_identical_samples() {
        let x = [0.3, -1.2, 0.8];
        assert_relative_eq!(mmd_v(&x, &x, 1.0).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mmd_unbiased_needs_two_points() {
        assert!(mmd_unbiased(&[1.0], &[1.0, 2.0], 1.0).is_err());
        assert!(mmd_unbiased(&[1.0, 2.0], &[1.0, 2.0], 1.0).is_ok());
    }

    #[test]
    fn median_heuristic_on_degenerate_sample_errors() {
        assert!(median_heuristic_bandwidth(&[1.0, 1.0], &[1.0]).is_err());
        let bw = median_heuristic_bandwidth(&[0.0, 1.0], &[2.0]).unwrap();
        assert_relative_eq!(bw, 1.0, epsilon = 1e-15); // pairwise distances {1, 2, 1}
    }

    #[test]
    fn energy_distance_point_masses() {
        let c = -2.5f64;
        assert_relative_eq!(energy_distance(&[0.0], &[c]).unwrap(), 2.0 * c.abs(), epsilon = 1e-15);
        assert_eq!(energy_distance(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), 0.0);
    }
}
