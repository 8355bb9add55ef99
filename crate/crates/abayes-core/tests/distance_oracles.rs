//! Cross-checks of the full-data distances against independent brute-force
//! evaluations of their definitions, plus property-based metric axioms.

use abayes_core::distances::{
    cramer_von_mises, energy_distance, gaussian_kernel, mmd_unbiased, mmd_v, wasserstein_1d,
};
use proptest::prelude::*;

/// Minimal-cost perfect matching by exhaustive permutation search; the
/// order-1 transport cost between equal-size empirical measures.
fn brute_force_matching_cost(x: &[f64], z: &[f64]) -> f64 {
    assert_eq!(x.len(), z.len());
    let n = z.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    // Heap's algorithm, iterative.
    let mut c = vec![0usize; n];
    let cost = |perm: &[usize]| -> f64 {
        perm.iter().enumerate().map(|(i, &j)| (x[i] - z[j]).abs()).sum::<f64>() / n as f64
    };
    best = best.min(cost(&indices));
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                indices.swap(0, i);
            } else {
                indices.swap(c[i], i);
            }
            best = best.min(cost(&indices));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

#[test]
fn wasserstein_equals_brute_force_assignment_up_to_n6() {
    let cases: Vec<(Vec<f64>, Vec<f64>)> = vec![
        (vec![0.0], vec![2.5]),
        (vec![1.0, -1.0], vec![0.3, 0.7]),
        (vec![0.0, 1.0, 4.0], vec![2.0, 2.0, -1.0]),
        (vec![0.5, 0.5, 0.5, 2.0], vec![1.0, -1.0, 0.0, 3.0]),
        (vec![3.1, -0.4, 0.0, 7.2, 1.1], vec![2.2, 2.2, -3.0, 0.1, 0.9]),
        (
            vec![0.9, -2.1, 3.3, 0.4, -0.6, 1.8],
            vec![1.0, 1.0, -1.5, 2.4, 0.0, -0.2],
        ),
    ];
    for (x, z) in cases {
        let fast = wasserstein_1d(&x, &z).unwrap();
        let brute = brute_force_matching_cost(&x, &z);
        assert!(
            (fast - brute).abs() < 1e-10,
            "sorted form {fast} vs assignment optimum {brute} on {x:?} / {z:?}"
        );
    }
}

#[test]
fn cramer_von_mises_matches_the_integral_definition() {
    let x = [0.3f64, 1.7, -0.4, 0.9];
    let z = [0.5f64, -1.2, 2.2, 0.9];
    // Direct evaluation: integrate (Fx - Fz)^2 against the pooled empirical
    // measure, point by point.
    let pooled: Vec<f64> = x.iter().chain(z.iter()).copied().collect();
    let ecdf = |s: &[f64], t: f64| s.iter().filter(|&&v| v <= t).count() as f64 / s.len() as f64;
    let direct: f64 = pooled
        .iter()
        .map(|&t| {
            let d = ecdf(&x, t) - ecdf(&z, t);
            d * d / pooled.len() as f64
        })
        .sum();
    let fast = cramer_von_mises(&x, &z).unwrap();
    assert!((fast - direct).abs() < 1e-10, "{fast} vs {direct}");
}

#[test]
fn mmd_matches_the_double_sum_definition() {
    let x = [0.4f64, -1.1, 2.0];
    let z = [0.0f64, 0.7, -0.3];
    let h = 0.8;
    // Unbiased form: off-diagonal within-sample means, full cross mean.
    let mut kxx = 0.0;
    let mut kzz = 0.0;
    let mut kxz = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            if a != b {
                kxx += gaussian_kernel(x[a], x[b], h);
                kzz += gaussian_kernel(z[a], z[b], h);
            }
            kxz += gaussian_kernel(x[a], z[b], h);
        }
    }
    let direct = kxx / 6.0 + kzz / 6.0 - 2.0 * kxz / 9.0;
    let fast = mmd_unbiased(&x, &z, h).unwrap();
    assert!((fast - direct).abs() < 1e-10, "{fast} vs {direct}");
}

#[test]
fn energy_distance_matches_the_double_sum_definition() {
    let x = [0.4f64, -1.1, 2.0, 0.2];
    let z = [0.0f64, 0.7, -0.3, 1.9];
    let mean_abs = |a: &[f64], b: &[f64]| -> f64 {
        let mut acc = 0.0;
        for &p in a {
            for &q in b {
                acc += (p - q).abs();
            }
        }
        acc / (a.len() * b.len()) as f64
    };
    let direct = 2.0 * mean_abs(&x, &z) - mean_abs(&x, &x) - mean_abs(&z, &z);
    let fast = energy_distance(&x, &z).unwrap();
    assert!((fast - direct).abs() < 1e-10, "{fast} vs {direct}");
}

#[test]
fn mmd_unbiased_is_centered_under_the_null() {
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};
    let mut estimates = Vec::new();
    for rep in 0..60u64 {
        let mut rng = abayes_core::rng::StreamSeed::new(501).stream(rep).rng();
        let x: Vec<f64> = (0..150).map(|_| StandardNormal.sample(&mut rng)).collect();
        let z: Vec<f64> = (0..150).map(|_| StandardNormal.sample(&mut rng)).collect();
        let _: f64 = rng.random(); // fixed consumption pattern
        estimates.push(mmd_unbiased(&x, &z, 1.0).unwrap());
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let sd = (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(estimates[0].abs() < 4.0 * sd, "single estimate {} vs 4 sd {}", estimates[0], 4.0 * sd);
    assert!(mean.abs() < 4.0 * sd / n.sqrt(), "mean {mean} vs 4 se {}", 4.0 * sd / n.sqrt());
}

fn sample_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 2..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2500))]

    /// Symmetry, nonnegativity, identity on equal multisets, permutation
    /// invariance, and translation invariance, for every distance at once.
    #[test]
    fn metric_axioms_hold(
        x in sample_strategy(),
        z in sample_strategy(),
        shift in -3.0f64..3.0,
    ) {
        let dists: Vec<(&str, Box<dyn Fn(&[f64], &[f64]) -> f64>)> = vec![
            ("w1", Box::new(|a: &[f64], b: &[f64]| wasserstein_1d(a, b).unwrap())),
            ("cvm", Box::new(|a: &[f64], b: &[f64]| cramer_von_mises(a, b).unwrap())),
            ("mmd_v", Box::new(|a: &[f64], b: &[f64]| mmd_v(a, b, 1.0).unwrap())),
            ("energy", Box::new(|a: &[f64], b: &[f64]| energy_distance(a, b).unwrap())),
        ];
        // A deterministic within-sample permutation: reversal.
        let x_rev: Vec<f64> = x.iter().rev().copied().collect();
        let z_rev: Vec<f64> = z.iter().rev().copied().collect();
        for (name, d) in &dists {
            let fwd = d(&x, &z);
            let bwd = d(&z, &x);
            prop_assert!(fwd >= 0.0, "{name} negative: {fwd}");
            prop_assert!((fwd - bwd).abs() <= 1e-12 * fwd.abs().max(1.0),
                "{name} asymmetric: {fwd} vs {bwd}");
            let self_d = d(&x, &x_rev);
            prop_assert!(self_d.abs() <= 1e-12, "{name} nonzero on identical multisets: {self_d}");
            let perm = d(&x_rev, &z_rev);
            prop_assert!((fwd - perm).abs() <= 1e-12 * fwd.abs().max(1.0),
                "{name} not permutation-invariant: {fwd} vs {perm}");
        }
        // Translation invariance holds for the transport and energy forms.
        let xs: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let zs: Vec<f64> = z.iter().map(|v| v + shift).collect();
        let w_base = wasserstein_1d(&x, &z).unwrap();
        let w_shift = wasserstein_1d(&xs, &zs).unwrap();
        prop_assert!((w_base - w_shift).abs() <= 1e-9 * w_base.abs().max(1.0),
            "w1 not translation-invariant: {w_base} vs {w_shift}");
        let e_base = energy_distance(&x, &z).unwrap();
        let e_shift = energy_distance(&xs, &zs).unwrap();
        prop_assert!((e_base - e_shift).abs() <= 1e-9 * e_base.abs().max(1.0),
            "energy not translation-invariant: {e_base} vs {e_shift}");
    }
}
