//! Exactness and self-consistency checks for the mode-and-curvature
//! engine on models where independent answers are available.

use abayes_core::benchmarks::GaussianLgm;
use abayes_core::laplace::{
    hyper_marginal_grid, laplace_interval_prob, latent_marginal, marginal_likelihood_laplace,
    GridSpec, LatentGaussianModel, ObsModel,
};
use nalgebra::DMatrix;
use statrs::distribution::{Beta, ContinuousCDF};

/// A latent Gaussian model whose precision ignores the hyperparameter and
/// whose hyperprior is standard normal: the hyperparameter is then pure
/// bookkeeping, every grid node shares one conditional, and all latent
/// marginals are exactly Gaussian.
fn constant_precision_model(k: usize, prec: f64, noise_var: f64) -> LatentGaussianModel {
    LatentGaussianModel::new(
        k,
        1,
        DMatrix::identity(k, k),
        ObsModel::Gaussian { noise_var },
        Box::new(|phi: &[f64]| -0.5 * phi[0] * phi[0]),
        Box::new(move |_phi: &[f64]| Ok(DMatrix::identity(k, k) * prec)),
    )
    .unwrap()
}

#[test]
fn latent_marginal_is_exact_when_the_model_is_gaussian() {
    let y = [0.8f64, -0.4, 1.6];
    let model = constant_precision_model(3, 2.0, 1.0);
    let spec = GridSpec { center: None, half_width_sd: 8.0, points_per_dim: 41 };
    // Posterior of x_1: precision 2 + 1 = 3, mean y_1 / 3.
    let post_mean = y[1] / 3.0;
    let post_var = 1.0 / 3.0;
    let d = latent_marginal(&model, 1, &spec, &y).unwrap();
    let mut sup = 0.0f64;
    for (x, dens) in d.grid().iter().zip(d.density()) {
        let exact = (-0.5 * (x - post_mean).powi(2) / post_var).exp()
            / (2.0 * std::f64::consts::PI * post_var).sqrt();
        sup = sup.max((dens - exact).abs());
    }
    assert!(sup < 1e-6, "sup-norm deviation {sup}");
    assert!((d.mean() - post_mean).abs() < 1e-8);
    // The summary grid spans +/- 5 sd, and clipping a Gaussian there
    // trims ~4e-6 off its standard deviation, so allow that much.
    assert!((d.sd() - post_var.sqrt()).abs() < 1e-5);
}

#[test]
fn hyper_marginal_grid_recovers_a_known_gaussian_posterior() {
    // With a constant precision map the hyperparameter never touches the
    // data, so its posterior equals its N(0, 1) prior exactly.
    let y = [0.8f64, -0.4, 1.6];
    let model = constant_precision_model(3, 2.0, 1.0);
    let spec = GridSpec { center: None, half_width_sd: 6.0, points_per_dim: 41 };
    let d = hyper_marginal_grid(&model, 0, &spec, &y).unwrap();
    let cell = d.grid()[1] - d.grid()[0];
    assert!(d.mean().abs() < cell, "grid mean {} vs one cell {cell}", d.mean());
    assert!((d.sd() - 1.0).abs() < 0.01, "grid sd {}", d.sd());
    assert!((d.integral() - 1.0).abs() < 1e-9);
}

#[test]
fn evidence_matches_dense_quadrature_on_the_gaussian_benchmark() {
    let bench = GaussianLgm::new(6, 1.0).unwrap();
    let y = vec![0.4, -0.9, 1.8, 0.1, -0.2, 0.9];
    let oracle = bench.log_evidence_quadrature(&y, 80.0, 40_001);
    // Wide grid: the mode-and-curvature value is exact per node here, so
    // the only error is quadrature truncation, and the hyperprior's
    // exponential tail needs ~40 curvature sds before the clipped upper
    // tail drops below 1e-7 of the total mass.
    let spec = GridSpec { center: None, half_width_sd: 40.0, points_per_dim: 513 };
    let est = marginal_likelihood_laplace(&bench.model(), &spec, &y).unwrap();
    assert!(
        (est - oracle).abs() < 1e-6,
        "grid evidence {est} vs quadrature {oracle} (diff {:.2e})",
        (est - oracle).abs()
    );
}

#[test]
fn doubling_the_grid_resolution_barely_moves_the_hyper_marginal_mean() {
    let bench = GaussianLgm::new(6, 1.0).unwrap();
    let y = vec![0.4, -0.9, 1.8, 0.1, -0.2, 0.9];
    let coarse = GridSpec { center: None, half_width_sd: 5.0, points_per_dim: 31 };
    let fine = GridSpec { center: None, half_width_sd: 5.0, points_per_dim: 61 };
    let m_coarse = hyper_marginal_grid(&bench.model(), 0, &coarse, &y).unwrap().mean();
    let m_fine = hyper_marginal_grid(&bench.model(), 0, &fine, &y).unwrap().mean();
    assert!(
        (m_coarse - m_fine).abs() < 1e-3,
        "coarse mean {m_coarse} vs fine mean {m_fine}"
    );
}

#[test]
fn scaling_the_hyperprior_shifts_the_evidence_by_exactly_log_c() {
    let k = 5usize;
    let y = [0.3f64, -1.2, 2.0, 0.0, 0.7];
    let log_c = 1.7f64;
    let build = |offset: f64| -> LatentGaussianModel {
        LatentGaussianModel::new(
            k,
            1,
            DMatrix::identity(k, k),
            ObsModel::Gaussian { noise_var: 1.0 },
            Box::new(move |phi: &[f64]| {
                if phi[0] <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    phi[0].ln() - phi[0] + offset
                }
            }),
            Box::new(move |phi: &[f64]| Ok(DMatrix::identity(k, k) * phi[0])),
        )
        .unwrap()
    };
    let spec = GridSpec { center: None, half_width_sd: 10.0, points_per_dim: 31 };
    let base = marginal_likelihood_laplace(&build(0.0), &spec, &y).unwrap();
    let scaled = marginal_likelihood_laplace(&build(log_c), &spec, &y).unwrap();
    // The two runs lay out their grids independently (mode search and
    // finite-difference curvature see values offset by a constant, which
    // perturbs rounding), so allow placement jitter around the exact shift.
    assert!(
        ((scaled - base) - log_c).abs() < 1e-8,
        "shift {} vs log c {log_c}",
        scaled - base
    );
}

#[test]
fn binomial_interval_error_decreases_with_sample_size() {
    // Same success fraction at n = 10 and n = 1000; the Gaussian
    // approximation must tighten on the larger sample.
    let interval = (0.57f64, 0.63f64);
    let mut errors = Vec::new();
    for &(n, k) in &[(10.0f64, 6.0f64), (1000.0, 600.0)] {
        let logp = move |t: f64| {
            if t <= 0.0 || t >= 1.0 {
                f64::NEG_INFINITY
            } else {
                k * t.ln() + (n - k) * (1.0 - t).ln()
            }
        };
        let approx = laplace_interval_prob(&logp, interval.0, interval.1).unwrap();
        let beta = Beta::new(k + 1.0, n - k + 1.0).unwrap();
        let exact = beta.cdf(interval.1) - beta.cdf(interval.0);
        errors.push((approx - exact).abs());
    }
    assert!(
        errors[0] > errors[1],
        "error at n=10 ({}) should exceed error at n=1000 ({})",
        errors[0],
        errors[1]
    );
}
