//! Analytic gradients against central finite differences.

use dtslpm::density::LogDensity;
use dtslpm::model::{
    grad_log_posterior, log_posterior, CountPanel, GammaHyper, LatentTrajectories, ModelParams, ModelSpec, ParamLayout,
    Posterior, RhoSigmaMode,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn random_panel(rng: &mut ChaCha8Rng, n: usize, t: usize) -> CountPanel {
    CountPanel::from_series((0..n).map(|_| (0..t).map(|_| rng.random_range(0..12)).collect()).collect()).unwrap()
}

/// Largest `|analytic - fd| / max(1, |analytic|, |fd|)` over all coordinates.
fn max_fd_error(post: &Posterior, theta: &[f64]) -> f64 {
    let mut grad = vec![0.0; theta.len()];
    post.log_density_and_gradient(theta, &mut grad);
    let mut x = theta.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..theta.len() {
        x[k] = theta[k] + H;
        let up = post.log_density(&x);
        x[k] = theta[k] - H;
        let down = post.log_density(&x);
        x[k] = theta[k];
        let fd = (up - down) / (2.0 * H);
        worst = worst.max((grad[k] - fd).abs() / grad[k].abs().max(fd.abs()).max(1.0));
    }
    worst
}

fn random_theta(rng: &mut ChaCha8Rng, layout: &ParamLayout) -> Vec<f64> {
    let mut theta: Vec<f64> = (0..layout.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    // Random-walk latents with visible steps, so no pair sits at distance zero.
    let z = &mut theta[layout.latents()];
    for v in z.iter_mut() {
        *v *= 1.5;
    }
    theta
}

#[test]
fn dynamic_both_prior_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..40 {
        let spec = if case % 2 == 0 {
            ModelSpec::default()
        } else {
            ModelSpec::default().with_gamma_prior(GammaHyper::default())
        };
        let panel = random_panel(&mut rng, 4, 20);
        let post = Posterior::new(&panel, spec).unwrap();
        let theta = random_theta(&mut rng, post.layout());
        let err = max_fd_error(&post, &theta);
        assert!(err < 1e-5, "case {case}: {err}");
    }
}

#[test]
fn static_both_prior_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..20 {
        let spec = if case % 2 == 0 {
            ModelSpec::static_model()
        } else {
            ModelSpec::static_model().with_gamma_prior(GammaHyper::default())
        };
        let panel = random_panel(&mut rng, 5, 15);
        let post = Posterior::new(&panel, spec).unwrap();
        let theta = random_theta(&mut rng, post.layout());
        assert!(max_fd_error(&post, &theta) < 1e-5);
    }
}

#[test]
fn public_gradient_matches_flat_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let panel = random_panel(&mut rng, 3, 6);
    let z = LatentTrajectories::from_fn(3, 6, 2, |i, s, k| (i as f64) - 0.2 * s as f64 + 0.5 * k as f64);
    let params = ModelParams::new(0.2, vec![0.1, -0.3, 0.4])
        .with_scales(1.5, 0.3)
        .with_mode(RhoSigmaMode::Gamma(GammaHyper::default()));
    let g = grad_log_posterior(&params, &z, &panel).unwrap();
    assert!(g.log_rho().is_some() && g.log_sigma().is_some());

    // d/d alpha of the natural-scale log posterior, by differences.
    let f = |a: f64| log_posterior(&ModelParams { alpha: a, ..params.clone() }, &z, &panel).unwrap();
    let fd = (f(0.2 + H) - f(0.2 - H)) / (2.0 * H);
    assert!((g.alpha() - fd).abs() < 1e-6 * fd.abs().max(1.0));
}

#[test]
fn coincident_nodes_use_zero_subgradient() {
    let panel = CountPanel::from_series(vec![vec![1, 2, 0], vec![3, 0, 1]]).unwrap();
    let z = LatentTrajectories::from_fn(2, 1, 2, |_, _, _| 0.4);
    let g = grad_log_posterior(&ModelParams::new(0.0, vec![0.0, 0.0]), &z, &panel).unwrap();
    // Only the prior pulls on the coincident positions.
    for v in g.latents() {
        assert!((v + 0.4 / 100.0).abs() < 1e-15, "{v}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn finite_differences_hold_for_random_scales(
        seed in 0u64..10_000,
        log_rho in -1.0f64..2.0,
        log_sigma in -3.0f64..0.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = ModelSpec::default().with_gamma_prior(GammaHyper::default());
        let panel = random_panel(&mut rng, 3, 8);
        let post = Posterior::new(&panel, spec).unwrap();
        let mut theta = random_theta(&mut rng, post.layout());
        theta[post.layout().log_rho().unwrap()] = log_rho;
        theta[post.layout().log_sigma().unwrap()] = log_sigma;
        prop_assert!(max_fd_error(&post, &theta) < 1e-5);
    }
}
