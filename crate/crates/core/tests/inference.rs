//! Optimizer and sampler checks against closed-form or independently
//! computed answers.

use dtslpm::density::{IsotropicGaussian, LogDensity};
use dtslpm::inference::lbfgs::maximize;
use dtslpm::inference::{
    hmc_sample, hmc_sample_target, map_estimate, HmcConfig, Init, LbfgsConfig, MapConfig, StepSize,
};
use dtslpm::model::{CountPanel, LatentTrajectories, ModelParams, ModelSpec, Posterior};
use dtslpm::simulator::simulate_counts;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// The posterior as a function of `alpha` alone, with `beta = 0` and nodes so
/// far apart that every cross weight underflows to zero.
struct AlphaOnly {
    post: Posterior,
    theta: Vec<f64>,
}

impl AlphaOnly {
    fn full(&self, alpha: f64) -> Vec<f64> {
        let mut t = self.theta.clone();
        t[0] = alpha;
        t
    }
}

impl LogDensity for AlphaOnly {
    fn dim(&self) -> usize {
        1
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.post.log_density(&self.full(x[0]))
    }

    fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut g = vec![0.0; self.theta.len()];
        let f = self.post.log_density_and_gradient(&self.full(x[0]), &mut g);
        grad[0] = g[0];
        f
    }
}

#[test]
fn alpha_matches_newton_oracle() {
    let series = vec![vec![3, 1, 4, 1, 5, 9, 2, 6], vec![0, 2, 7, 1, 8, 2, 8, 1]];
    let panel = CountPanel::from_series(series.clone()).unwrap();
    let spec = ModelSpec::static_model();
    let post = Posterior::new(&panel, spec).unwrap();
    let z = LatentTrajectories::from_fn(2, 1, 2, |i, _, k| if k == 0 { 500.0 * i as f64 } else { 0.0 });
    let theta = post.layout().pack(&ModelParams::new(0.0, vec![0.0, 0.0]), &z);
    let target = AlphaOnly { post, theta };

    // log p(alpha) = S alpha - m exp(alpha) - alpha^2 / 200 + const, where the
    // sums run over every count that has a lagged predecessor.
    let s: f64 = series.iter().flat_map(|y| &y[1..]).map(|&y| y as f64).sum();
    let m = series.iter().map(|y| y.len() - 1).sum::<usize>() as f64;
    let mut a = 0.0f64;
    for _ in 0..100 {
        let g = s - m * a.exp() - a / 100.0;
        let h = -m * a.exp() - 1.0 / 100.0;
        a -= g / h;
    }

    let res = maximize(&target, &[0.0], &LbfgsConfig::default()).unwrap();
    assert!(res.converged());
    assert!((res.x[0] - a).abs() < 1e-8, "{} vs {a}", res.x[0]);
}

fn small_dynamic_panel(seed: u64) -> CountPanel {
    let z = LatentTrajectories::from_fn(3, 30, 2, |i, s, k| {
        let base = [[0.0, 0.0], [3.0, 0.0], [0.0, 3.5]][i][k];
        base + 0.02 * s as f64 * if k == 0 { 1.0 } else { -0.5 }
    });
    let params = ModelParams::new(0.8, vec![0.3, 0.1, -0.2]);
    // Nodes sit far enough apart for the process to stay stationary.
    simulate_counts(&params, &z, &[1, 1, 1], 30, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn map_is_a_fixed_point() {
    let panel = small_dynamic_panel(4);
    let spec = ModelSpec::default();
    let cfg = MapConfig::default();
    let first = map_estimate(&panel, &spec, &Init::Default, &cfg).unwrap();
    assert!(first.converged, "{:?}", first.status);
    assert!(first.grad_norm < 1e-6);

    let again = map_estimate(&panel, &spec, &Init::Theta { theta: first.theta() }, &cfg).unwrap();
    assert_eq!(again.iterations, 0);
    assert_eq!(again.log_posterior, first.log_posterior);

    // No coordinate step improves the objective.
    let post = Posterior::new(&panel, spec).unwrap();
    let theta = first.theta();
    let f0 = post.log_density(&theta);
    for k in 0..theta.len() {
        for h in [1e-4, -1e-4] {
            let mut x = theta.clone();
            x[k] += h;
            assert!(post.log_density(&x) <= f0 + 1e-9);
        }
    }
}

/// Leapfrog on a standard normal is linear: returns the `2 x 2` map
/// `(q, p) -> (q', p')` after `steps` steps of size `eps`.
fn leapfrog_map(eps: f64, steps: usize) -> [[f64; 2]; 2] {
    let one = [[1.0 - eps * eps / 2.0, eps], [-eps + eps.powi(3) / 4.0, 1.0 - eps * eps / 2.0]];
    let mut m = [[1.0, 0.0], [0.0, 1.0]];
    for _ in 0..steps {
        let mut next = [[0.0; 2]; 2];
        for (i, row) in next.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..2).map(|k| one[i][k] * m[k][j]).sum();
            }
        }
        m = next;
    }
    m
}

/// Expected acceptance `E[min(1, exp(-dH))]` for `q, p ~ N(0, 1)` by quadrature.
fn acceptance_oracle_1d(eps: f64, steps: usize) -> f64 {
    let m = leapfrog_map(eps, steps);
    let (h, lim) = (0.01, 9.0);
    let n = (2.0 * lim / h) as usize;
    let mut num = 0.0;
    let mut den = 0.0;
    for a in 0..=n {
        let q = -lim + a as f64 * h;
        for b in 0..=n {
            let p = -lim + b as f64 * h;
            let w = (-(q * q + p * p) / 2.0).exp();
            let (q1, p1) = (m[0][0] * q + m[0][1] * p, m[1][0] * q + m[1][1] * p);
            let dh = (q1 * q1 + p1 * p1 - q * q - p * p) / 2.0;
            num += w * (-dh).exp().min(1.0);
            den += w;
        }
    }
    num / den
}

/// Same expectation in `dim` dimensions by direct Monte Carlo on the map.
fn acceptance_oracle_mc(eps: f64, steps: usize, dim: usize) -> f64 {
    let m = leapfrog_map(eps, steps);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let reps = 200_000;
    let mut total = 0.0;
    for _ in 0..reps {
        let mut dh = 0.0;
        for _ in 0..dim {
            let q: f64 = StandardNormal.sample(&mut rng);
            let p: f64 = StandardNormal.sample(&mut rng);
            let (q1, p1) = (m[0][0] * q + m[0][1] * p, m[1][0] * q + m[1][1] * p);
            dh += (q1 * q1 + p1 * p1 - q * q - p * p) / 2.0;
        }
        total += (-dh).exp().min(1.0);
    }
    total / reps as f64
}

fn long_run_acceptance(eps: f64, steps: usize, dim: usize) -> f64 {
    let target = IsotropicGaussian { mean: vec![0.0; dim], scale: 1.0 };
    let cfg = HmcConfig {
        n_iterations: 20_000,
        burn_in: 500,
        n_chains: 2,
        leapfrog_steps: steps,
        step_size: StepSize::Fixed(eps),
        seed: 13,
        ..Default::default()
    };
    let (_, stats) = hmc_sample_target(&target, &cfg, &vec![0.0; dim]).unwrap();
    stats.iter().map(|s| s.mean_accept_prob).sum::<f64>() / stats.len() as f64
}

#[test]
fn acceptance_matches_exact_leapfrog_energy_error() {
    for (eps, steps) in [(1.2, 3), (1.6, 2), (0.7, 5)] {
        let want = acceptance_oracle_1d(eps, steps);
        let got = long_run_acceptance(eps, steps, 1);
        assert!((got - want).abs() < 0.05, "eps {eps}: {got} vs {want}");
    }
    let want = acceptance_oracle_mc(0.9, 4, 10);
    let got = long_run_acceptance(0.9, 4, 10);
    assert!((got - want).abs() < 0.05, "{got} vs {want}");
}

#[test]
fn sampling_is_reproducible_per_seed() {
    let panel = small_dynamic_panel(8);
    let cfg =
        HmcConfig { n_iterations: 60, burn_in: 30, n_chains: 2, leapfrog_steps: 5, seed: 4, ..Default::default() };
    let a = hmc_sample(&panel, &ModelSpec::default(), &cfg, &Init::Default).unwrap();
    let b = hmc_sample(&panel, &ModelSpec::default(), &cfg, &Init::Default).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 60);
    let c = hmc_sample(&panel, &ModelSpec::default(), &HmcConfig { seed: 5, ..cfg }, &Init::Default).unwrap();
    assert_ne!(a.draws[0].alpha, c.draws[0].alpha);
}
