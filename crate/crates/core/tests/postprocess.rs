//! Alignment, diagnostics and summaries against independent oracles.

use dtslpm::inference::{ChainStats, Draw, PosteriorDraws};
use dtslpm::model::{log_likelihood, CountPanel, LatentTrajectories, ModelParams, ModelSpec};
use dtslpm::postprocess::{
    align_to, empirical_variance, ess, procrustes_align, quantile_sorted, rhat, summarize, variance_series, Interval,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_latents(rng: &mut ChaCha8Rng, n: usize, slices: usize, dim: usize) -> LatentTrajectories {
    LatentTrajectories::from_fn(n, slices, dim, |_, _, _| 2.0 * gaussian(rng))
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix, with a
/// random sign flip so reflections are covered too.
fn random_orthogonal(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| gaussian(rng));
    let mut q = g.qr().q();
    if rng.random_bool(0.5) {
        q.column_mut(0).neg_mut();
    }
    q
}

fn move_rigidly(z: &LatentTrajectories, q: &DMatrix<f64>, shift: &[f64]) -> LatentTrajectories {
    let mut stacked = z.stacked() * q;
    for mut row in stacked.row_iter_mut() {
        for (v, c) in row.iter_mut().zip(shift) {
            *v += c;
        }
    }
    LatentTrajectories::from_stacked(&stacked, z.n_nodes()).unwrap()
}

fn max_abs_diff(a: &LatentTrajectories, b: &LatentTrajectories) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn rigid_motions_are_undone() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        let dim = 2 + case % 2;
        let z = random_latents(&mut rng, 5, 4, dim);
        let q = random_orthogonal(&mut rng, dim);
        let shift: Vec<f64> = (0..dim).map(|_| 5.0 * gaussian(&mut rng)).collect();
        let moved = move_rigidly(&z, &q, &shift);
        let back = procrustes_align(&moved, &z).unwrap();
        assert!(max_abs_diff(&back, &z) < 1e-10, "case {case}");
    }
}

/// Textbook split-R-hat written out with explicit loops.
fn rhat_oracle(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() / 2;
    let mut halves = Vec::new();
    for c in chains {
        halves.push(c[..n].to_vec());
        halves.push(c[c.len() - n..].to_vec());
    }
    let m = halves.len() as f64;
    let nf = n as f64;
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / nf).collect();
    let grand = means.iter().sum::<f64>() / m;
    let mut b = 0.0;
    for mu in &means {
        b += (mu - grand) * (mu - grand);
    }
    b *= nf / (m - 1.0);
    let mut w = 0.0;
    for (h, mu) in halves.iter().zip(&means) {
        let mut s2 = 0.0;
        for x in h {
            s2 += (x - mu) * (x - mu);
        }
        w += s2 / (nf - 1.0);
    }
    w /= m;
    (((nf - 1.0) / nf * w + b / nf) / w).sqrt()
}

/// Geyer initial positive sequence ESS from the full autocovariance vector.
fn ess_oracle(x: &[f64]) -> f64 {
    let n = x.len();
    let mu = x.iter().sum::<f64>() / n as f64;
    let acov: Vec<f64> =
        (0..n).map(|lag| (0..n - lag).map(|t| (x[t] - mu) * (x[t + lag] - mu)).sum::<f64>() / n as f64).collect();
    let rho: Vec<f64> = acov.iter().map(|g| g / acov[0]).collect();
    let mut sum_pairs = 0.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let p = rho[2 * m] + rho[2 * m + 1];
        if p < 0.0 {
            break;
        }
        sum_pairs += p;
        m += 1;
    }
    n as f64 / (2.0 * sum_pairs - 1.0)
}

fn ar1(rng: &mut ChaCha8Rng, phi: f64, n: usize) -> Vec<f64> {
    let mut x = gaussian(rng) / (1.0 - phi * phi).sqrt();
    (0..n)
        .map(|_| {
            x = phi * x + gaussian(rng);
            x
        })
        .collect()
}

#[test]
fn rhat_matches_textbook_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..50 {
        let len = 20 + 2 * case;
        let chains: Vec<Vec<f64>> =
            (0..4).map(|c| (0..len).map(|_| gaussian(&mut rng) + 0.1 * c as f64).collect()).collect();
        let got = rhat(&chains).unwrap().unwrap();
        assert!((got - rhat_oracle(&chains)).abs() < 1e-10);
    }
}

#[test]
fn ess_matches_direct_geyer() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for phi in [0.0, 0.5, 0.9] {
        let x = ar1(&mut rng, phi, 1500);
        assert!((ess(&x).unwrap().unwrap() - ess_oracle(&x)).abs() < 1e-10 * ess_oracle(&x));
    }
}

#[test]
fn ar1_ess_near_theory() {
    // For AR(1) the integrated autocorrelation time is (1 + phi) / (1 - phi).
    // A single series' estimate has roughly 15% relative noise, so average 16.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (phi, n, reps) = (0.9, 20_000, 16);
    let expected = n as f64 * (1.0 - phi) / (1.0 + phi);
    let mean_ratio =
        (0..reps).map(|_| ess(&ar1(&mut rng, phi, n)).unwrap().unwrap() / expected).sum::<f64>() / reps as f64;
    assert!((mean_ratio - 1.0).abs() < 0.1, "{mean_ratio}");
}

#[test]
fn type7_quantiles() {
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    // h = (n - 1) q; linear interpolation between order statistics.
    assert_eq!(quantile_sorted(&xs, 0.5), 3.0);
    assert!((quantile_sorted(&xs, 0.025) - 1.1).abs() < 1e-12);
    assert!((quantile_sorted(&xs, 0.975) - 4.9).abs() < 1e-12);
    let iv = Interval::of(&[5.0, 1.0, 4.0, 2.0, 3.0]);
    assert_eq!(iv.mean, 3.0);
    assert!(iv.contains(3.0) && !iv.contains(5.0));
}

#[test]
fn empirical_variance_known_values() {
    // Two points at (+-1, 0): (1 / 4) * (1 + 1).
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
    assert_eq!(empirical_variance(&m), 0.5);
    // A square of side 2 centred anywhere: each point sits sqrt(2) from the centre.
    let sq = DMatrix::from_row_slice(4, 2, &[4.0, 4.0, 6.0, 4.0, 6.0, 6.0, 4.0, 6.0]);
    assert!((empirical_variance(&sq) - 1.0).abs() < 1e-15);
}

fn synthetic_draws(
    rng: &mut ChaCha8Rng,
    reference: &LatentTrajectories,
    n_chains: usize,
    per_chain: usize,
) -> PosteriorDraws {
    let n = reference.n_nodes();
    let mut draws = Vec::new();
    for chain in 0..n_chains {
        for iteration in 0..per_chain {
            let q = random_orthogonal(rng, reference.dim());
            let shift: Vec<f64> = (0..reference.dim()).map(|_| 3.0 * gaussian(rng)).collect();
            let mut z = move_rigidly(reference, &q, &shift);
            for v in z.as_mut_slice() {
                *v += 0.01 * gaussian(rng);
            }
            draws.push(Draw {
                chain,
                iteration,
                alpha: 0.3 + 0.05 * gaussian(rng),
                beta: (0..n).map(|_| 0.2 + 0.05 * gaussian(rng)).collect(),
                latents: z,
                rho: 10.0,
                sigma: 0.05,
                log_posterior: 0.0,
            });
        }
    }
    let chains = (0..n_chains)
        .map(|chain| ChainStats {
            chain,
            step_size: 0.1,
            mean_accept_prob: 0.8,
            accept_rate: 0.8,
            divergences: 0,
            burn_in_divergences: 0,
            n_draws: per_chain,
        })
        .collect();
    PosteriorDraws { spec: ModelSpec::default(), n_times: reference.n_slices(), draws, chains, warnings: vec![] }
}

#[test]
fn alignment_preserves_likelihood_and_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let reference = random_latents(&mut rng, 4, 6, 2);
    let panel =
        CountPanel::from_series((0..4).map(|_| (0..6).map(|_| rng.random_range(0..8)).collect()).collect()).unwrap();
    let draws = synthetic_draws(&mut rng, &reference, 2, 10);
    let aligned = align_to(&draws, &reference).unwrap();
    assert_eq!(aligned.len(), draws.len());
    for (before, after) in draws.draws.iter().zip(&aligned.draws) {
        let params = ModelParams::new(before.alpha, before.beta.clone());
        let l0 = log_likelihood(&params, &before.latents, &panel).unwrap();
        let l1 = log_likelihood(&params, &after.latents, &panel).unwrap();
        assert!((l0 - l1).abs() < 1e-9 * l0.abs().max(1.0));
        let (v0, v1) = (variance_series(&before.latents), variance_series(&after.latents));
        assert!(v0.iter().zip(&v1).all(|(a, b)| (a - b).abs() < 1e-10));
        assert!(max_abs_diff(&after.latents, &reference) < 0.1);
        assert_eq!(after.log_posterior, before.log_posterior);
    }
}

#[test]
fn summary_names_and_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let reference = random_latents(&mut rng, 3, 5, 2);
    let aligned = align_to(&synthetic_draws(&mut rng, &reference, 2, 20), &reference).unwrap();
    let s = summarize(&aligned).unwrap();
    for name in ["alpha", "beta[1]", "beta[2]", "beta[3]"] {
        assert!(s.parameter(name).is_some(), "{name}");
    }
    // Fixed scales are constants, not summarised.
    assert!(s.parameter("rho").is_none() && s.parameter("sigma").is_none());
    let alpha = s.parameter("alpha").unwrap();
    assert!(alpha.interval.lower <= alpha.interval.mean && alpha.interval.mean <= alpha.interval.upper);
    assert!(alpha.rhat.is_some() && alpha.ess.is_some());
    assert_eq!(s.interactions.n_slices, 5);
    assert_eq!(s.risk.summary.len(), 5);
    // Diagonal of the interaction summary carries beta.
    let m = s.interactions.mean_matrix(0);
    assert!((m[(0, 0)] - s.parameter("beta[1]").unwrap().interval.mean).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn alignment_never_increases_error(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reference = random_latents(&mut rng, 4, 3, 2);
        let draw = random_latents(&mut rng, 4, 3, 2);
        let aligned = procrustes_align(&draw, &reference).unwrap();
        let sq = |a: &LatentTrajectories| -> f64 {
            a.as_slice().iter().zip(reference.as_slice()).map(|(x, y)| (x - y).powi(2)).sum()
        };
        prop_assert!(sq(&aligned) <= sq(&draw) + 1e-9);
        // Rigid: every pairwise distance within a slice is preserved.
        for s in 0..3 {
            let (a, b) = (draw.slice(s), aligned.slice(s));
            for i in 0..4 {
                for j in 0..4 {
                    let da = (a.row(i) - a.row(j)).norm();
                    let db = (b.row(i) - b.row(j)).norm();
                    prop_assert!((da - db).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn variance_is_rigid_invariant_and_quadratic_in_scale(seed in 0u64..100_000, c in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = random_latents(&mut rng, 6, 2, 2);
        let q = random_orthogonal(&mut rng, 2);
        let moved = move_rigidly(&z, &q, &[1.5, -2.0]);
        let v = variance_series(&z);
        for (a, b) in v.iter().zip(variance_series(&moved)) {
            prop_assert!((a - b).abs() < 1e-10 * a.max(1.0));
        }
        for (a, b) in v.iter().zip(variance_series(&z.scaled(c))) {
            prop_assert!((c * c * a - b).abs() < 1e-10 * b.max(1.0));
        }
    }
}
