//! Plain Hamiltonian Monte Carlo with an identity mass matrix, a fixed number
//! of leapfrog steps and dual-averaging step-size adaptation during burn-in.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::density::LogDensity;
use crate::error::{Error, Result};

/// Energy error above which a trajectory counts as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;
/// Post-burn-in divergence rate that triggers a warning.
pub const DIVERGENCE_WARNING_RATE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSize {
    Fixed(f64),
    /// Dual averaging toward `target_accept` during burn-in.
    Adapt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub leapfrog_steps: usize,
    pub step_size: StepSize,
    pub target_accept: f64,
    /// Diagonal of the (identity-shaped) mass matrix.
    pub mass: f64,
    pub seed: u64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            n_iterations: 5000,
            burn_in: 3000,
            thin: 1,
            n_chains: 4,
            leapfrog_steps: 20,
            step_size: StepSize::Adapt,
            target_accept: 0.8,
            mass: 1.0,
            seed: 0,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.n_iterations == 0 || self.n_chains == 0 || self.leapfrog_steps == 0 || self.thin == 0 {
            return bad("iterations, chains, leapfrog steps and thin must all be positive");
        }
        if self.burn_in >= self.n_iterations {
            return bad("burn-in must be shorter than the run");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target acceptance must lie in (0, 1)");
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return bad("mass must be positive");
        }
        if let StepSize::Fixed(e) = self.step_size {
            if !(e > 0.0 && e.is_finite()) {
                return bad("step size must be positive");
            }
        }
        Ok(())
    }

    /// Stored draws per chain.
    pub fn draws_per_chain(&self) -> usize {
        (self.n_iterations - self.burn_in) / self.thin
    }
}

/// End state of a leapfrog trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LeapfrogEnd {
    /// Log density at the final position.
    pub log_density: f64,
    /// Set when a non-finite density or gradient was met; integration stops there.
    pub divergent: bool,
}

/// Integrates `n_steps` leapfrog steps in place. `grad` must hold the
/// gradient of the log density at `position` and is left holding it at the
/// final position. `grad_fn` writes the gradient and returns the log density.
pub fn leapfrog_with_gradient<F>(
    position: &mut [f64],
    momentum: &mut [f64],
    grad: &mut [f64],
    step_size: f64,
    n_steps: usize,
    mass: f64,
    mut grad_fn: F,
) -> LeapfrogEnd
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let mut lp = f64::NAN;
    for _ in 0..n_steps {
        for (p, g) in momentum.iter_mut().zip(grad.iter()) {
            *p += 0.5 * step_size * g;
        }
        for (q, p) in position.iter_mut().zip(momentum.iter()) {
            *q += step_size * p / mass;
        }
        lp = grad_fn(position, grad);
        if lp.is_nan() || lp == f64::INFINITY || grad.iter().any(|g| !g.is_finite()) {
            return LeapfrogEnd { log_density: lp, divergent: true };
        }
        for (p, g) in momentum.iter_mut().zip(grad.iter()) {
            *p += 0.5 * step_size * g;
        }
    }
    if n_steps == 0 {
        lp = grad_fn(position, grad);
    }
    LeapfrogEnd { log_density: lp, divergent: !lp.is_finite() }
}

/// Half-kick/drift/half-kick integration starting from `position`.
pub fn leapfrog<F>(
    position: &mut [f64],
    momentum: &mut [f64],
    step_size: f64,
    n_steps: usize,
    mass: f64,
    mut grad_fn: F,
) -> LeapfrogEnd
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let mut grad = vec![0.0; position.len()];
    let lp = grad_fn(position, &mut grad);
    if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return LeapfrogEnd { log_density: lp, divergent: true };
    }
    leapfrog_with_gradient(position, momentum, &mut grad, step_size, n_steps, mass, grad_fn)
}

/// Hoffman & Gelman (2014) dual averaging of the log step size.
#[derive(Debug, Clone)]
pub(crate) struct DualAveraging {
    mu: f64,
    target: f64,
    h_bar: f64,
    log_eps_bar: f64,
    m: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    pub fn new(initial: f64, target: f64) -> Self {
        Self { mu: (10.0 * initial).ln(), target, h_bar: 0.0, log_eps_bar: 0.0, m: 0.0 }
    }

    /// Feeds one acceptance probability, returns the next step size.
    pub fn update(&mut self, accept_prob: f64) -> f64 {
        self.m += 1.0;
        let w = 1.0 / (self.m + Self::T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob);
        let log_eps = self.mu - self.m.sqrt() / Self::GAMMA * self.h_bar;
        let eta = self.m.powf(-Self::KAPPA);
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar;
        log_eps.exp()
    }

    /// Step size to freeze after adaptation.
    pub fn final_step(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Per-chain acceptance and divergence bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub chain: usize,
    /// Step size used after burn-in.
    pub step_size: f64,
    /// Mean Metropolis acceptance probability after burn-in.
    pub mean_accept_prob: f64,
    /// Fraction of post-burn-in proposals accepted.
    pub accept_rate: f64,
    pub divergences: usize,
    pub burn_in_divergences: usize,
    pub n_draws: usize,
}

impl ChainStats {
    pub fn divergence_rate(&self, post_burn_in: usize) -> f64 {
        if post_burn_in == 0 {
            0.0
        } else {
            self.divergences as f64 / post_burn_in as f64
        }
    }
}

struct State {
    q: Vec<f64>,
    grad: Vec<f64>,
    lp: f64,
}

fn transition<D, R>(target: &D, state: &mut State, eps: f64, cfg: &HmcConfig, rng: &mut R) -> (f64, bool, bool)
where
    D: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    let sd = cfg.mass.sqrt();
    let mut p: Vec<f64> =
        (0..state.q.len()).map(|_| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)).collect();
    let kinetic = |p: &[f64]| p.iter().map(|v| v * v).sum::<f64>() / (2.0 * cfg.mass);
    let h0 = -state.lp + kinetic(&p);
    let mut q = state.q.clone();
    let mut grad = state.grad.clone();
    let end = leapfrog_with_gradient(&mut q, &mut p, &mut grad, eps, cfg.leapfrog_steps, cfg.mass, |x, g| {
        target.log_density_and_gradient(x, g)
    });
    let h1 = -end.log_density + kinetic(&p);
    let delta = h1 - h0;
    if end.divergent || !delta.is_finite() || delta > DIVERGENCE_THRESHOLD {
        return (0.0, false, true);
    }
    let accept_prob = (-delta).exp().min(1.0);
    let accepted = rng.random::<f64>() < accept_prob;
    if accepted {
        state.q = q;
        state.grad = grad;
        state.lp = end.log_density;
    }
    (accept_prob, accepted, false)
}

/// Doubles or halves a trial step until one-step acceptance crosses 1/2.
fn reasonable_step<D, R>(target: &D, state: &State, cfg: &HmcConfig, rng: &mut R) -> f64
where
    D: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    let probe = |eps: f64, rng: &mut R| {
        let mut p: Vec<f64> = (0..state.q.len())
            .map(|_| cfg.mass.sqrt() * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        let k0 = p.iter().map(|v| v * v).sum::<f64>() / (2.0 * cfg.mass);
        let mut q = state.q.clone();
        let mut g = state.grad.clone();
        let end = leapfrog_with_gradient(&mut q, &mut p, &mut g, eps, 1, cfg.mass, |x, gr| {
            target.log_density_and_gradient(x, gr)
        });
        let k1 = p.iter().map(|v| v * v).sum::<f64>() / (2.0 * cfg.mass);
        let log_ratio = end.log_density - k1 - (state.lp - k0);
        if end.divergent || log_ratio.is_nan() {
            f64::NEG_INFINITY
        } else {
            log_ratio
        }
    };
    let mut eps = 1.0;
    let up = probe(eps, rng) > 0.5f64.ln();
    for _ in 0..60 {
        let next = if up { eps * 2.0 } else { eps * 0.5 };
        let crossed = (probe(next, rng) > 0.5f64.ln()) != up;
        if crossed {
            return if up { eps } else { next };
        }
        eps = next;
    }
    eps
}

/// Runs one chain from `init`, calling `on_draw(iteration, theta, log_density)`
/// for every kept post-burn-in state.
pub fn sample_chain<D, R, F>(
    target: &D,
    cfg: &HmcConfig,
    chain: usize,
    init: Vec<f64>,
    rng: &mut R,
    mut on_draw: F,
) -> Result<ChainStats>
where
    D: LogDensity + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(usize, &[f64], f64) -> Result<()>,
{
    cfg.validate()?;
    if init.len() != target.dim() {
        return Err(Error::Shape(format!("start has {} coordinates, target {}", init.len(), target.dim())));
    }
    let mut grad = vec![0.0; init.len()];
    let lp = target.log_density_and_gradient(&init, &mut grad);
    if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteStart);
    }
    let mut state = State { q: init, grad, lp };

    let (mut eps, mut adapter) = match cfg.step_size {
        StepSize::Fixed(e) => (e, None),
        StepSize::Adapt => {
            let e0 = reasonable_step(target, &state, cfg, rng);
            (e0, Some(DualAveraging::new(e0, cfg.target_accept)))
        }
    };

    let mut stats = ChainStats {
        chain,
        step_size: eps,
        mean_accept_prob: 0.0,
        accept_rate: 0.0,
        divergences: 0,
        burn_in_divergences: 0,
        n_draws: 0,
    };
    let mut accepted_total = 0usize;
    let mut prob_total = 0.0;
    for it in 0..cfg.n_iterations {
        let warm = it < cfg.burn_in;
        if !warm && it == cfg.burn_in {
            if let Some(da) = adapter.take() {
                eps = da.final_step();
            }
            stats.step_size = eps;
        }
        let (prob, accepted, divergent) = transition(target, &mut state, eps, cfg, rng);
        if warm {
            stats.burn_in_divergences += usize::from(divergent);
            if let Some(da) = adapter.as_mut() {
                eps = da.update(prob);
            }
            continue;
        }
        stats.divergences += usize::from(divergent);
        accepted_total += usize::from(accepted);
        prob_total += prob;
        if (it - cfg.burn_in + 1).is_multiple_of(cfg.thin) {
            on_draw(it, &state.q, state.lp)?;
            stats.n_draws += 1;
        }
    }
    let kept = (cfg.n_iterations - cfg.burn_in) as f64;
    stats.accept_rate = accepted_total as f64 / kept;
    stats.mean_accept_prob = prob_total / kept;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::IsotropicGaussian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn harmonic(q: &[f64], g: &mut [f64]) -> f64 {
        for (gi, qi) in g.iter_mut().zip(q) {
            *gi = -qi;
        }
        -0.5 * q.iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn free_particle_drifts_linearly() {
        let mut q = vec![1.0, -2.0];
        let mut p = vec![0.5, 0.25];
        let end = leapfrog(&mut q, &mut p, 0.1, 30, 2.0, |_, g| {
            g.fill(0.0);
            0.0
        });
        assert!(!end.divergent);
        assert!((q[0] - (1.0 + 0.1 * 30.0 * 0.5 / 2.0)).abs() < 1e-12);
        assert!((q[1] - (-2.0 + 0.1 * 30.0 * 0.25 / 2.0)).abs() < 1e-12);
        assert_eq!(p, vec![0.5, 0.25]);
    }

    #[test]
    fn reversible() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let q0: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let p0: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (mut q, mut p) = (q0.clone(), p0.clone());
            leapfrog(&mut q, &mut p, 0.13, 25, 1.0, harmonic);
            p.iter_mut().for_each(|v| *v = -*v);
            leapfrog(&mut q, &mut p, 0.13, 25, 1.0, harmonic);
            for (a, b) in q.iter().zip(&q0) {
                assert!((a - b).abs() < 1e-10);
            }
            for (a, b) in p.iter().zip(&p0) {
                assert!((a + b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn energy_error_is_second_order() {
        let max_err = |eps: f64| {
            let total = 4.0;
            let n = (total / eps).round() as usize;
            let (mut q, mut p) = (vec![1.0], vec![0.3]);
            let h0 = 0.5 * (1.0 + 0.09);
            let mut grad = vec![-1.0];
            let mut worst: f64 = 0.0;
            for _ in 0..n {
                let end = leapfrog_with_gradient(&mut q, &mut p, &mut grad, eps, 1, 1.0, harmonic);
                let h = -end.log_density + 0.5 * p[0] * p[0];
                worst = worst.max((h - h0).abs());
            }
            worst
        };
        let ratio = max_err(0.1) / max_err(0.05);
        assert!((ratio - 4.0).abs() < 0.4, "{ratio}");
    }

    #[test]
    fn non_finite_gradient_signals_divergence() {
        let mut q = vec![0.0];
        let mut p = vec![1.0];
        let end = leapfrog(&mut q, &mut p, 0.1, 10, 1.0, |x, g| {
            g[0] = if x[0] > 0.25 { f64::NAN } else { 0.0 };
            0.0
        });
        assert!(end.divergent);
    }

    #[test]
    fn dual_averaging_moves_toward_target() {
        let mut da = DualAveraging::new(1.0, 0.8);
        let low = da.update(0.1);
        let mut da = DualAveraging::new(1.0, 0.8);
        let high = da.update(1.0);
        assert!(low < high);
    }

    #[test]
    fn config_validation() {
        let ok = HmcConfig::default();
        assert!(ok.validate().is_ok());
        assert!(HmcConfig { burn_in: 5000, ..ok }.validate().is_err());
        assert!(HmcConfig { thin: 0, ..ok }.validate().is_err());
        assert!(HmcConfig { target_accept: 1.0, ..ok }.validate().is_err());
        assert_eq!(HmcConfig { n_iterations: 10, burn_in: 4, thin: 2, ..ok }.draws_per_chain(), 3);
    }

    #[test]
    fn kept_draw_count() {
        let target = IsotropicGaussian { mean: vec![0.0; 2], scale: 1.0 };
        let cfg = HmcConfig { n_iterations: 50, burn_in: 20, thin: 3, leapfrog_steps: 5, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seen = Vec::new();
        let stats = sample_chain(&target, &cfg, 0, vec![0.5, 0.5], &mut rng, |it, _, _| {
            seen.push(it);
            Ok(())
        })
        .unwrap();
        assert_eq!(stats.n_draws, 10);
        assert_eq!(seen.len(), 10);
        assert!(seen.iter().all(|&it| it >= 20));
    }
}
