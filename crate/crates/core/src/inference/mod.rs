//! MAP estimation and posterior sampling for the latent position model.

pub mod hmc;
pub mod init;
pub mod lbfgs;
mod whiten;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::LogDensity;
use crate::error::{Error, Result};
use crate::model::{CountPanel, LatentTrajectories, ModelParams, ModelSpec, ParamLayout, Posterior, RhoSigmaMode};

pub use hmc::{leapfrog, ChainStats, HmcConfig, LeapfrogEnd, StepSize};
pub use init::{default_init, Init};
pub use lbfgs::{LbfgsConfig, LbfgsResult, LbfgsStatus};

/// One RNG stream per chain, all derived from a single seed.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Spec used for optimization. Sampled `rho`/`sigma` make the posterior
/// unbounded as `sigma -> 0`, so they are pinned at their prior means.
pub fn map_spec(spec: &ModelSpec) -> ModelSpec {
    match spec.rho_sigma_mode {
        RhoSigmaMode::Fixed => *spec,
        RhoSigmaMode::Gamma(h) => spec.fixed_at(h.rho_mean(), h.sigma_mean()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    pub lbfgs: LbfgsConfig,
    /// Independent default-scheme starts; the best optimum is kept. Ignored
    /// for explicit starts.
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self { lbfgs: LbfgsConfig::default(), n_starts: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEstimate {
    /// The model actually optimized (see [`map_spec`]).
    pub spec: ModelSpec,
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub latents: LatentTrajectories,
    pub rho: f64,
    pub sigma: f64,
    pub log_posterior: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub status: LbfgsStatus,
}

impl MapEstimate {
    pub fn params(&self) -> ModelParams {
        ModelParams::new(self.alpha, self.beta.clone())
            .with_scales(self.rho, self.sigma)
            .with_mode(self.spec.rho_sigma_mode)
    }

    /// Flat vector in the layout of the optimized spec.
    pub fn theta(&self) -> Vec<f64> {
        let layout = ParamLayout::for_spec(&self.spec, self.beta.len(), 0);
        let layout = ParamLayout { n_slices: self.latents.n_slices(), ..layout };
        layout.pack(&self.params(), &self.latents)
    }
}

/// Scale of the first slice in the whitened MAP coordinates.
const WHITEN_INITIAL: f64 = 1.0;

/// L-BFGS on the posterior. Dynamic trajectories are optimized in whitened
/// random-walk coordinates; the tolerance is tightened so the gradient in the
/// original coordinates still meets `cfg.grad_tol`, which is what is reported.
fn optimize(post: &Posterior, spec: &ModelSpec, x0: &[f64], cfg: &LbfgsConfig) -> Result<LbfgsResult> {
    let layout = *post.layout();
    if layout.n_slices < 2 {
        return lbfgs::maximize(post, x0, cfg);
    }
    let mut grad = vec![0.0; x0.len()];
    let value = post.log_density_and_gradient(x0, &mut grad);
    let start_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if value.is_finite() && start_norm <= cfg.grad_tol {
        return Ok(LbfgsResult {
            x: x0.to_vec(),
            value,
            grad_norm: start_norm,
            iterations: 0,
            status: LbfgsStatus::GradientTolerance,
        });
    }
    let w = whiten::Whitened { target: post, layout, initial: WHITEN_INITIAL, step: spec.sigma };
    let inner = LbfgsConfig { grad_tol: cfg.grad_tol / w.inverse_gain(), ..*cfg };
    let res = lbfgs::maximize(&w, &w.whiten(x0), &inner)?;
    let x = w.to_theta(&res.x);
    let value = post.log_density_and_gradient(&x, &mut grad);
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let status = if grad_norm <= cfg.grad_tol {
        LbfgsStatus::GradientTolerance
    } else if res.status == LbfgsStatus::GradientTolerance {
        LbfgsStatus::LineSearchFailed
    } else {
        res.status
    };
    Ok(LbfgsResult { x, value, grad_norm, iterations: res.iterations, status })
}

/// Local maximizer of the log posterior by L-BFGS.
pub fn map_estimate(panel: &CountPanel, spec: &ModelSpec, init: &Init, cfg: &MapConfig) -> Result<MapEstimate> {
    let spec = map_spec(spec);
    let post = Posterior::new(panel, spec)?;
    let (n, t) = (panel.n_series(), panel.n_times());
    let starts = match init {
        Init::Default => cfg.n_starts.max(1),
        Init::Theta { .. } => 1,
    };
    let mut best: Option<LbfgsResult> = None;
    for start in 0..starts {
        let mut rng = chain_rng(cfg.seed, start);
        let x0 = init::resolve(init, &spec, n, t, &mut rng)?;
        let res = optimize(&post, &spec, &x0, &cfg.lbfgs)?;
        log::debug!("map start {start}: log posterior {:.4}, {:?}", res.value, res.status);
        if best.as_ref().is_none_or(|b| res.value > b.value) {
            best = Some(res);
        }
    }
    let res = best.expect("at least one start");
    let (params, latents) = post.layout().unpack(&res.x, &spec);
    Ok(MapEstimate {
        spec,
        alpha: params.alpha,
        beta: params.beta,
        latents,
        rho: params.rho,
        sigma: params.sigma,
        log_posterior: post.parts(&res.x).log_posterior(),
        grad_norm: res.grad_norm,
        converged: res.converged(),
        iterations: res.iterations,
        status: res.status,
    })
}

/// One stored posterior draw on the natural scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub chain: usize,
    pub iteration: usize,
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub latents: LatentTrajectories,
    pub rho: f64,
    pub sigma: f64,
    /// Log posterior on the natural scale (no change-of-variables term).
    pub log_posterior: f64,
}

impl Draw {
    pub fn params(&self, spec: &ModelSpec) -> ModelParams {
        ModelParams::new(self.alpha, self.beta.clone()).with_scales(self.rho, self.sigma).with_mode(spec.rho_sigma_mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub spec: ModelSpec,
    pub n_times: usize,
    /// Pooled in chain order, iteration order within a chain.
    pub draws: Vec<Draw>,
    pub chains: Vec<ChainStats>,
    pub warnings: Vec<String>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn n_chains(&self) -> usize {
        self.draws.iter().map(|d| d.chain + 1).max().unwrap_or(0)
    }

    /// Per-chain sequences of a scalar functional of the draws.
    pub fn scalar_chains(&self, f: impl Fn(&Draw) -> f64) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.n_chains()];
        for d in &self.draws {
            out[d.chain].push(f(d));
        }
        out
    }
}

fn check_panel(panel: &CountPanel, spec: &ModelSpec) -> Result<()> {
    spec.validate()?;
    if panel.n_series() < 1 || panel.n_times() < 2 {
        return Err(Error::Shape("panel needs at least two time points".into()));
    }
    Ok(())
}

/// HMC over the full posterior, keeping every draw in memory.
pub fn hmc_sample(panel: &CountPanel, spec: &ModelSpec, cfg: &HmcConfig, init: &Init) -> Result<PosteriorDraws> {
    hmc_sample_streaming(panel, spec, cfg, init, |_| |_: &Draw| Ok(()))
}

/// As [`hmc_sample`], also handing each draw to a per-chain sink as soon as it
/// is produced. `make_sink(chain)` is called once per chain.
pub fn hmc_sample_streaming<F, S>(
    panel: &CountPanel,
    spec: &ModelSpec,
    cfg: &HmcConfig,
    init: &Init,
    make_sink: F,
) -> Result<PosteriorDraws>
where
    F: Fn(usize) -> S + Sync,
    S: FnMut(&Draw) -> Result<()>,
{
    check_panel(panel, spec)?;
    cfg.validate()?;
    let post = Posterior::new(panel, *spec)?;
    let (n, t) = (panel.n_series(), panel.n_times());

    let run = |chain: usize| -> Result<(Vec<Draw>, ChainStats)> {
        let mut rng = chain_rng(cfg.seed, chain);
        let x0 = init::resolve(init, spec, n, t, &mut rng)?;
        let mut sink = make_sink(chain);
        let mut draws = Vec::with_capacity(cfg.draws_per_chain());
        let stats = hmc::sample_chain(&post, cfg, chain, x0, &mut rng, |iteration, theta, _| {
            let (params, latents) = post.layout().unpack(theta, spec);
            let draw = Draw {
                chain,
                iteration,
                alpha: params.alpha,
                beta: params.beta,
                latents,
                rho: params.rho,
                sigma: params.sigma,
                log_posterior: post.parts(theta).log_posterior(),
            };
            sink(&draw)?;
            draws.push(draw);
            Ok(())
        })?;
        Ok((draws, stats))
    };

    #[cfg(feature = "parallel")]
    let runs: Vec<Result<(Vec<Draw>, ChainStats)>> = {
        use rayon::prelude::*;
        (0..cfg.n_chains).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<Result<(Vec<Draw>, ChainStats)>> = (0..cfg.n_chains).map(run).collect();

    let mut out =
        PosteriorDraws { spec: *spec, n_times: t, draws: Vec::new(), chains: Vec::new(), warnings: Vec::new() };
    let kept = cfg.n_iterations - cfg.burn_in;
    for r in runs {
        let (draws, stats) = r?;
        let rate = stats.divergence_rate(kept);
        if rate > hmc::DIVERGENCE_WARNING_RATE {
            let msg = format!(
                "chain {}: {:.1}% of post-burn-in trajectories diverged; results are unreliable",
                stats.chain,
                100.0 * rate
            );
            log::warn!("{msg}");
            out.warnings.push(msg);
        }
        out.draws.extend(draws);
        out.chains.push(stats);
    }
    Ok(out)
}

/// Flat draws per chain, with each chain's sampler statistics.
pub type TargetDraws = (Vec<Vec<Vec<f64>>>, Vec<ChainStats>);

/// Runs HMC on an arbitrary target; returns per-chain flat draws. Used for
/// sampler self-tests against densities with known moments.
pub fn hmc_sample_target<D: LogDensity + Sync>(target: &D, cfg: &HmcConfig, init: &[f64]) -> Result<TargetDraws> {
    cfg.validate()?;
    let mut chains = Vec::with_capacity(cfg.n_chains);
    let mut stats = Vec::with_capacity(cfg.n_chains);
    for chain in 0..cfg.n_chains {
        let mut rng = chain_rng(cfg.seed, chain);
        let mut draws = Vec::with_capacity(cfg.draws_per_chain());
        let s = hmc::sample_chain(target, cfg, chain, init.to_vec(), &mut rng, |_, theta, _| {
            draws.push(theta.to_vec());
            Ok(())
        })?;
        chains.push(draws);
        stats.push(s);
    }
    Ok((chains, stats))
}
