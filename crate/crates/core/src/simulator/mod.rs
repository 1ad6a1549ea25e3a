//! Synthetic data: clustered static latent spaces, scripted trajectory
//! experiments, random-walk prior draws and forward simulation of counts.

mod experiments;

pub use experiments::{make_experiment_trajectories, ExperimentDesign, ExperimentId, NodeSchedule, Waypoint};

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{interaction_matrix_at, CountPanel, LatentTrajectories, ModelParams};
use crate::stability::{check_trajectory_stability, TrajectoryStability};

/// Largest intensity the simulator will draw from before declaring explosion.
pub const MAX_INTENSITY: f64 = 1e15;

/// Draws `alpha ~ U(-3, 3)` and `beta_i ~ U(-1, 1)`.
pub fn sample_static_params<R: Rng + ?Sized>(rng: &mut R, n_nodes: usize) -> (f64, Vec<f64>) {
    let alpha = rng.random_range(-3.0..3.0);
    let beta = (0..n_nodes).map(|_| rng.random_range(-1.0..1.0)).collect();
    (alpha, beta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub centers: Vec<Vec<f64>>,
    /// Per-coordinate variance around each center.
    pub covariance_diag: f64,
    /// Cluster index of every node.
    pub assignment: Vec<usize>,
    pub expansion_factor: f64,
    pub max_expansions: usize,
}

impl ClusterConfig {
    /// Two clusters at `(0,0)`/`(3,3)` up to ten nodes, three at
    /// `(0,0)`/`(-1.8,3)`/`(-3,-3)` beyond; nodes are split into contiguous
    /// blocks.
    pub fn standard(n_nodes: usize) -> Self {
        let centers = if n_nodes <= 10 {
            vec![vec![0.0, 0.0], vec![3.0, 3.0]]
        } else {
            vec![vec![0.0, 0.0], vec![-1.8, 3.0], vec![-3.0, -3.0]]
        };
        let n_clusters = centers.len();
        Self {
            centers,
            covariance_diag: 0.1,
            assignment: (0..n_nodes).map(|i| i * n_clusters / n_nodes).collect(),
            expansion_factor: 1.05,
            max_expansions: 500,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.assignment.len()
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() {
            return Err(Error::Config("at least one cluster center is required".into()));
        }
        let k = self.dim();
        if k == 0 || self.centers.iter().any(|c| c.len() != k) {
            return Err(Error::Config("cluster centers must share a positive dimension".into()));
        }
        if let Some(a) = self.assignment.iter().find(|&&a| a >= self.centers.len()) {
            return Err(Error::Config(format!("assignment {a} has no matching center")));
        }
        if !(self.covariance_diag >= 0.0) {
            return Err(Error::Config("cluster variance must be nonnegative".into()));
        }
        if !(self.expansion_factor > 1.0) {
            return Err(Error::Config("expansion factor must exceed 1".into()));
        }
        Ok(())
    }
}

/// Static (single-slice) positions `z_i ~ N(center[assignment_i], var * I)`.
pub fn sample_clustered_latents<R: Rng + ?Sized>(cfg: &ClusterConfig, rng: &mut R) -> Result<LatentTrajectories> {
    cfg.validate()?;
    let normal = Normal::new(0.0, cfg.covariance_diag.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let k = cfg.dim();
    Ok(LatentTrajectories::from_fn(cfg.n_nodes(), 1, k, |i, _, d| {
        cfg.centers[cfg.assignment[i]][d] + normal.sample(rng)
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub latents: LatentTrajectories,
    pub expansions: usize,
    pub stability: TrajectoryStability,
}

/// Scales all positions by `cfg.expansion_factor` until the strict stability
/// chain holds at every slice.
pub fn expand_until_stable(
    latents: &LatentTrajectories,
    params: &ModelParams,
    cfg: &ClusterConfig,
) -> Result<Expansion> {
    cfg.validate()?;
    let mut current = latents.clone();
    for expansions in 0..=cfg.max_expansions {
        let stability = check_trajectory_stability(params, &current)?;
        if stability.satisfied {
            return Ok(Expansion { latents: current, expansions, stability });
        }
        current = current.scaled(cfg.expansion_factor);
    }
    Err(Error::ExpansionLimit { iterations: cfg.max_expansions })
}

/// `z_i1 ~ N(0, rho^2 I)`, `z_it ~ N(z_i(t-1), sigma^2 I)`. A zero `sigma`
/// yields constant trajectories.
pub fn sample_prior_trajectories<R: Rng + ?Sized>(
    n_nodes: usize,
    n_times: usize,
    dim: usize,
    rho: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<LatentTrajectories> {
    if !(rho > 0.0) || !(sigma >= 0.0) {
        return Err(Error::Domain(format!("need rho > 0 and sigma >= 0, got {rho}, {sigma}")));
    }
    let init = Normal::new(0.0, rho).map_err(|e| Error::Domain(e.to_string()))?;
    let step = Normal::new(0.0, sigma).map_err(|e| Error::Domain(e.to_string()))?;
    let mut out = LatentTrajectories::zeros(n_nodes, n_times, dim);
    for i in 0..n_nodes {
        for d in 0..dim {
            out.position_mut(i, 0)[d] = init.sample(rng);
        }
        for s in 1..n_times {
            for d in 0..dim {
                let prev = out.position(i, s - 1)[d];
                out.position_mut(i, s)[d] = prev + step.sample(rng);
            }
        }
    }
    Ok(out)
}

/// Which stability condition, if any, to demand before simulating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StabilityGate {
    #[default]
    Off,
    Relaxed,
    Literal,
}

pub fn ensure_stable(params: &ModelParams, latents: &LatentTrajectories, gate: StabilityGate) -> Result<()> {
    if gate == StabilityGate::Off {
        return Ok(());
    }
    let rep = check_trajectory_stability(params, latents)?;
    let ok = match gate {
        StabilityGate::Literal => rep.satisfied,
        _ => rep.relaxed_satisfied,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "interaction matrix fails the {gate:?} stability condition at slice {}",
            rep.worst_slice
        )))
    }
}

/// Iterates the model forward from the lagged counts `y_init` (the regressor
/// for the first simulated column), drawing `n_times` columns.
///
/// Column 0 is driven by slice 0; column `t >= 1` by slice `t - 1`.
pub fn simulate_counts<R: Rng + ?Sized>(
    params: &ModelParams,
    latents: &LatentTrajectories,
    y_init: &[u64],
    n_times: usize,
    rng: &mut R,
) -> Result<CountPanel> {
    params.validate()?;
    let n = latents.n_nodes();
    if params.beta.len() != n || y_init.len() != n {
        return Err(Error::Shape(format!(
            "{n} nodes but {} beta values and {} initial counts",
            params.beta.len(),
            y_init.len()
        )));
    }
    if !(latents.n_slices() == 1 || latents.n_slices() == n_times) {
        return Err(Error::Shape(format!("{} latent slices for {n_times} simulated time points", latents.n_slices())));
    }
    let mut series = vec![Vec::with_capacity(n_times); n];
    let mut lag: Vec<f64> = y_init.iter().map(|&y| (y as f64).ln_1p()).collect();
    let mut gamma = interaction_matrix_at(params, latents, 0)?;
    for t in 0..n_times {
        if latents.n_slices() > 1 && t >= 1 {
            gamma = interaction_matrix_at(params, latents, t - 1)?;
        }
        let mut next = vec![0.0; n];
        for i in 0..n {
            let eta = params.alpha + (0..n).map(|j| gamma.get(i, j) * lag[j]).sum::<f64>();
            let lambda = eta.exp();
            if !(lambda.is_finite() && lambda <= MAX_INTENSITY) {
                return Err(Error::SimulationOverflow { t });
            }
            let y = if lambda > 0.0 {
                Poisson::new(lambda).map_err(|_| Error::SimulationOverflow { t })?.sample(rng) as u64
            } else {
                0
            };
            series[i].push(y);
            next[i] = (y as f64).ln_1p();
        }
        lag = next;
    }
    CountPanel::from_series(series)
}

/// One synthetic static dataset with its generating truth.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticReplicate {
    pub params: ModelParams,
    pub latents: LatentTrajectories,
    pub panel: CountPanel,
    pub expansions: usize,
    /// Parameter redraws needed before expansion could reach stability.
    pub redraws: usize,
}

/// Draws parameters and clustered positions, expands until stable and
/// simulates `n_times` counts from zero initial counts. Draws whose `beta`
/// makes the strict chain unreachable, or whose series overflows (a stable
/// but near-unit-root matrix with a large `alpha`), are discarded and redrawn.
pub fn simulate_static_replicate<R: Rng + ?Sized>(
    cfg: &ClusterConfig,
    n_times: usize,
    rng: &mut R,
) -> Result<StaticReplicate> {
    const MAX_REDRAWS: usize = 1000;
    let n = cfg.n_nodes();
    for redraws in 0..MAX_REDRAWS {
        let (alpha, beta) = sample_static_params(rng, n);
        let params = ModelParams::new(alpha, beta);
        let latents = sample_clustered_latents(cfg, rng)?;
        let expanded = match expand_until_stable(&latents, &params, cfg) {
            Ok(e) => e,
            Err(Error::ExpansionLimit { .. }) => continue,
            Err(e) => return Err(e),
        };
        let panel = match simulate_counts(&params, &expanded.latents, &vec![0; n], n_times, rng) {
            Ok(p) => p,
            Err(Error::SimulationOverflow { .. }) => continue,
            Err(e) => return Err(e),
        };
        return Ok(StaticReplicate {
            params,
            latents: expanded.latents,
            panel,
            expansions: expanded.expansions,
            redraws,
        });
    }
    Err(Error::ExpansionLimit { iterations: cfg.max_expansions })
}
