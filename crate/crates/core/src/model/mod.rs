//! The generative model: distance-weighted Poisson log-linear autoregression
//! with random-walk latent trajectories.
//!
//! For series `i` at time `t >= 2`,
//!
//! ```text
//! log lambda[i][t] = alpha + sum_j Gamma[t-1][i][j] * log(y[j][t-1] + 1)
//! ```
//!
//! where `Gamma[t]` holds `beta` on its diagonal and `2 / (1 + exp(d_ij))` off
//! it, `d_ij` being the Euclidean distance between latent positions at `t`.

mod posterior;
mod types;

use nalgebra::DMatrix;

pub(crate) use posterior::PriorEval;
pub use posterior::{LatentMode, ModelSpec, ParamLayout, Posterior, PosteriorParts};
pub use types::{
    CountPanel, GammaHyper, IntensitySurface, InteractionMatrix, LatentTrajectories, ModelParams, RhoSigmaMode,
    COEF_PRIOR_SD, DEFAULT_RHO, DEFAULT_SIGMA,
};

use crate::density::LogDensity;
use crate::error::{Error, Result};

/// `2 / (1 + exp(d))` written as `2 * sigmoid(-d)` so large `d` cannot overflow.
#[inline]
pub(crate) fn weight(d: f64) -> f64 {
    if d >= 0.0 {
        let e = (-d).exp();
        2.0 * e / (1.0 + e)
    } else {
        2.0 / (1.0 + d.exp())
    }
}

/// Interaction weight `2 / (1 + exp(d))` for a latent distance `d >= 0`.
pub fn interaction_weight(d: f64) -> Result<f64> {
    if !d.is_finite() || d < 0.0 {
        return Err(Error::Domain(format!("distance must be finite and nonnegative, got {d}")));
    }
    Ok(weight(d))
}

pub fn pairwise_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("positions of length {} and {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
}

/// Interaction matrix for one `N x K` slice of positions.
pub fn interaction_matrix(beta: &[f64], positions: &DMatrix<f64>) -> Result<InteractionMatrix> {
    let n = positions.nrows();
    if beta.len() != n {
        return Err(Error::Shape(format!("{} beta values for {n} nodes", beta.len())));
    }
    if positions.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("latent positions must be finite".into()));
    }
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = beta[i];
        for j in i + 1..n {
            let d = (positions.row(i) - positions.row(j)).norm();
            let g = weight(d);
            m[(i, j)] = g;
            m[(j, i)] = g;
        }
    }
    Ok(InteractionMatrix(m))
}

pub fn interaction_matrix_at(
    params: &ModelParams,
    latents: &LatentTrajectories,
    slice: usize,
) -> Result<InteractionMatrix> {
    if slice >= latents.n_slices() {
        return Err(Error::Shape(format!("slice {slice} out of range for {} slices", latents.n_slices())));
    }
    interaction_matrix(&params.beta, &latents.slice(slice))
}

fn spec_for(params: &ModelParams, latents: &LatentTrajectories, n_times: Option<usize>) -> Result<ModelSpec> {
    params.validate()?;
    if params.beta.len() != latents.n_nodes() {
        return Err(Error::Shape(format!("{} beta values for {} latent nodes", params.beta.len(), latents.n_nodes())));
    }
    let mode = match (latents.n_slices(), n_times) {
        (1, _) => LatentMode::Static,
        (s, Some(t)) if s == t => LatentMode::Dynamic,
        (_, None) => LatentMode::Dynamic,
        (s, Some(t)) => return Err(Error::Shape(format!("{s} latent slices for a panel of {t} time points"))),
    };
    Ok(ModelSpec {
        mode,
        latent_dim: latents.dim(),
        rho_sigma_mode: params.rho_sigma_mode,
        rho: params.rho,
        sigma: params.sigma,
    })
}

fn posterior_for(
    params: &ModelParams,
    latents: &LatentTrajectories,
    panel: &CountPanel,
) -> Result<(Posterior, Vec<f64>)> {
    if panel.n_series() != latents.n_nodes() {
        return Err(Error::Shape(format!(
            "panel has {} series but latents have {} nodes",
            panel.n_series(),
            latents.n_nodes()
        )));
    }
    let spec = spec_for(params, latents, Some(panel.n_times()))?;
    let post = Posterior::new(panel, spec)?;
    let theta = post.layout().pack(params, latents);
    Ok((post, theta))
}

pub fn log_intensity(
    params: &ModelParams,
    latents: &LatentTrajectories,
    panel: &CountPanel,
) -> Result<IntensitySurface> {
    let (post, theta) = posterior_for(params, latents, panel)?;
    let (n, t) = (panel.n_series(), panel.n_times());
    let flat = post.log_intensity(&theta);
    Ok(IntensitySurface { log_lambda: DMatrix::from_row_slice(n, t - 1, &flat) })
}

pub fn log_likelihood(params: &ModelParams, latents: &LatentTrajectories, panel: &CountPanel) -> Result<f64> {
    let (post, theta) = posterior_for(params, latents, panel)?;
    Ok(post.parts(&theta).log_likelihood)
}

/// Per-time contributions whose sum is [`log_likelihood`].
pub fn log_likelihood_by_time(
    params: &ModelParams,
    latents: &LatentTrajectories,
    panel: &CountPanel,
) -> Result<Vec<f64>> {
    let (post, theta) = posterior_for(params, latents, panel)?;
    Ok(post.log_likelihood_by_time(&theta))
}

/// Normal priors on `alpha`/`beta`, the random-walk prior on the latents and,
/// when priored, the Gamma densities of `rho` and `sigma` (no Jacobian).
pub fn log_prior(params: &ModelParams, latents: &LatentTrajectories) -> Result<f64> {
    let spec = spec_for(params, latents, None)?;
    let layout = ParamLayout::for_spec(&spec, latents.n_nodes(), latents.n_slices());
    let eval = PriorEval {
        alpha: params.alpha,
        beta: &params.beta,
        z: latents.as_slice(),
        rho: params.rho,
        sigma: params.sigma,
        mode: params.rho_sigma_mode,
    };
    Ok(eval.eval(&layout, None).0)
}

pub fn log_posterior(params: &ModelParams, latents: &LatentTrajectories, panel: &CountPanel) -> Result<f64> {
    let (post, theta) = posterior_for(params, latents, panel)?;
    Ok(post.parts(&theta).log_posterior())
}

/// Gradient of the sampling target over the free coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layout: ParamLayout,
    pub values: Vec<f64>,
}

impl Gradient {
    pub fn alpha(&self) -> f64 {
        self.values[ParamLayout::ALPHA]
    }

    pub fn beta(&self) -> &[f64] {
        &self.values[self.layout.beta()]
    }

    pub fn latents(&self) -> &[f64] {
        &self.values[self.layout.latents()]
    }

    pub fn log_rho(&self) -> Option<f64> {
        self.layout.log_rho().map(|i| self.values[i])
    }

    pub fn log_sigma(&self) -> Option<f64> {
        self.layout.log_sigma().map(|i| self.values[i])
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Analytic gradient of the log posterior. When `rho`/`sigma` are Gamma-priored
/// they are differentiated on the log scale with the Jacobian included.
pub fn grad_log_posterior(params: &ModelParams, latents: &LatentTrajectories, panel: &CountPanel) -> Result<Gradient> {
    let (post, theta) = posterior_for(params, latents, panel)?;
    let mut values = vec![0.0; theta.len()];
    post.log_density_and_gradient(&theta, &mut values);
    Ok(Gradient { layout: *post.layout(), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_node_panel(prev: [u64; 2], next: [u64; 2]) -> CountPanel {
        CountPanel::from_series(vec![vec![prev[0], next[0]], vec![prev[1], next[1]]]).unwrap()
    }

    #[test]
    fn weight_at_zero_is_one() {
        assert_eq!(interaction_weight(0.0).unwrap(), 1.0);
    }

    #[test]
    fn weight_far_tail_does_not_overflow() {
        let w = interaction_weight(800.0).unwrap();
        assert!((0.0..1e-300).contains(&w));
        assert!(interaction_weight(1e6).unwrap().is_finite());
    }

    #[test]
    fn weight_at_ln3_is_half() {
        assert_relative_eq!(interaction_weight(3f64.ln()).unwrap(), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn weight_rejects_bad_distances() {
        assert!(matches!(interaction_weight(-1.0), Err(Error::Domain(_))));
        assert!(interaction_weight(f64::NAN).is_err());
        assert!(interaction_weight(f64::INFINITY).is_err());
    }

    #[test]
    fn distances() {
        assert_eq!(pairwise_distance(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(pairwise_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(pairwise_distance(&[1.0, 2.0], &[4.0, 6.0]).unwrap(), 5.0);
        assert!(matches!(pairwise_distance(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn interaction_matrix_at_origin() {
        let m = interaction_matrix(&[0.5, -0.3], &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(m.matrix(), &DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 1.0, -0.3]));
    }

    #[test]
    fn interaction_matrix_at_ln3() {
        let pos = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 3f64.ln(), 0.0]);
        let m = interaction_matrix(&[0.0, 0.0], &pos).unwrap();
        assert_relative_eq!(m.get(0, 1), 0.5, max_relative = 1e-15);
        assert_relative_eq!(m.get(1, 0), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn interaction_matrix_far_node() {
        // 2 / (1 + e^100) = 7.440151952041672e-44
        let pos = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.5, 0.0, 0.0, 100.0]);
        let m = interaction_matrix(&[0.1, 0.2, 0.3], &pos).unwrap();
        for j in 0..2 {
            assert!(m.get(2, j) < 1e-21 && m.get(j, 2) < 1e-21);
        }
        assert_relative_eq!(m.get(2, 0), 7.440151952041672e-44, max_relative = 1e-12);
    }

    #[test]
    fn zero_lag_counts_give_intercept() {
        let panel = two_node_panel([0, 0], [3, 5]);
        let params = ModelParams::new(0.7, vec![0.4, -0.2]);
        let latents = LatentTrajectories::zeros(2, 2, 2);
        let surf = log_intensity(&params, &latents, &panel).unwrap();
        assert_eq!(surf.log_lambda.as_slice(), &[0.7, 0.7]);
    }

    #[test]
    fn neighbour_log_term_is_copied_at_zero_distance() {
        // y_{t-1} = (0, e-1) is not an integer; use the likelihood engine
        // directly through a panel with y = 1 and compare with log(2).
        let panel = two_node_panel([0, 1], [0, 0]);
        let params = ModelParams::new(0.0, vec![0.0, 0.0]);
        let latents = LatentTrajectories::zeros(2, 2, 2);
        let surf = log_intensity(&params, &latents, &panel).unwrap();
        assert_relative_eq!(surf.log_lambda[(0, 0)], 2f64.ln(), max_relative = 1e-15);
        assert_eq!(surf.log_lambda[(1, 0)], 0.0);
    }

    #[test]
    fn poisson_cell_values() {
        // lambda = 1 (alpha = 0, zero lag), y = 0 -> -1 per cell.
        let panel = two_node_panel([0, 0], [0, 0]);
        let params = ModelParams::new(0.0, vec![0.0, 0.0]);
        let ll = log_likelihood(&params, &LatentTrajectories::zeros(2, 1, 2), &panel).unwrap();
        assert_relative_eq!(ll, -2.0, max_relative = 1e-15);

        // lambda = 2, y = 2 -> ln 2 - 2 per cell.
        let panel = two_node_panel([0, 0], [2, 2]);
        let params = ModelParams::new(2f64.ln(), vec![0.0, 0.0]);
        let ll = log_likelihood(&params, &LatentTrajectories::zeros(2, 1, 2), &panel).unwrap();
        assert_relative_eq!(ll, 2.0 * (2f64.ln() - 2.0), max_relative = 1e-14);
    }

    #[test]
    fn shape_errors() {
        let panel = two_node_panel([0, 0], [1, 1]);
        let params = ModelParams::new(0.0, vec![0.0, 0.0]);
        let latents = LatentTrajectories::zeros(2, 3, 2);
        assert!(matches!(log_likelihood(&params, &latents, &panel), Err(Error::Shape(_))));
        let params3 = ModelParams::new(0.0, vec![0.0; 3]);
        assert!(log_likelihood(&params3, &LatentTrajectories::zeros(2, 2, 2), &panel).is_err());
        let bad = ModelParams::new(0.0, vec![0.0, 0.0]).with_scales(0.0, 1.0);
        assert!(matches!(log_prior(&bad, &LatentTrajectories::zeros(2, 2, 2)), Err(Error::Domain(_))));
    }
}
