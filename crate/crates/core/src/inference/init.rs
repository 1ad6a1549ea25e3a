use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LatentTrajectories, ModelParams, ModelSpec, ParamLayout, RhoSigmaMode};

/// Standard deviation of the starting draws for `alpha` and `beta`.
pub const INIT_COEF_SD: f64 = 0.1;

/// Where an optimizer or sampler starts.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Init {
    /// Random start from the default scheme: `alpha, beta ~ N(0, 0.1^2)`,
    /// first positions `~ N(0, I)`, later positions copied forward with
    /// `N(0, sigma^2)` jitter.
    #[default]
    Default,
    /// An explicit flat parameter vector, laid out as the target expects.
    Theta { theta: Vec<f64> },
}

/// Starting scales for a spec: pinned values, or in gamma-priored mode the
/// prior mean for `rho` and the model's fixed `sigma` (a small value keeps the
/// initial trajectories smooth).
pub fn initial_scales(spec: &ModelSpec) -> (f64, f64) {
    match spec.rho_sigma_mode {
        RhoSigmaMode::Fixed => (spec.rho, spec.sigma),
        RhoSigmaMode::Gamma(h) => (h.rho_mean(), spec.sigma),
    }
}

/// Draws a start from the default scheme.
pub fn default_init<R: Rng + ?Sized>(spec: &ModelSpec, n_nodes: usize, n_times: usize, rng: &mut R) -> Vec<f64> {
    let layout = ParamLayout::for_spec(spec, n_nodes, n_times);
    let (rho, sigma) = initial_scales(spec);
    let coef = Normal::new(0.0, INIT_COEF_SD).expect("valid sd");
    let alpha = coef.sample(rng);
    let beta: Vec<f64> = (0..n_nodes).map(|_| coef.sample(rng)).collect();
    let mut z = LatentTrajectories::zeros(n_nodes, layout.n_slices, layout.dim);
    for i in 0..n_nodes {
        for k in 0..layout.dim {
            z.position_mut(i, 0)[k] = StandardNormal.sample(rng);
        }
        for s in 1..layout.n_slices {
            for k in 0..layout.dim {
                let prev = z.position(i, s - 1)[k];
                let step: f64 = StandardNormal.sample(rng);
                z.position_mut(i, s)[k] = prev + sigma * step;
            }
        }
    }
    let params = ModelParams::new(alpha, beta).with_scales(rho, sigma);
    layout.pack(&params, &z)
}

/// Resolves an [`Init`] into a flat vector of the expected length.
pub(crate) fn resolve<R: Rng + ?Sized>(
    init: &Init,
    spec: &ModelSpec,
    n_nodes: usize,
    n_times: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    match init {
        Init::Default => Ok(default_init(spec, n_nodes, n_times, rng)),
        Init::Theta { theta } => {
            let expected = ParamLayout::for_spec(spec, n_nodes, n_times).len();
            if theta.len() != expected {
                return Err(Error::Shape(format!(
                    "initial vector has {} coordinates, the model needs {expected}",
                    theta.len()
                )));
            }
            if theta.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteStart);
            }
            Ok(theta.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GammaHyper, LatentMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_start_has_layout_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for spec in [
            ModelSpec::default(),
            ModelSpec::static_model(),
            ModelSpec::default().with_gamma_prior(GammaHyper::default()),
            ModelSpec::static_model().with_gamma_prior(GammaHyper::default()),
        ] {
            let theta = default_init(&spec, 4, 20, &mut rng);
            assert_eq!(theta.len(), ParamLayout::for_spec(&spec, 4, 20).len());
        }
    }

    #[test]
    fn jitter_follows_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = ModelSpec { mode: LatentMode::Dynamic, ..ModelSpec::default() }.fixed_at(10.0, 0.01);
        let theta = default_init(&spec, 3, 500, &mut rng);
        let layout = ParamLayout::for_spec(&spec, 3, 500);
        let (_, z) = layout.unpack(&theta, &spec);
        let mut sq = 0.0;
        let mut n = 0;
        for i in 0..3 {
            for s in 1..500 {
                for k in 0..2 {
                    sq += (z.position(i, s)[k] - z.position(i, s - 1)[k]).powi(2);
                    n += 1;
                }
            }
        }
        let sd = (sq / n as f64).sqrt();
        assert!((sd - 0.01).abs() < 0.001, "{sd}");
    }

    #[test]
    fn explicit_start_is_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = ModelSpec::static_model();
        let bad = Init::Theta { theta: vec![0.0; 3] };
        assert!(matches!(resolve(&bad, &spec, 2, 5, &mut rng), Err(Error::Shape(_))));
        let n = ParamLayout::for_spec(&spec, 2, 5).len();
        let nan = Init::Theta { theta: vec![f64::NAN; n] };
        assert!(matches!(resolve(&nan, &spec, 2, 5, &mut rng), Err(Error::NonFiniteStart)));
    }
}
