//! Run configuration: one TOML file, overridable from the command line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dtslpm::inference::{HmcConfig, LbfgsConfig, MapConfig, StepSize};
use dtslpm::model::{LatentMode, ModelSpec, RhoSigmaMode, DEFAULT_RHO, DEFAULT_SIGMA};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Where artifacts are written. Not part of the config hash.
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub simulate: SimulateConfig,
    pub map: MapSettings,
    pub hmc: HmcSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            simulate: SimulateConfig::default(),
            map: MapSettings::default(),
            hmc: HmcSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Count CSV to fit. Defaults to the panel written by `simulate`.
    pub counts: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: LatentMode,
    pub latent_dim: usize,
    /// `{ kind = "fixed" }` or `{ kind = "gamma", rho_shape = .., ... }`.
    pub prior: RhoSigmaMode,
    /// Values used when the scales are fixed.
    pub rho: f64,
    pub sigma: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mode: LatentMode::Dynamic,
            latent_dim: 2,
            prior: RhoSigmaMode::Fixed,
            rho: DEFAULT_RHO,
            sigma: DEFAULT_SIGMA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// `"1"`, `"2"`, `"3"` (the reference trajectory designs) or `"static"`
    /// (clustered static positions with random coefficients).
    pub design: String,
    pub n_times: usize,
    /// Number of series for the static design; the reference designs have four.
    pub n_nodes: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { design: "1".into(), n_times: 200, n_nodes: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSettings {
    pub n_starts: usize,
    pub max_iterations: usize,
    pub grad_tol: f64,
}

impl Default for MapSettings {
    fn default() -> Self {
        let l = LbfgsConfig::default();
        Self { n_starts: 1, max_iterations: l.max_iterations, grad_tol: l.grad_tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcSettings {
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub leapfrog_steps: usize,
    /// Fixed step size; adapted during burn-in when absent.
    pub step_size: Option<f64>,
    pub target_accept: f64,
}

impl Default for HmcSettings {
    fn default() -> Self {
        let h = HmcConfig::default();
        Self {
            chains: h.n_chains,
            iterations: h.n_iterations,
            burn_in: h.burn_in,
            thin: h.thin,
            leapfrog_steps: h.leapfrog_steps,
            step_size: None,
            target_accept: h.target_accept,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub mode: Option<LatentMode>,
    pub latent_dim: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub counts: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.chains {
            self.hmc.chains = v;
        }
        if let Some(v) = o.iterations {
            self.hmc.iterations = v;
        }
        if let Some(v) = o.burn_in {
            self.hmc.burn_in = v;
        }
        if let Some(v) = o.thin {
            self.hmc.thin = v;
        }
        if let Some(v) = o.mode {
            self.model.mode = v;
        }
        if let Some(v) = o.latent_dim {
            self.model.latent_dim = v;
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = &o.counts {
            self.data.counts = Some(v.clone());
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_spec().validate()?;
        self.hmc_config().validate()?;
        if self.map.n_starts == 0 {
            bail!("map.n_starts must be at least 1");
        }
        Ok(())
    }

    /// Model settings. Static mode has a single latent slice and no
    /// random-walk step, so `sigma` plays no role there.
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            mode: self.model.mode,
            latent_dim: self.model.latent_dim,
            rho_sigma_mode: self.model.prior,
            rho: self.model.rho,
            sigma: self.model.sigma,
        }
    }

    pub fn map_config(&self) -> MapConfig {
        MapConfig {
            lbfgs: LbfgsConfig {
                max_iterations: self.map.max_iterations,
                grad_tol: self.map.grad_tol,
                ..LbfgsConfig::default()
            },
            n_starts: self.map.n_starts,
            seed: self.seed,
        }
    }

    pub fn hmc_config(&self) -> HmcConfig {
        HmcConfig {
            n_iterations: self.hmc.iterations,
            burn_in: self.hmc.burn_in,
            thin: self.hmc.thin,
            n_chains: self.hmc.chains,
            leapfrog_steps: self.hmc.leapfrog_steps,
            step_size: self.hmc.step_size.map_or(StepSize::Adapt, StepSize::Fixed),
            target_accept: self.hmc.target_accept,
            seed: self.seed,
            ..HmcConfig::default()
        }
    }

    /// SHA-256 of the canonical JSON form of everything that affects results.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.model.prior = RhoSigmaMode::Gamma(Default::default());
        cfg.hmc.step_size = Some(0.01);
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn gamma_prior_from_text() {
        let cfg: RunConfig = toml::from_str(
            "seed = 3\n[model]\nmode = \"static\"\nprior = { kind = \"gamma\", rho_shape = 2.0, rho_rate = 2.0, sigma_shape = 5.0, sigma_rate = 10.0 }\n",
        )
        .unwrap();
        assert_eq!(cfg.model.mode, LatentMode::Static);
        assert!(cfg.model.prior.is_priored());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("seeed = 1").is_err());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides { chains: Some(2), mode: Some(LatentMode::Static), ..Default::default() });
        assert_eq!(cfg.hmc.chains, 2);
        assert_eq!(cfg.model_spec().mode, LatentMode::Static);
    }
}
