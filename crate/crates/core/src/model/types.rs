use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed `N x T` panel of nonnegative counts, one row per series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountPanel {
    n_series: usize,
    n_times: usize,
    counts: Vec<u64>,
    series_labels: Vec<String>,
    time_labels: Vec<String>,
}

impl CountPanel {
    /// Builds a panel from per-series count vectors (`series[i][t]`).
    pub fn new(series: Vec<Vec<u64>>, series_labels: Vec<String>, time_labels: Vec<String>) -> Result<Self> {
        let n_series = series.len();
        if n_series < 2 {
            return Err(Error::Shape(format!("need at least 2 series, got {n_series}")));
        }
        let n_times = series[0].len();
        if n_times < 2 {
            return Err(Error::Shape(format!("need at least 2 time points, got {n_times}")));
        }
        if let Some((i, s)) = series.iter().enumerate().find(|(_, s)| s.len() != n_times) {
            return Err(Error::Shape(format!("series {i} has {} time points, expected {n_times}", s.len())));
        }
        if series_labels.len() != n_series {
            return Err(Error::Shape(format!("{} series labels for {n_series} series", series_labels.len())));
        }
        if time_labels.len() != n_times {
            return Err(Error::Shape(format!("{} time labels for {n_times} time points", time_labels.len())));
        }
        Ok(Self { n_series, n_times, counts: series.into_iter().flatten().collect(), series_labels, time_labels })
    }

    /// Like [`CountPanel::new`] with labels `s1..sN` and `1..T`.
    pub fn from_series(series: Vec<Vec<u64>>) -> Result<Self> {
        let n = series.len();
        let t = series.first().map_or(0, Vec::len);
        Self::new(series, (1..=n).map(|i| format!("s{i}")).collect(), (1..=t).map(|t| t.to_string()).collect())
    }

    pub fn n_series(&self) -> usize {
        self.n_series
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn count(&self, i: usize, t: usize) -> u64 {
        self.counts[i * self.n_times + t]
    }

    pub fn series(&self, i: usize) -> &[u64] {
        &self.counts[i * self.n_times..(i + 1) * self.n_times]
    }

    pub fn series_labels(&self) -> &[String] {
        &self.series_labels
    }

    pub fn time_labels(&self) -> &[String] {
        &self.time_labels
    }
}

/// Latent positions `z[i][s][k]` for `N` nodes over a number of slices.
///
/// A dynamic model carries one slice per time point. A static model carries a
/// single slice shared by every time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTrajectories {
    n_nodes: usize,
    n_slices: usize,
    dim: usize,
    data: Vec<f64>,
}

impl LatentTrajectories {
    pub fn new(n_nodes: usize, n_slices: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || n_nodes == 0 || n_slices == 0 {
            return Err(Error::Shape(format!(
                "latent shape must be positive, got N={n_nodes} slices={n_slices} K={dim}"
            )));
        }
        if data.len() != n_nodes * n_slices * dim {
            return Err(Error::Shape(format!(
                "expected {} latent coordinates, got {}",
                n_nodes * n_slices * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("latent positions must be finite".into()));
        }
        Ok(Self { n_nodes, n_slices, dim, data })
    }

    pub fn zeros(n_nodes: usize, n_slices: usize, dim: usize) -> Self {
        Self { n_nodes, n_slices, dim, data: vec![0.0; n_nodes * n_slices * dim] }
    }

    pub fn from_fn(n_nodes: usize, n_slices: usize, dim: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(n_nodes, n_slices, dim);
        for i in 0..n_nodes {
            for s in 0..n_slices {
                for k in 0..dim {
                    out.data[(i * n_slices + s) * dim + k] = f(i, s, k);
                }
            }
        }
        out
    }

    /// Single-slice configuration from an `N x K` matrix.
    pub fn from_static(positions: &DMatrix<f64>) -> Self {
        Self::from_fn(positions.nrows(), 1, positions.ncols(), |i, _, k| positions[(i, k)])
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_static(&self) -> bool {
        self.n_slices == 1
    }

    pub fn position(&self, i: usize, s: usize) -> &[f64] {
        let start = (i * self.n_slices + s) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn position_mut(&mut self, i: usize, s: usize) -> &mut [f64] {
        let start = (i * self.n_slices + s) * self.dim;
        &mut self.data[start..start + self.dim]
    }

    /// `N x K` matrix of the positions at slice `s`.
    pub fn slice(&self, s: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_nodes, self.dim, |i, k| self.position(i, s)[k])
    }

    /// `(slices * N) x K` matrix with slice-major row order.
    pub fn stacked(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_nodes * self.n_slices, self.dim, |r, k| {
            let (s, i) = (r / self.n_nodes, r % self.n_nodes);
            self.position(i, s)[k]
        })
    }

    /// Inverse of [`LatentTrajectories::stacked`].
    pub fn from_stacked(stacked: &DMatrix<f64>, n_nodes: usize) -> Result<Self> {
        if n_nodes == 0 || !stacked.nrows().is_multiple_of(n_nodes) {
            return Err(Error::Shape(format!("{} stacked rows do not split into {n_nodes} nodes", stacked.nrows())));
        }
        let n_slices = stacked.nrows() / n_nodes;
        let out = Self::from_fn(n_nodes, n_slices, stacked.ncols(), |i, s, k| stacked[(s * n_nodes + i, k)]);
        Self::new(n_nodes, n_slices, out.dim, out.data)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { data: self.data.iter().map(|v| v * factor).collect(), ..self.clone() }
    }
}

/// Shape and rate hyperparameters of the Gamma priors on `rho` and `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaHyper {
    pub rho_shape: f64,
    pub rho_rate: f64,
    pub sigma_shape: f64,
    pub sigma_rate: f64,
}

impl Default for GammaHyper {
    fn default() -> Self {
        Self { rho_shape: 2.0, rho_rate: 2.0, sigma_shape: 5.0, sigma_rate: 10.0 }
    }
}

impl GammaHyper {
    pub fn rho_mean(&self) -> f64 {
        self.rho_shape / self.rho_rate
    }

    pub fn sigma_mean(&self) -> f64 {
        self.sigma_shape / self.sigma_rate
    }
}

/// How the random-walk scales are treated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RhoSigmaMode {
    #[default]
    Fixed,
    Gamma(GammaHyper),
}

impl RhoSigmaMode {
    pub fn is_priored(&self) -> bool {
        matches!(self, Self::Gamma(_))
    }
}

pub const DEFAULT_RHO: f64 = 10.0;
pub const DEFAULT_SIGMA: f64 = 0.05;
/// Standard deviation of the zero-mean normal priors on `alpha` and `beta`.
pub const COEF_PRIOR_SD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub rho: f64,
    pub sigma: f64,
    pub rho_sigma_mode: RhoSigmaMode,
}

impl ModelParams {
    /// Parameters with the default fixed scales `rho = 10`, `sigma = 0.05`.
    pub fn new(alpha: f64, beta: Vec<f64>) -> Self {
        Self { alpha, beta, rho: DEFAULT_RHO, sigma: DEFAULT_SIGMA, rho_sigma_mode: RhoSigmaMode::Fixed }
    }

    pub fn with_scales(mut self, rho: f64, sigma: f64) -> Self {
        self.rho = rho;
        self.sigma = sigma;
        self
    }

    pub fn with_mode(mut self, mode: RhoSigmaMode) -> Self {
        self.rho_sigma_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Domain(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !self.alpha.is_finite() || self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("alpha and beta must be finite".into()));
        }
        Ok(())
    }
}

/// Interaction matrix at one time slice: `beta` on the diagonal, distance
/// weights off it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionMatrix(pub DMatrix<f64>);

impl InteractionMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }
}

/// Log intensities `log lambda[i][t]` for panel columns `t = 1..T` (0-based),
/// stored as an `N x (T-1)` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensitySurface {
    pub log_lambda: DMatrix<f64>,
}

impl IntensitySurface {
    pub fn lambda(&self) -> DMatrix<f64> {
        self.log_lambda.map(f64::exp)
    }
}
