use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::diagnostics::{ess_chains, rhat};
use super::procrustes::AlignedDraws;
use crate::error::{Error, Result};
use crate::inference::Draw;
use crate::model::{weight, LatentTrajectories};

/// Linear-interpolation quantile of sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean and central 95% interval of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            lower: quantile_sorted(&sorted, 0.025),
            upper: quantile_sorted(&sorted, 0.975),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// `(1/2N) sum_i |z_i - zbar|^2` for one `N x K` slice.
pub fn empirical_variance(slice: &DMatrix<f64>) -> f64 {
    let n = slice.nrows();
    if n == 0 {
        return 0.0;
    }
    let c = slice.row_mean();
    slice.row_iter().map(|r| (r - &c).norm_squared()).sum::<f64>() / (2.0 * n as f64)
}

/// Empirical variance at every latent slice.
pub fn variance_series(latents: &LatentTrajectories) -> Vec<f64> {
    (0..latents.n_slices()).map(|s| empirical_variance(&latents.slice(s))).collect()
}

/// Posterior draws and per-slice summaries of the empirical variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSeries {
    /// `draws[m][s]`
    pub draws: Vec<Vec<f64>>,
    pub summary: Vec<Interval>,
}

impl RiskSeries {
    pub fn from_draws<'a>(latents: impl IntoIterator<Item = &'a LatentTrajectories>) -> Self {
        let draws: Vec<Vec<f64>> = latents.into_iter().map(variance_series).collect();
        let n_slices = draws.first().map_or(0, Vec::len);
        let summary = (0..n_slices).map(|s| Interval::of(&draws.iter().map(|d| d[s]).collect::<Vec<_>>())).collect();
        Self { draws, summary }
    }

    pub fn means(&self) -> Vec<f64> {
        self.summary.iter().map(|i| i.mean).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub interval: Interval,
    pub sd: f64,
    /// `None` when not computable (one chain, too few draws or no variance).
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

/// Interaction weights per slice and node pair, averaged over draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSummary {
    pub n_nodes: usize,
    pub n_slices: usize,
    /// `[s][i][j]`, flattened; the diagonal holds `beta`.
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InteractionSummary {
    fn index(&self, s: usize, i: usize, j: usize) -> usize {
        (s * self.n_nodes + i) * self.n_nodes + j
    }

    pub fn get(&self, s: usize, i: usize, j: usize) -> Interval {
        let k = self.index(s, i, j);
        Interval { mean: self.mean[k], lower: self.lower[k], upper: self.upper[k] }
    }

    /// Posterior-mean interaction matrix at slice `s`.
    pub fn mean_matrix(&self, s: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_nodes, self.n_nodes, |i, j| self.mean[self.index(s, i, j)])
    }

    /// Posterior-mean weight of pair `(i, j)` at every slice.
    pub fn pair_series(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.n_slices).map(|s| self.mean[self.index(s, i, j)]).collect()
    }
}

/// Interaction weights averaged over draws ("mean of weights").
pub fn interaction_summary(draws: &[Draw]) -> Result<InteractionSummary> {
    let first = draws.first().ok_or_else(|| Error::Shape("no draws to summarize".into()))?;
    let (n, ns) = (first.latents.n_nodes(), first.latents.n_slices());
    let size = ns * n * n;
    let mut values = vec![Vec::with_capacity(draws.len()); size];
    for d in draws {
        for s in 0..ns {
            for i in 0..n {
                for j in 0..n {
                    let v = if i == j {
                        d.beta[i]
                    } else {
                        let (a, b) = (d.latents.position(i, s), d.latents.position(j, s));
                        weight(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
                    };
                    values[(s * n + i) * n + j].push(v);
                }
            }
        }
    }
    let intervals: Vec<Interval> = values.iter().map(|v| Interval::of(v)).collect();
    Ok(InteractionSummary {
        n_nodes: n,
        n_slices: ns,
        mean: intervals.iter().map(|i| i.mean).collect(),
        lower: intervals.iter().map(|i| i.lower).collect(),
        upper: intervals.iter().map(|i| i.upper).collect(),
    })
}

/// Posterior summaries of latent coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSummary {
    pub mean: LatentTrajectories,
    pub lower: LatentTrajectories,
    pub upper: LatentTrajectories,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub parameters: Vec<ParameterSummary>,
    pub latents: LatentSummary,
    pub interactions: InteractionSummary,
    pub risk: RiskSeries,
}

impl Summary {
    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

fn scalar_summary(name: String, aligned: &AlignedDraws, f: impl Fn(&Draw) -> f64) -> ParameterSummary {
    let values: Vec<f64> = aligned.draws.iter().map(&f).collect();
    let interval = Interval::of(&values);
    let n = values.len() as f64;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - interval.mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut chains = vec![Vec::new(); aligned.n_chains()];
    for d in &aligned.draws {
        chains[d.chain].push(f(d));
    }
    ParameterSummary { name, interval, sd, rhat: rhat(&chains).ok().flatten(), ess: ess_chains(&chains).ok().flatten() }
}

/// Posterior summaries of aligned draws.
pub fn summarize(aligned: &AlignedDraws) -> Result<Summary> {
    if aligned.len() < 2 {
        return Err(Error::Shape("summaries need at least two draws".into()));
    }
    let n = aligned.draws[0].beta.len();
    let mut parameters = vec![scalar_summary("alpha".into(), aligned, |d| d.alpha)];
    for i in 0..n {
        parameters.push(scalar_summary(format!("beta[{}]", i + 1), aligned, |d| d.beta[i]));
    }
    if aligned.spec.rho_sigma_mode.is_priored() {
        parameters.push(scalar_summary("rho".into(), aligned, |d| d.rho));
        if aligned.draws[0].latents.n_slices() > 1 {
            parameters.push(scalar_summary("sigma".into(), aligned, |d| d.sigma));
        }
    }

    let z0 = &aligned.draws[0].latents;
    let (nn, ns, k) = (z0.n_nodes(), z0.n_slices(), z0.dim());
    let mut mean = LatentTrajectories::zeros(nn, ns, k);
    let mut lower = mean.clone();
    let mut upper = mean.clone();
    let mut column = vec![0.0; aligned.len()];
    for idx in 0..nn * ns * k {
        for (c, d) in column.iter_mut().zip(&aligned.draws) {
            *c = d.latents.as_slice()[idx];
        }
        let iv = Interval::of(&column);
        mean.as_mut_slice()[idx] = iv.mean;
        lower.as_mut_slice()[idx] = iv.lower;
        upper.as_mut_slice()[idx] = iv.upper;
    }

    Ok(Summary {
        parameters,
        latents: LatentSummary { mean, lower, upper },
        interactions: interaction_summary(&aligned.draws)?,
        risk: RiskSeries::from_draws(aligned.draws.iter().map(|d| &d.latents)),
    })
}

/// Estimated-to-true distance ratios split by cluster membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRatios {
    pub within: Vec<f64>,
    pub between: Vec<f64>,
    /// Pairs skipped because their true distance is zero.
    pub excluded: usize,
}

impl DistanceRatios {
    pub fn within_median(&self) -> Option<f64> {
        median(&self.within)
    }

    pub fn between_median(&self) -> Option<f64> {
        median(&self.between)
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(quantile_sorted(&sorted, 0.5))
}

/// Ratios `d_est(i, j) / d_true(i, j)` for every pair `i < j` at every slice.
pub fn distance_ratio_diagnostic(
    true_latents: &LatentTrajectories,
    estimated: &LatentTrajectories,
    assignment: &[usize],
) -> Result<DistanceRatios> {
    let shape = |z: &LatentTrajectories| (z.n_nodes(), z.n_slices(), z.dim());
    if shape(true_latents) != shape(estimated) {
        return Err(Error::Shape("true and estimated positions differ in shape".into()));
    }
    if assignment.len() != true_latents.n_nodes() {
        return Err(Error::Shape(format!(
            "assignment has {} entries for {} nodes",
            assignment.len(),
            true_latents.n_nodes()
        )));
    }
    let dist = |z: &LatentTrajectories, i: usize, j: usize, s: usize| {
        z.position(i, s).iter().zip(z.position(j, s)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let mut out = DistanceRatios { within: Vec::new(), between: Vec::new(), excluded: 0 };
    let n = true_latents.n_nodes();
    for s in 0..true_latents.n_slices() {
        for i in 0..n {
            for j in i + 1..n {
                let d_true = dist(true_latents, i, j, s);
                if d_true == 0.0 {
                    out.excluded += 1;
                    continue;
                }
                let r = dist(estimated, i, j, s) / d_true;
                if assignment[i] == assignment[j] {
                    out.within.push(r);
                } else {
                    out.between.push(r);
                }
            }
        }
    }
    Ok(out)
}
