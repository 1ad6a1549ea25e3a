use std::f64::consts::PI;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::types::{
    CountPanel, GammaHyper, LatentTrajectories, ModelParams, RhoSigmaMode, COEF_PRIOR_SD, DEFAULT_RHO, DEFAULT_SIGMA,
};
use crate::density::LogDensity;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LatentMode {
    /// One latent slice shared by all time points.
    Static,
    /// One latent slice per time point, random-walk prior.
    #[default]
    Dynamic,
}

/// Everything needed to turn a panel into a posterior target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub mode: LatentMode,
    pub latent_dim: usize,
    pub rho_sigma_mode: RhoSigmaMode,
    /// Values used for `rho`/`sigma` when they are not sampled.
    pub rho: f64,
    pub sigma: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            mode: LatentMode::Dynamic,
            latent_dim: 2,
            rho_sigma_mode: RhoSigmaMode::Fixed,
            rho: DEFAULT_RHO,
            sigma: DEFAULT_SIGMA,
        }
    }
}

impl ModelSpec {
    pub fn static_model() -> Self {
        Self { mode: LatentMode::Static, ..Self::default() }
    }

    pub fn with_gamma_prior(mut self, hyper: GammaHyper) -> Self {
        self.rho_sigma_mode = RhoSigmaMode::Gamma(hyper);
        self
    }

    /// The same model with `rho`/`sigma` pinned at the given values.
    pub fn fixed_at(mut self, rho: f64, sigma: f64) -> Self {
        self.rho_sigma_mode = RhoSigmaMode::Fixed;
        self.rho = rho;
        self.sigma = sigma;
        self
    }

    pub fn n_slices(&self, n_times: usize) -> usize {
        match self.mode {
            LatentMode::Static => 1,
            LatentMode::Dynamic => n_times,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Config("latent dimension must be at least 1".into()));
        }
        if !(self.rho > 0.0 && self.sigma > 0.0) {
            return Err(Error::Domain("rho and sigma must be positive".into()));
        }
        if let RhoSigmaMode::Gamma(h) = self.rho_sigma_mode {
            if [h.rho_shape, h.rho_rate, h.sigma_shape, h.sigma_rate].iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Config("gamma hyperparameters must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Position of each free coordinate in the flat parameter vector:
/// `[alpha, beta_1..beta_N, z (node-major, then slice, then dim), log rho?, log sigma?]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub n_nodes: usize,
    pub n_slices: usize,
    pub dim: usize,
    pub free_rho: bool,
    pub free_sigma: bool,
}

impl ParamLayout {
    pub const ALPHA: usize = 0;

    pub fn for_spec(spec: &ModelSpec, n_nodes: usize, n_times: usize) -> Self {
        let priored = spec.rho_sigma_mode.is_priored();
        Self {
            n_nodes,
            n_slices: spec.n_slices(n_times),
            dim: spec.latent_dim,
            free_rho: priored,
            free_sigma: priored && spec.mode == LatentMode::Dynamic,
        }
    }

    pub fn len(&self) -> usize {
        1 + self.n_nodes
            + self.n_nodes * self.n_slices * self.dim
            + usize::from(self.free_rho)
            + usize::from(self.free_sigma)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn beta(&self) -> Range<usize> {
        1..1 + self.n_nodes
    }

    pub fn latents(&self) -> Range<usize> {
        let start = 1 + self.n_nodes;
        start..start + self.n_nodes * self.n_slices * self.dim
    }

    pub fn log_rho(&self) -> Option<usize> {
        self.free_rho.then(|| self.latents().end)
    }

    pub fn log_sigma(&self) -> Option<usize> {
        self.free_sigma.then(|| self.latents().end + usize::from(self.free_rho))
    }

    pub fn pack(&self, params: &ModelParams, latents: &LatentTrajectories) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.len());
        theta.push(params.alpha);
        theta.extend_from_slice(&params.beta);
        theta.extend_from_slice(latents.as_slice());
        if self.free_rho {
            theta.push(params.rho.ln());
        }
        if self.free_sigma {
            theta.push(params.sigma.ln());
        }
        theta
    }

    /// Rebuilds the natural parameters; `spec` supplies any pinned scales.
    pub fn unpack(&self, theta: &[f64], spec: &ModelSpec) -> (ModelParams, LatentTrajectories) {
        let latents = LatentTrajectories::from_fn(self.n_nodes, self.n_slices, self.dim, {
            let z = &theta[self.latents()];
            let (ns, d) = (self.n_slices, self.dim);
            move |i, s, k| z[(i * ns + s) * d + k]
        });
        let params = ModelParams {
            alpha: theta[Self::ALPHA],
            beta: theta[self.beta()].to_vec(),
            rho: self.log_rho().map_or(spec.rho, |i| theta[i].exp()),
            sigma: self.log_sigma().map_or(spec.sigma, |i| theta[i].exp()),
            rho_sigma_mode: spec.rho_sigma_mode,
        };
        (params, latents)
    }
}

fn gamma_log_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - libm::lgamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Log prior of everything except the likelihood. With `grad`, also writes the
/// gradient with respect to the free coordinates of `layout`, including the
/// log-scale Jacobian for sampled `rho`/`sigma`.
pub(crate) struct PriorEval<'a> {
    pub alpha: f64,
    pub beta: &'a [f64],
    pub z: &'a [f64],
    pub rho: f64,
    pub sigma: f64,
    pub mode: RhoSigmaMode,
}

impl PriorEval<'_> {
    /// Returns `(log prior, log Jacobian)`.
    pub fn eval(&self, layout: &ParamLayout, grad: Option<&mut [f64]>) -> (f64, f64) {
        let (n, ns, k) = (layout.n_nodes, layout.n_slices, layout.dim);
        let coef_var = COEF_PRIOR_SD * COEF_PRIOR_SD;
        let coef_norm = -0.5 * (2.0 * PI * coef_var).ln();
        let mut lp = (n + 1) as f64 * coef_norm
            - (self.alpha * self.alpha + self.beta.iter().map(|b| b * b).sum::<f64>()) / (2.0 * coef_var);

        let rho2 = self.rho * self.rho;
        let sigma2 = self.sigma * self.sigma;
        let mut init_ss = 0.0;
        let mut step_ss = 0.0;
        for node in self.z.chunks_exact(ns * k) {
            init_ss += node[..k].iter().map(|v| v * v).sum::<f64>();
            step_ss += node[k..].iter().zip(node).map(|(cur, prev)| (cur - prev).powi(2)).sum::<f64>();
        }
        let n_init = (n * k) as f64;
        let n_step = (n * (ns - 1) * k) as f64;
        lp += -0.5 * n_init * (2.0 * PI * rho2).ln() - init_ss / (2.0 * rho2);
        if ns > 1 {
            lp += -0.5 * n_step * (2.0 * PI * sigma2).ln() - step_ss / (2.0 * sigma2);
        }

        let mut log_jac = 0.0;
        if let RhoSigmaMode::Gamma(h) = self.mode {
            lp += gamma_log_pdf(self.rho, h.rho_shape, h.rho_rate);
            log_jac += self.rho.ln();
            if ns > 1 {
                lp += gamma_log_pdf(self.sigma, h.sigma_shape, h.sigma_rate);
                log_jac += self.sigma.ln();
            }
        }

        if let Some(g) = grad {
            g[ParamLayout::ALPHA] -= self.alpha / coef_var;
            for (gb, b) in g[layout.beta()].iter_mut().zip(self.beta) {
                *gb -= b / coef_var;
            }
            let gz = &mut g[layout.latents()];
            let inv_rho2 = 1.0 / rho2;
            let inv_sigma2 = 1.0 / sigma2;
            for (gnode, node) in gz.chunks_exact_mut(ns * k).zip(self.z.chunks_exact(ns * k)) {
                for (g, v) in gnode[..k].iter_mut().zip(node) {
                    *g -= v * inv_rho2;
                }
                // Coordinate c (c >= k) is pulled toward c - k and pushes it back.
                for c in k..ns * k {
                    let diff = (node[c] - node[c - k]) * inv_sigma2;
                    gnode[c] -= diff;
                    gnode[c - k] += diff;
                }
            }
            if let RhoSigmaMode::Gamma(h) = self.mode {
                if let Some(idx) = layout.log_rho() {
                    g[idx] += -n_init + init_ss / rho2 + h.rho_shape - h.rho_rate * self.rho;
                }
                if let Some(idx) = layout.log_sigma() {
                    g[idx] += -n_step + step_ss / sigma2 + h.sigma_shape - h.sigma_rate * self.sigma;
                }
            }
        }
        (lp, log_jac)
    }
}

/// Log posterior of the model as a [`LogDensity`] over the free coordinates
/// described by [`Posterior::layout`].
#[derive(Debug, Clone)]
pub struct Posterior {
    spec: ModelSpec,
    layout: ParamLayout,
    n_times: usize,
    /// `y[i * T + t]`
    y: Vec<f64>,
    /// `log(y + 1)`, same layout.
    x: Vec<f64>,
    log_factorial_sum: f64,
}

/// The two halves of an unnormalized log posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorParts {
    pub log_likelihood: f64,
    pub log_prior: f64,
    pub log_jacobian: f64,
}

impl PosteriorParts {
    pub fn log_posterior(&self) -> f64 {
        self.log_likelihood + self.log_prior
    }
}

impl Posterior {
    pub fn new(panel: &CountPanel, spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let (n, t) = (panel.n_series(), panel.n_times());
        let y: Vec<f64> = (0..n).flat_map(|i| panel.series(i).iter().map(|&c| c as f64)).collect();
        let x = y.iter().map(|v| v.ln_1p()).collect();
        let log_factorial_sum =
            (0..n).flat_map(|i| panel.series(i)[1..].iter()).map(|&c| libm::lgamma(c as f64 + 1.0)).sum();
        Ok(Self { spec, layout: ParamLayout::for_spec(&spec, n, t), n_times: t, y, x, log_factorial_sum })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    fn check(&self, theta: &[f64]) {
        assert_eq!(theta.len(), self.layout.len(), "parameter vector has the wrong length");
    }

    fn scales(&self, theta: &[f64]) -> (f64, f64) {
        (
            self.layout.log_rho().map_or(self.spec.rho, |i| theta[i].exp()),
            self.layout.log_sigma().map_or(self.spec.sigma, |i| theta[i].exp()),
        )
    }

    fn prior_eval<'a>(&self, theta: &'a [f64]) -> PriorEval<'a> {
        let (rho, sigma) = self.scales(theta);
        PriorEval {
            alpha: theta[ParamLayout::ALPHA],
            beta: &theta[self.layout.beta()],
            z: &theta[self.layout.latents()],
            rho,
            sigma,
            mode: self.spec.rho_sigma_mode,
        }
    }

    pub fn parts(&self, theta: &[f64]) -> PosteriorParts {
        self.check(theta);
        let (log_prior, log_jacobian) = self.prior_eval(theta).eval(&self.layout, None);
        PosteriorParts { log_likelihood: self.likelihood(theta, None, None), log_prior, log_jacobian }
    }

    /// Log-likelihood contribution of each panel column `t = 1..T` (0-based).
    pub fn log_likelihood_by_time(&self, theta: &[f64]) -> Vec<f64> {
        self.check(theta);
        let mut terms = vec![0.0; self.n_times - 1];
        self.likelihood(theta, None, Some(&mut terms));
        terms
    }

    /// Writes `log lambda[i][t-1]` for `t = 1..T` into an `N * (T-1)` buffer.
    pub fn log_intensity(&self, theta: &[f64]) -> Vec<f64> {
        self.check(theta);
        let (n, tn) = (self.layout.n_nodes, self.n_times);
        let mut out = vec![0.0; n * (tn - 1)];
        let mut w = vec![0.0; n * n];
        let z = &theta[self.layout.latents()];
        for t in 1..tn {
            let s = self.slice_for(t);
            self.fill_weights(z, s, &mut w);
            for i in 0..n {
                out[i * (tn - 1) + t - 1] = self.eta(theta, &w, i, t);
            }
        }
        out
    }

    fn slice_for(&self, t: usize) -> usize {
        if self.layout.n_slices == 1 {
            0
        } else {
            t - 1
        }
    }

    fn fill_weights(&self, z: &[f64], s: usize, w: &mut [f64]) {
        self.fill_pairs(z, s, w, None);
    }

    /// Weights at slice `s`; with `cache`, also stores each pair's distance
    /// and weight derivative (upper triangle) for the gradient pass.
    fn fill_pairs(&self, z: &[f64], s: usize, w: &mut [f64], mut cache: Option<(&mut [f64], &mut [f64])>) {
        let (n, ns, k) = (self.layout.n_nodes, self.layout.n_slices, self.layout.dim);
        for i in 0..n {
            w[i * n + i] = 0.0;
            let zi = &z[(i * ns + s) * k..(i * ns + s + 1) * k];
            for j in i + 1..n {
                let zj = &z[(j * ns + s) * k..(j * ns + s + 1) * k];
                let d = zi.iter().zip(zj).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                // Shares one exponential between the weight and its derivative.
                let e = (-d).exp();
                let g = 2.0 * e / (1.0 + e);
                w[i * n + j] = g;
                w[j * n + i] = g;
                if let Some((dist, dw)) = cache.as_mut() {
                    dist[i * n + j] = d;
                    dw[i * n + j] = -g / (1.0 + e);
                }
            }
        }
    }

    #[inline]
    fn eta(&self, theta: &[f64], w: &[f64], i: usize, t: usize) -> f64 {
        let (n, tn) = (self.layout.n_nodes, self.n_times);
        let beta = &theta[self.layout.beta()];
        let mut eta = theta[ParamLayout::ALPHA] + beta[i] * self.x[i * tn + t - 1];
        for j in 0..n {
            if j != i {
                eta += w[i * n + j] * self.x[j * tn + t - 1];
            }
        }
        eta
    }

    /// Poisson log-likelihood over `t = 1..T`; optionally accumulates the
    /// likelihood gradient into `grad` and per-time terms into `terms`.
    fn likelihood(&self, theta: &[f64], mut grad: Option<&mut [f64]>, mut terms: Option<&mut [f64]>) -> f64 {
        let (n, tn) = (self.layout.n_nodes, self.n_times);
        let is_static = self.layout.n_slices == 1;
        let z = &theta[self.layout.latents()];
        let mut w = vec![0.0; n * n];
        // d loglik / d gamma_ij, accumulated over the times that use a slice.
        let mut coef = vec![0.0; n * n];
        let mut dist = vec![0.0; n * n];
        let mut dw = vec![0.0; n * n];
        let want_grad = grad.is_some();
        let mut total = 0.0;
        if is_static {
            self.fill_pairs(z, 0, &mut w, want_grad.then_some((&mut dist[..], &mut dw[..])));
        }
        for t in 1..tn {
            let s = self.slice_for(t);
            if !is_static {
                self.fill_pairs(z, s, &mut w, want_grad.then_some((&mut dist[..], &mut dw[..])));
            }
            let mut step = 0.0;
            for i in 0..n {
                let eta = self.eta(theta, &w, i, t);
                let lambda = eta.exp();
                let y = self.y[i * tn + t];
                step += y * eta - lambda;
                if let Some(g) = grad.as_deref_mut() {
                    let r = y - lambda;
                    g[ParamLayout::ALPHA] += r;
                    g[1 + i] += r * self.x[i * tn + t - 1];
                    for j in 0..n {
                        if j != i {
                            coef[i * n + j] += r * self.x[j * tn + t - 1];
                        }
                    }
                }
            }
            if let Some(ts) = terms.as_deref_mut() {
                ts[t - 1] = step - (0..n).map(|i| libm::lgamma(self.y[i * tn + t] + 1.0)).sum::<f64>();
            }
            total += step;
            if !is_static {
                if let Some(g) = grad.as_deref_mut() {
                    self.push_pair_gradient(z, s, &mut coef, &dist, &dw, &mut g[self.layout.latents()]);
                }
            }
        }
        if is_static {
            if let Some(g) = grad {
                self.push_pair_gradient(z, 0, &mut coef, &dist, &dw, &mut g[self.layout.latents()]);
            }
        }
        total - self.log_factorial_sum
    }

    /// Chain rule from `d loglik / d gamma_ij` at slice `s` to the positions,
    /// using the distances and weight derivatives cached by `fill_pairs`;
    /// resets `coef`.
    fn push_pair_gradient(&self, z: &[f64], s: usize, coef: &mut [f64], dist: &[f64], dw: &[f64], gz: &mut [f64]) {
        let (n, ns, k) = (self.layout.n_nodes, self.layout.n_slices, self.layout.dim);
        for i in 0..n {
            let oi = (i * ns + s) * k;
            for j in i + 1..n {
                let oj = (j * ns + s) * k;
                let c = coef[i * n + j] + coef[j * n + i];
                coef[i * n + j] = 0.0;
                coef[j * n + i] = 0.0;
                let d = dist[i * n + j];
                // The distance is not differentiable at zero; use the zero subgradient.
                if d == 0.0 || c == 0.0 {
                    continue;
                }
                let scale = dw[i * n + j] * c / d;
                // Split so both position blocks can be borrowed at once (oi < oj).
                let (head, tail) = gz.split_at_mut(oj);
                let (gi, gj) = (&mut head[oi..oi + k], &mut tail[..k]);
                for (((gi, gj), a), b) in gi.iter_mut().zip(gj.iter_mut()).zip(&z[oi..oi + k]).zip(&z[oj..oj + k]) {
                    let diff = scale * (a - b);
                    *gi += diff;
                    *gj -= diff;
                }
            }
        }
    }
}

impl LogDensity for Posterior {
    fn dim(&self) -> usize {
        self.layout.len()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let p = self.parts(theta);
        p.log_posterior() + p.log_jacobian
    }

    fn log_density_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        self.check(theta);
        grad.fill(0.0);
        let ll = self.likelihood(theta, Some(grad), None);
        let (lp, lj) = self.prior_eval(theta).eval(&self.layout, Some(grad));
        ll + lp + lj
    }
}
