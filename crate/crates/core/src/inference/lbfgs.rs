//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! Works on the negated log density, so "maximize" below means minimizing
//! `f = -log p`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::density::LogDensity;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    /// Number of stored `(s, y)` correction pairs.
    pub memory: usize,
    /// Stop once the gradient 2-norm falls to this value.
    pub grad_tol: f64,
    pub max_iterations: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { memory: 10, grad_tol: 1e-6, max_iterations: 5000, c1: 1e-4, c2: 0.9, max_line_search: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LbfgsStatus {
    GradientTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    /// Log density at `x`.
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub status: LbfgsStatus,
}

impl LbfgsResult {
    pub fn converged(&self) -> bool {
        self.status == LbfgsStatus::GradientTolerance
    }
}

/// Relative size of objective changes treated as rounding noise.
const NOISE_REL: f64 = 1e-12;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Objective wrapper evaluating `f = -log p` and its gradient.
struct Negated<'a, D: LogDensity + ?Sized> {
    target: &'a D,
    evals: usize,
}

impl<D: LogDensity + ?Sized> Negated<'_, D> {
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> f64 {
        self.evals += 1;
        let lp = self.target.log_density_and_gradient(x, g);
        g.iter_mut().for_each(|v| *v = -*v);
        let f = -lp;
        if f.is_nan() || g.iter().any(|v| !v.is_finite()) {
            f64::INFINITY
        } else {
            f
        }
    }
}

struct Trial {
    step: f64,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

fn cubic_min(a: (f64, f64, f64), b: (f64, f64, f64)) -> Option<f64> {
    let (xa, fa, ga) = a;
    let (xb, fb, gb) = b;
    let d1 = ga + gb - 3.0 * (fa - fb) / (xa - xb);
    let disc = d1 * d1 - ga * gb;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (xb - xa).signum() * disc.sqrt();
    let x = xb - (xb - xa) * (gb + d2 - d1) / (gb - ga + 2.0 * d2);
    x.is_finite().then_some(x)
}

/// One line-search problem: `phi(step) = f(x + step * dir)`.
struct Line<'a, 'b, D: LogDensity + ?Sized> {
    obj: &'a mut Negated<'b, D>,
    x: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    slope0: f64,
    cfg: &'a LbfgsConfig,
    buf: Vec<f64>,
}

impl<D: LogDensity + ?Sized> Line<'_, '_, D> {
    fn eval(&mut self, step: f64) -> Trial {
        for ((t, xi), di) in self.buf.iter_mut().zip(self.x).zip(self.dir) {
            *t = xi + step * di;
        }
        let mut g = vec![0.0; self.x.len()];
        let f = self.obj.eval(&self.buf, &mut g);
        let slope = dot(&g, self.dir);
        Trial { step, f, g, slope }
    }

    fn armijo(&self, t: &Trial) -> bool {
        t.f <= self.f0 + self.cfg.c1 * t.step * self.slope0
    }

    /// Near an optimum the change in `f` drops below rounding noise; such
    /// points are judged by their slope alone (approximate Wolfe conditions).
    fn within_noise(&self, t: &Trial) -> bool {
        (t.f - self.f0).abs() <= NOISE_REL * self.f0.abs().max(1.0)
    }

    fn acceptable(&self, t: &Trial) -> bool {
        (self.armijo(t) || self.within_noise(t)) && self.curvature(t)
    }

    fn curvature(&self, t: &Trial) -> bool {
        t.slope.abs() <= -self.cfg.c2 * self.slope0
    }

    fn zoom(&mut self, mut lo: Trial, mut hi: Trial) -> Option<Trial> {
        for _ in 0..self.cfg.max_line_search {
            let (a, b) = (lo.step.min(hi.step), lo.step.max(hi.step));
            let width = b - a;
            if width <= f64::EPSILON * b.max(1.0) {
                break;
            }
            let guess =
                if hi.f.is_finite() { cubic_min((lo.step, lo.f, lo.slope), (hi.step, hi.f, hi.slope)) } else { None };
            let step = match guess {
                Some(s) if s > a + 0.1 * width && s < b - 0.1 * width => s,
                _ => 0.5 * (a + b),
            };
            let t = self.eval(step);
            if self.acceptable(&t) {
                return Some(t);
            }
            if self.within_noise(&t) && t.f.is_finite() {
                if t.slope * (hi.step - lo.step) >= 0.0 {
                    hi = t;
                } else {
                    lo = t;
                }
            } else if !self.armijo(&t) || t.f >= lo.f {
                hi = t;
            } else {
                if t.slope * (hi.step - lo.step) >= 0.0 {
                    hi = lo;
                }
                lo = t;
            }
        }
        // Fall back to the best sufficient-decrease point found, if any.
        (lo.step > 0.0 && (lo.f < self.f0 || (self.within_noise(&lo) && lo.slope < 0.0))).then_some(lo)
    }

    /// Strong-Wolfe search (Nocedal & Wright, Alg. 3.5/3.6).
    fn search(&mut self, initial: f64) -> Option<Trial> {
        let mut prev = Trial { step: 0.0, f: self.f0, g: Vec::new(), slope: self.slope0 };
        let mut step = initial;
        for i in 0..self.cfg.max_line_search {
            let t = self.eval(step);
            if !t.f.is_finite() {
                // Overshot into an overflow region; shrink without moving `prev`.
                step = prev.step + 0.1 * (step - prev.step);
                continue;
            }
            if self.acceptable(&t) {
                return Some(t);
            }
            if !self.within_noise(&t) && (!self.armijo(&t) || (i > 0 && t.f >= prev.f)) {
                return self.zoom(prev, t);
            }
            if t.slope >= 0.0 {
                return self.zoom(t, prev);
            }
            step *= 2.0;
            prev = t;
        }
        None
    }
}

/// Maximizes `target` from `x0`.
pub fn maximize<D: LogDensity + ?Sized>(target: &D, x0: &[f64], cfg: &LbfgsConfig) -> Result<LbfgsResult> {
    if x0.len() != target.dim() {
        return Err(Error::Shape(format!("start has {} coordinates, target {}", x0.len(), target.dim())));
    }
    let mut obj = Negated { target, evals: 0 };
    let mut x = x0.to_vec();
    let mut g = vec![0.0; x.len()];
    let mut f = obj.eval(&x, &mut g);
    if !f.is_finite() {
        return Err(Error::NonFiniteStart);
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut dir = vec![0.0; x.len()];
    let mut alpha = vec![0.0; cfg.memory];
    let mut status = LbfgsStatus::MaxIterations;
    let mut iterations = 0;
    let mut retried = false;

    while iterations < cfg.max_iterations {
        if norm(&g) <= cfg.grad_tol {
            status = LbfgsStatus::GradientTolerance;
            break;
        }
        // Two-loop recursion: dir = -H g.
        dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
        for (k, (s, y, rho)) in history.iter().enumerate().rev() {
            alpha[k] = rho * dot(s, &dir);
            dir.iter_mut().zip(y).for_each(|(d, yi)| *d -= alpha[k] * yi);
        }
        let gamma = history.back().map_or(1.0, |(s, y, _)| dot(s, y) / dot(y, y));
        dir.iter_mut().for_each(|d| *d *= gamma);
        for (k, (s, y, rho)) in history.iter().enumerate() {
            let beta = rho * dot(y, &dir);
            dir.iter_mut().zip(s).for_each(|(d, si)| *d += (alpha[k] - beta) * si);
        }
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
            slope = dot(&g, &dir);
        }
        let initial = if history.is_empty() { (1.0 / norm(&g)).min(1.0) } else { 1.0 };

        let mut line = Line { obj: &mut obj, x: &x, dir: &dir, f0: f, slope0: slope, cfg, buf: vec![0.0; x.len()] };
        match line.search(initial) {
            Some(trial) => {
                let s: Vec<f64> = dir.iter().map(|d| trial.step * d).collect();
                let y: Vec<f64> = trial.g.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
                f = trial.f;
                g = trial.g;
                if sy > 1e-12 * norm(&s) * norm(&y) {
                    if history.len() == cfg.memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                retried = false;
                iterations += 1;
            }
            None if !retried && !history.is_empty() => {
                history.clear();
                retried = true;
            }
            None => {
                status = LbfgsStatus::LineSearchFailed;
                break;
            }
        }
    }
    if status == LbfgsStatus::MaxIterations && norm(&g) <= cfg.grad_tol {
        status = LbfgsStatus::GradientTolerance;
    }
    log::debug!("l-bfgs: {iterations} iterations, {} evaluations, {status:?}", obj.evals);
    Ok(LbfgsResult { grad_norm: norm(&g), value: -f, x, iterations, status })
}
