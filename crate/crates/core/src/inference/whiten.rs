//! Random-walk whitening used to precondition dynamic MAP estimation.
//!
//! The random-walk prior makes the posterior over trajectories badly
//! conditioned: increments are stiff (`1 / sigma^2`) while whole-trajectory
//! moves are nearly free. Optimizing over scaled increments
//! `u_1 = z_1 / a`, `u_s = (z_s - z_{s-1}) / sigma` removes most of that
//! spread. The map is linear with a constant Jacobian, so maxima coincide.

use crate::density::LogDensity;
use crate::model::ParamLayout;

pub(crate) struct Whitened<'a, D: LogDensity + ?Sized> {
    pub target: &'a D,
    pub layout: ParamLayout,
    /// Scale of the first slice.
    pub initial: f64,
    /// Scale of each increment.
    pub step: f64,
}

impl<D: LogDensity + ?Sized> Whitened<'_, D> {
    fn track_offsets(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let l = self.layout;
        let start = l.latents().start;
        (0..l.n_nodes).flat_map(move |i| (0..l.dim).map(move |k| (start + i * l.n_slices * l.dim + k, l.dim)))
    }

    pub fn to_theta(&self, u: &[f64]) -> Vec<f64> {
        let mut theta = u.to_vec();
        for (first, stride) in self.track_offsets() {
            theta[first] = self.initial * u[first];
            for s in 1..self.layout.n_slices {
                let at = first + s * stride;
                theta[at] = theta[at - stride] + self.step * u[at];
            }
        }
        theta
    }

    pub fn whiten(&self, theta: &[f64]) -> Vec<f64> {
        let mut u = theta.to_vec();
        for (first, stride) in self.track_offsets() {
            u[first] = theta[first] / self.initial;
            for s in 1..self.layout.n_slices {
                let at = first + s * stride;
                u[at] = (theta[at] - theta[at - stride]) / self.step;
            }
        }
        u
    }

    /// Bound on `|J^{-T}|`: a gradient of norm `g` in whitened coordinates is
    /// at most `g * inverse_gain()` in the original ones.
    pub fn inverse_gain(&self) -> f64 {
        2.0 / self.initial.min(self.step).min(1.0)
    }
}

impl<D: LogDensity + ?Sized> LogDensity for Whitened<'_, D> {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn log_density(&self, u: &[f64]) -> f64 {
        self.target.log_density(&self.to_theta(u))
    }

    fn log_density_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let f = self.target.log_density_and_gradient(&self.to_theta(u), grad);
        // Chain rule: each u_s moves every later position, so the gradient is
        // a reverse cumulative sum of position gradients.
        for (first, stride) in self.track_offsets() {
            let mut acc = 0.0;
            for s in (0..self.layout.n_slices).rev() {
                let at = first + s * stride;
                acc += grad[at];
                grad[at] = acc * if s == 0 { self.initial } else { self.step };
            }
        }
        f
    }
}
