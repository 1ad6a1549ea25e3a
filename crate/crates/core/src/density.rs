/// A differentiable log density over an unconstrained real vector.
///
/// Both the optimizer and the sampler are written against this trait, so the
/// model posterior and the synthetic self-test targets share one code path.
pub trait LogDensity {
    fn dim(&self) -> usize;

    fn log_density(&self, theta: &[f64]) -> f64;

    /// Writes the gradient into `grad` and returns the log density.
    fn log_density_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64;
}

/// Isotropic Gaussian `N(mean, scale^2 I)`; used as a known-answer target.
#[derive(Debug, Clone)]
pub struct IsotropicGaussian {
    pub mean: Vec<f64>,
    pub scale: f64,
}

impl LogDensity for IsotropicGaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let prec = 1.0 / (self.scale * self.scale);
        -0.5 * prec * theta.iter().zip(&self.mean).map(|(x, m)| (x - m).powi(2)).sum::<f64>()
    }

    fn log_density_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let prec = 1.0 / (self.scale * self.scale);
        for ((g, x), m) in grad.iter_mut().zip(theta).zip(&self.mean) {
            *g = -prec * (x - m);
        }
        self.log_density(theta)
    }
}

/// Negative of a convex quadratic `0.5 (x - c)' A (x - c)` with diagonal `A`.
#[derive(Debug, Clone)]
pub struct DiagonalQuadratic {
    pub center: Vec<f64>,
    pub curvature: Vec<f64>,
}

impl LogDensity for DiagonalQuadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        -0.5 * theta.iter().zip(&self.center).zip(&self.curvature).map(|((x, c), a)| a * (x - c).powi(2)).sum::<f64>()
    }

    fn log_density_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        for (((g, x), c), a) in grad.iter_mut().zip(theta).zip(&self.center).zip(&self.curvature) {
            *g = -a * (x - c);
        }
        self.log_density(theta)
    }
}
