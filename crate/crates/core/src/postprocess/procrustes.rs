use nalgebra::{DMatrix, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{ChainStats, Draw, MapEstimate, PosteriorDraws};
use crate::model::{LatentTrajectories, ModelSpec};

/// `x -> (x - from) * rotation + to`, applied row-wise to stacked positions.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    pub rotation: DMatrix<f64>,
    pub from: RowDVector<f64>,
    pub to: RowDVector<f64>,
    /// The reference had no spread, so the identity was used.
    pub degenerate: bool,
}

impl RigidTransform {
    pub fn identity(dim: usize) -> Self {
        Self {
            rotation: DMatrix::identity(dim, dim),
            from: RowDVector::zeros(dim),
            to: RowDVector::zeros(dim),
            degenerate: false,
        }
    }

    pub fn apply(&self, stacked: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = stacked.clone();
        for mut row in out.row_iter_mut() {
            let moved = (&row - &self.from) * &self.rotation + &self.to;
            row.copy_from(&moved);
        }
        out
    }
}

fn centroid(m: &DMatrix<f64>) -> RowDVector<f64> {
    m.row_mean()
}

fn centered(m: &DMatrix<f64>, c: &RowDVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        row -= c;
    }
    out
}

/// Rigid motion (rotation/reflection plus translation, no scaling) taking
/// `draw` closest to `reference` in squared error over all stacked positions.
pub fn procrustes_fit(draw: &LatentTrajectories, reference: &LatentTrajectories) -> Result<RigidTransform> {
    if (draw.n_nodes(), draw.n_slices(), draw.dim()) != (reference.n_nodes(), reference.n_slices(), reference.dim()) {
        return Err(Error::Shape(format!(
            "draw is {}x{}x{}, reference {}x{}x{}",
            draw.n_nodes(),
            draw.n_slices(),
            draw.dim(),
            reference.n_nodes(),
            reference.n_slices(),
            reference.dim()
        )));
    }
    let (x, y) = (draw.stacked(), reference.stacked());
    let (cx, cy) = (centroid(&x), centroid(&y));
    let yc = centered(&y, &cy);
    let scale = yc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale <= f64::EPSILON * cy.iter().fold(1.0f64, |m, v| m.max(v.abs())) {
        return Ok(RigidTransform { degenerate: true, ..RigidTransform::identity(draw.dim()) });
    }
    let xc = centered(&x, &cx);
    let svd = (xc.transpose() * yc).svd(true, true);
    let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested V^T"));
    Ok(RigidTransform { rotation: u * v_t, from: cx, to: cy, degenerate: false })
}

/// Aligns one latent configuration to a reference. A reference with all
/// points coincident leaves the draw unchanged and logs a warning.
pub fn procrustes_align(draw: &LatentTrajectories, reference: &LatentTrajectories) -> Result<LatentTrajectories> {
    let tf = procrustes_fit(draw, reference)?;
    if tf.degenerate {
        log::warn!("procrustes reference has no spread; draw left unaligned");
    }
    LatentTrajectories::from_stacked(&tf.apply(&draw.stacked()), draw.n_nodes())
}

/// Posterior draws with every latent configuration aligned to a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedDraws {
    pub spec: ModelSpec,
    pub n_times: usize,
    pub draws: Vec<Draw>,
    pub chains: Vec<ChainStats>,
    pub reference: LatentTrajectories,
    pub warnings: Vec<String>,
}

impl AlignedDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn n_chains(&self) -> usize {
        self.draws.iter().map(|d| d.chain + 1).max().unwrap_or(0)
    }
}

/// Aligns every draw to the MAP latent positions, preserving order.
pub fn align_all(draws: &PosteriorDraws, map: &MapEstimate) -> Result<AlignedDraws> {
    align_to(draws, &map.latents)
}

/// Aligns every draw to an arbitrary reference configuration.
pub fn align_to(draws: &PosteriorDraws, reference: &LatentTrajectories) -> Result<AlignedDraws> {
    let one = |d: &Draw| -> Result<(Draw, bool)> {
        let tf = procrustes_fit(&d.latents, reference)?;
        let latents = LatentTrajectories::from_stacked(&tf.apply(&d.latents.stacked()), d.latents.n_nodes())?;
        Ok((Draw { latents, ..d.clone() }, tf.degenerate))
    };
    #[cfg(feature = "parallel")]
    let aligned: Vec<Result<(Draw, bool)>> = {
        use rayon::prelude::*;
        draws.draws.par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let aligned: Vec<Result<(Draw, bool)>> = draws.draws.iter().map(one).collect();

    let mut out = Vec::with_capacity(aligned.len());
    let mut degenerate = false;
    for a in aligned {
        let (d, deg) = a?;
        degenerate |= deg;
        out.push(d);
    }
    let mut warnings = draws.warnings.clone();
    if degenerate {
        let msg = "alignment reference has no spread; draws were left unaligned".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(AlignedDraws {
        spec: draws.spec,
        n_times: draws.n_times,
        draws: out,
        chains: draws.chains.clone(),
        reference: reference.clone(),
        warnings,
    })
}
