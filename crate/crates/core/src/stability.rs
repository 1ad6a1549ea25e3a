//! Sufficient stationarity condition on the interaction matrix.
//!
//! The literal condition is the chain
//! `-1 < min_i(g_ii - r_i) < |lambda_max| < max_i(g_ii + r_i) < 1`, with `r_i`
//! the off-diagonal absolute row sum. The chain is degenerate at its
//! boundaries (a diagonal matrix can never satisfy it strictly), so reports
//! also carry the practical criterion `|lambda_max| < 1`.

use nalgebra::{DMatrix, Schur, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{interaction_matrix_at, LatentTrajectories, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Spectral radius of the matrix.
    pub max_abs_eigenvalue: f64,
    /// `min_i(g_ii - r_i)`
    pub row_lower: f64,
    /// `max_i(g_ii + r_i)`
    pub row_upper: f64,
    /// Off-diagonal absolute row sums.
    pub r: Vec<f64>,
    /// The literal strict chain of inequalities.
    pub satisfied: bool,
    /// `max_abs_eigenvalue < 1`.
    pub relaxed_satisfied: bool,
}

pub fn row_sums_off_diagonal(gamma: &DMatrix<f64>) -> Result<Vec<f64>> {
    if !gamma.is_square() {
        return Err(Error::Shape(format!(
            "interaction matrix must be square, got {}x{}",
            gamma.nrows(),
            gamma.ncols()
        )));
    }
    Ok(gamma
        .row_iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v.abs()).sum())
        .collect())
}

/// Modulus of the largest eigenvalue of a general real square matrix.
pub fn spectral_radius(gamma: &DMatrix<f64>) -> Result<f64> {
    spectral_radius_slice(gamma, 0)
}

fn spectral_radius_slice(gamma: &DMatrix<f64>, slice: usize) -> Result<f64> {
    if !gamma.is_square() {
        return Err(Error::Shape("interaction matrix must be square".into()));
    }
    if gamma.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("interaction matrix must be finite".into()));
    }
    // Model interaction matrices are symmetric; the symmetric solver is both
    // faster and exact on small integer cases where Schur drifts by an ulp.
    if gamma == &gamma.transpose() {
        let eig =
            SymmetricEigen::try_new(gamma.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenNonConvergence { slice })?;
        return Ok(eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max));
    }
    let schur = Schur::try_new(gamma.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenNonConvergence { slice })?;
    Ok(schur.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max))
}

pub fn check_stability(gamma: &DMatrix<f64>) -> Result<StabilityReport> {
    check_stability_slice(gamma, 0)
}

/// As [`check_stability`], tagging solver failures with `slice`.
pub fn check_stability_slice(gamma: &DMatrix<f64>, slice: usize) -> Result<StabilityReport> {
    let r = row_sums_off_diagonal(gamma)?;
    let rho = spectral_radius_slice(gamma, slice)?;
    let diag = gamma.diagonal();
    let row_lower = diag.iter().zip(&r).map(|(g, r)| g - r).fold(f64::INFINITY, f64::min);
    let row_upper = diag.iter().zip(&r).map(|(g, r)| g + r).fold(f64::NEG_INFINITY, f64::max);
    Ok(StabilityReport {
        max_abs_eigenvalue: rho,
        row_lower,
        row_upper,
        satisfied: -1.0 < row_lower && row_lower < rho && rho < row_upper && row_upper < 1.0,
        relaxed_satisfied: rho < 1.0,
        r,
    })
}

/// Per-slice reports for a (possibly time-varying) interaction structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStability {
    pub slices: Vec<StabilityReport>,
    /// Literal chain holds at every slice.
    pub satisfied: bool,
    /// `|lambda_max| < 1` at every slice.
    pub relaxed_satisfied: bool,
    /// Slice with the largest spectral radius.
    pub worst_slice: usize,
}

pub fn check_trajectory_stability(params: &ModelParams, latents: &LatentTrajectories) -> Result<TrajectoryStability> {
    let slices = (0..latents.n_slices())
        .map(|s| {
            let m = interaction_matrix_at(params, latents, s)?;
            check_stability_slice(m.matrix(), s)
        })
        .collect::<Result<Vec<_>>>()?;
    let worst_slice = slices
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.max_abs_eigenvalue.total_cmp(&b.1.max_abs_eigenvalue))
        .map_or(0, |(s, _)| s);
    Ok(TrajectoryStability {
        satisfied: slices.iter().all(|r| r.satisfied),
        relaxed_satisfied: slices.iter().all(|r| r.relaxed_satisfied),
        worst_slice,
        slices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn row_sums() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(row_sums_off_diagonal(&id).unwrap(), vec![0.0; 3]);

        let m = DMatrix::from_row_slice(2, 2, &[0.1, 0.3, 0.3, 0.2]);
        assert_eq!(row_sums_off_diagonal(&m).unwrap(), vec![0.3, 0.3]);

        let m = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, -0.2, 0.1, 0.0, 0.0, -0.2, 0.0, 0.0]);
        assert_relative_eq!(row_sums_off_diagonal(&m).unwrap()[0], 0.3, max_relative = 1e-15);

        assert!(matches!(row_sums_off_diagonal(&DMatrix::zeros(2, 3)), Err(Error::Shape(_))));
    }

    #[test]
    fn diagonal_matrix_sits_on_the_chain_boundary() {
        let rep = check_stability(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, -0.3]))).unwrap();
        assert_relative_eq!(rep.max_abs_eigenvalue, 0.5, max_relative = 1e-14);
        assert_eq!(rep.row_lower, -0.3);
        assert_eq!(rep.row_upper, 0.5);
        assert!(!rep.satisfied);
        assert!(rep.relaxed_satisfied);
    }

    #[test]
    fn unit_swap_is_unstable() {
        let rep = check_stability(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_relative_eq!(rep.max_abs_eigenvalue, 1.0, max_relative = 1e-14);
        assert!(!rep.satisfied);
        assert!(!rep.relaxed_satisfied);
    }

    #[test]
    fn symmetric_two_by_two() {
        let rep = check_stability(&DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.1, 0.2])).unwrap();
        assert_relative_eq!(rep.max_abs_eigenvalue, 0.3, max_relative = 1e-14);
        assert_relative_eq!(rep.row_lower, 0.1, max_relative = 1e-14);
        assert_relative_eq!(rep.row_upper, 0.3, max_relative = 1e-14);
        assert!(!rep.satisfied);
        assert!(rep.relaxed_satisfied);
    }

    #[test]
    fn strict_chain_can_hold() {
        // Radius 0.4 + sqrt(0.05) ~ 0.624, row bounds (0.1, 0.7).
        let rep = check_stability(&DMatrix::from_row_slice(2, 2, &[0.3, 0.2, 0.2, 0.5])).unwrap();
        assert!(rep.satisfied, "{rep:?}");
    }

    #[test]
    fn complex_eigenvalues_use_modulus() {
        // Rotation by 90 degrees scaled by 0.5: eigenvalues +-0.5i.
        let rep = check_stability(&DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0])).unwrap();
        assert_relative_eq!(rep.max_abs_eigenvalue, 0.5, max_relative = 1e-14);
    }

    fn symmetric(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
            let m = DMatrix::from_vec(n, n, v);
            (&m + m.transpose()) * 0.5
        })
    }

    proptest! {
        #[test]
        fn gershgorin_bounds_symmetric(m in (2usize..7).prop_flat_map(symmetric)) {
            let rep = check_stability(&m).unwrap();
            let bound = m.diagonal().iter().zip(&rep.r).map(|(g, r)| g.abs() + r).fold(0.0, f64::max);
            prop_assert!(rep.max_abs_eigenvalue <= bound + 1e-12);
        }

        #[test]
        fn transpose_has_same_radius(v in prop::collection::vec(-1.0f64..1.0, 25)) {
            let m = DMatrix::from_vec(5, 5, v);
            let a = check_stability(&m).unwrap().max_abs_eigenvalue;
            let b = check_stability(&m.transpose()).unwrap().max_abs_eigenvalue;
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }
}
