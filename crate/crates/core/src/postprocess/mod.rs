//! Procrustes alignment, posterior summaries and convergence diagnostics.

pub mod diagnostics;
pub mod procrustes;
pub mod summary;

pub use diagnostics::{ess, ess_chains, rhat};
pub use procrustes::{align_all, align_to, procrustes_align, procrustes_fit, AlignedDraws, RigidTransform};
pub use summary::{
    distance_ratio_diagnostic, empirical_variance, interaction_summary, median, quantile_sorted, summarize,
    variance_series, DistanceRatios, InteractionSummary, Interval, LatentSummary, ParameterSummary, RiskSeries,
    Summary,
};
