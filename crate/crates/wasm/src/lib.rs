//! Browser bindings for the interactive demo in `www/`.
//!
//! Every entry point returns a JSON string; the page parses it and draws.

use dtslpm::inference::{map_estimate, Init, MapConfig};
use dtslpm::model::{interaction_matrix, interaction_matrix_at, CountPanel, ModelSpec};
use dtslpm::simulator::{make_experiment_trajectories, simulate_counts, ExperimentDesign, ExperimentId};
use dtslpm::stability::{check_stability, spectral_radius};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn to_js(result: Result<Value, String>) -> Result<String, JsError> {
    result.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

fn msg(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Simulates one of the three reference designs (`"1"`, `"2"` or `"3"`).
///
/// Returns `{positions: [t][i][x, y], pairs: [[i, j]], gamma: [pair][t],
/// radius: [t], counts: [i][t]}`.
#[wasm_bindgen]
pub fn simulate_experiment(design: &str, n_times: usize, seed: u64) -> Result<String, JsError> {
    to_js(experiment(design, n_times, seed))
}

fn experiment(design: &str, n_times: usize, seed: u64) -> Result<Value, String> {
    let id: ExperimentId = design.parse().map_err(msg)?;
    let z = make_experiment_trajectories(&ExperimentDesign::with_times(id, n_times)).map_err(msg)?;
    let params = id.reference_params();
    let n = z.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let panel = simulate_counts(&params, &z, &vec![0; n], n_times, &mut rng).map_err(msg)?;

    let positions: Vec<Vec<&[f64]>> = (0..n_times).map(|t| (0..n).map(|i| z.position(i, t)).collect()).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let mut gamma = vec![Vec::with_capacity(n_times); pairs.len()];
    let mut radius = Vec::with_capacity(n_times);
    for t in 0..n_times {
        let g = interaction_matrix_at(&params, &z, t).map_err(msg)?;
        for (p, &(i, j)) in pairs.iter().enumerate() {
            gamma[p].push(g.get(i, j));
        }
        radius.push(spectral_radius(g.matrix()).map_err(msg)?);
    }
    let counts: Vec<&[u64]> = (0..n).map(|i| panel.series(i)).collect();
    Ok(json!({
        "alpha": params.alpha,
        "beta": params.beta,
        "positions": positions,
        "pairs": pairs,
        "gamma": gamma,
        "radius": radius,
        "counts": counts,
    }))
}

/// Stability report for nodes at `positions` (row-major `n x 2`) with
/// self-excitation `beta`.
#[wasm_bindgen]
pub fn stability(positions: &[f64], beta: &[f64]) -> Result<String, JsError> {
    to_js(stability_report(positions, beta))
}

fn stability_report(positions: &[f64], beta: &[f64]) -> Result<Value, String> {
    if positions.len() != 2 * beta.len() {
        return Err("need two coordinates per beta value".into());
    }
    let z = DMatrix::from_row_slice(beta.len(), 2, positions);
    let g = interaction_matrix(beta, &z).map_err(msg)?;
    let report = check_stability(g.matrix()).map_err(msg)?;
    let rows: Vec<Vec<f64>> = g.matrix().row_iter().map(|r| r.iter().copied().collect()).collect();
    Ok(json!({ "report": report, "gamma": rows }))
}

/// Static MAP fit of a count panel given series-major (`n_series` rows of
/// `counts.len() / n_series` time points).
#[wasm_bindgen]
pub fn fit_static(counts: &[u32], n_series: usize, seed: u64) -> Result<String, JsError> {
    to_js(static_fit(counts, n_series, seed))
}

fn static_fit(counts: &[u32], n_series: usize, seed: u64) -> Result<Value, String> {
    if n_series == 0 || !counts.len().is_multiple_of(n_series) {
        return Err("counts must hold the same number of time points per series".into());
    }
    let n_times = counts.len() / n_series;
    let series = counts.chunks(n_times).map(|c| c.iter().map(|&y| u64::from(y)).collect()).collect();
    let panel = CountPanel::from_series(series).map_err(msg)?;
    let cfg = MapConfig { seed, ..Default::default() };
    let est = map_estimate(&panel, &ModelSpec::static_model(), &Init::Default, &cfg).map_err(msg)?;
    let positions: Vec<&[f64]> = (0..n_series).map(|i| est.latents.position(i, 0)).collect();
    Ok(json!({
        "alpha": est.alpha,
        "beta": est.beta,
        "positions": positions,
        "log_posterior": est.log_posterior,
        "converged": est.converged,
        "iterations": est.iterations,
    }))
}
