//! Simulates the single-node-migration design, fits it and prints the
//! posterior-mean risk series.
//!
//! `cargo run --release -p dtslpm --example quickstart`

use dtslpm::inference::{hmc_sample, map_estimate, HmcConfig, Init, MapConfig};
use dtslpm::model::ModelSpec;
use dtslpm::postprocess::{align_all, summarize};
use dtslpm::simulator::{make_experiment_trajectories, simulate_counts, ExperimentDesign, ExperimentId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dtslpm::Result<()> {
    let id = ExperimentId::SingleNodeMigration;
    let z = make_experiment_trajectories(&ExperimentDesign::new(id))?;
    let panel = simulate_counts(&id.reference_params(), &z, &[0; 4], 200, &mut ChaCha8Rng::seed_from_u64(1))?;

    let spec = ModelSpec::default();
    let map = map_estimate(&panel, &spec, &Init::Default, &MapConfig::default())?;
    println!("MAP: alpha {:.3}, beta {:.3?}, converged {}", map.alpha, map.beta, map.converged);

    let cfg = HmcConfig { n_iterations: 2000, burn_in: 1000, seed: 7, ..Default::default() };
    let draws = hmc_sample(&panel, &spec, &cfg, &Init::Default)?;
    let summary = summarize(&align_all(&draws, &map)?)?;
    for p in &summary.parameters {
        println!("{:>8} {:7.3} [{:7.3}, {:7.3}]", p.name, p.interval.mean, p.interval.lower, p.interval.upper);
    }
    let risk = summary.risk.means();
    println!("S_t: first {:.3}, middle {:.3}, last {:.3}", risk[0], risk[risk.len() / 2], risk[risk.len() - 1]);
    Ok(())
}
