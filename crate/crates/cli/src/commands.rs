//! The five subcommands. Each reads its inputs from the output directory (or
//! the configured count file), writes its artifacts there and finishes with a
//! manifest.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use dtslpm::inference::{
    hmc_sample_streaming, map_estimate, ChainStats, Draw, HmcConfig, Init, MapEstimate, PosteriorDraws,
};
use dtslpm::model::{CountPanel, LatentMode, LatentTrajectories, ModelParams, ModelSpec};
use dtslpm::postprocess::{align_all, ess_chains, rhat, summarize as summarize_draws, Interval, Summary};
use dtslpm::simulator::{
    make_experiment_trajectories, simulate_counts, simulate_static_replicate, ClusterConfig, ExperimentDesign,
    ExperimentId,
};
use dtslpm::stability::{check_trajectory_stability, TrajectoryStability};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifacts::{read_json, Outputs, Provenance};
use crate::config::RunConfig;
use crate::io::{load_counts, write_counts};

pub const COUNTS_FILE: &str = "counts.csv";
pub const TRUTH_FILE: &str = "truth.json";
pub const MAP_FILE: &str = "map.json";
pub const HMC_FILE: &str = "hmc.json";

pub fn chain_file(chain: usize) -> String {
    format!("draws/chain-{chain}.jsonl")
}

/// Generating truth written next to a simulated panel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Truth {
    pub design: String,
    pub params: ModelParams,
    pub latents: LatentTrajectories,
    /// Static design only: parameter redraws and expansion steps used.
    pub redraws: Option<usize>,
    pub expansions: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapArtifact {
    pub series_labels: Vec<String>,
    pub time_labels: Vec<String>,
    pub estimate: MapEstimate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HmcArtifact {
    pub spec: ModelSpec,
    pub sampler: HmcConfig,
    pub n_times: usize,
    pub series_labels: Vec<String>,
    pub time_labels: Vec<String>,
    pub chains: Vec<ChainStats>,
    pub warnings: Vec<String>,
}

/// First line of every chain file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChainHeader {
    #[serde(flatten)]
    provenance: Provenance,
    chain: usize,
}

fn counts_path(cfg: &RunConfig) -> Result<PathBuf> {
    if let Some(p) = &cfg.data.counts {
        return Ok(p.clone());
    }
    let p = cfg.output_dir.join(COUNTS_FILE);
    if !p.exists() {
        bail!(
            "no count data: {} not found; run `dtslpm simulate` first with the same --output-dir, \
             or pass --counts / set data.counts",
            p.display()
        );
    }
    Ok(p)
}

fn load_panel(cfg: &RunConfig, out: &mut Outputs) -> Result<CountPanel> {
    let path = counts_path(cfg)?;
    let panel = load_counts(&path)?;
    out.read(&path);
    Ok(panel)
}

pub fn simulate(cfg: &RunConfig) -> Result<Vec<String>> {
    let mut out = Outputs::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let s = &cfg.simulate;
    let (truth, panel) = if s.design == "static" {
        let rep = simulate_static_replicate(&ClusterConfig::standard(s.n_nodes), s.n_times, &mut rng)?;
        let truth = Truth {
            design: s.design.clone(),
            params: rep.params,
            latents: rep.latents,
            redraws: Some(rep.redraws),
            expansions: Some(rep.expansions),
        };
        (truth, rep.panel)
    } else {
        let id: ExperimentId = s.design.parse()?;
        let latents = make_experiment_trajectories(&ExperimentDesign::with_times(id, s.n_times))?;
        let params = id.reference_params();
        let panel = simulate_counts(&params, &latents, &vec![0; latents.n_nodes()], s.n_times, &mut rng)?;
        (Truth { design: s.design.clone(), params, latents, redraws: None, expansions: None }, panel)
    };
    let path = out.create(COUNTS_FILE)?;
    write_counts(&path, &panel, Some("time"), &[out.provenance().comment()])?;
    out.write_json(TRUTH_FILE, &truth)?;
    out.finish("simulate", cfg, vec![])?;
    Ok(vec![])
}

pub fn fit_map(cfg: &RunConfig) -> Result<Vec<String>> {
    let mut out = Outputs::new(cfg)?;
    let panel = load_panel(cfg, &mut out)?;
    let estimate = map_estimate(&panel, &cfg.model_spec(), &Init::Default, &cfg.map_config())?;
    let mut warnings = Vec::new();
    if !estimate.converged {
        let mut msg = format!(
            "MAP optimizer stopped with {:?} at gradient norm {:.3e}; using the best point found",
            estimate.status, estimate.grad_norm
        );
        if let Some((i, j, s)) = coincident_pair(&estimate.latents) {
            msg.push_str(&format!(
                " (series {:?} and {:?} coincide at slice {s}; the log posterior has a kink there, \
                 so its gradient cannot vanish)",
                panel.series_labels()[i],
                panel.series_labels()[j]
            ));
        }
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let artifact = MapArtifact {
        series_labels: panel.series_labels().to_vec(),
        time_labels: panel.time_labels().to_vec(),
        estimate,
    };
    out.write_json(MAP_FILE, &artifact)?;
    out.finish("fit-map", cfg, warnings.clone())?;
    Ok(warnings)
}

/// First pair of nodes sharing a position, where distance is not differentiable.
fn coincident_pair(z: &LatentTrajectories) -> Option<(usize, usize, usize)> {
    const TOL: f64 = 1e-8;
    (0..z.n_slices()).find_map(|s| {
        (0..z.n_nodes()).find_map(|i| {
            (i + 1..z.n_nodes())
                .find(|&j| z.position(i, s).iter().zip(z.position(j, s)).all(|(a, b)| (a - b).abs() < TOL))
                .map(|j| (i, j, s))
        })
    })
}

pub fn fit_hmc(cfg: &RunConfig) -> Result<Vec<String>> {
    let mut out = Outputs::new(cfg)?;
    let panel = load_panel(cfg, &mut out)?;
    let spec = cfg.model_spec();
    let sampler = cfg.hmc_config();
    let mut writers = Vec::with_capacity(sampler.n_chains);
    for chain in 0..sampler.n_chains {
        let path = out.create(&chain_file(chain))?;
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        serde_json::to_writer(&mut w, &ChainHeader { provenance: out.provenance().clone(), chain })?;
        w.write_all(b"\n")?;
        writers.push(Mutex::new(Some(w)));
    }
    let draws = hmc_sample_streaming(&panel, &spec, &sampler, &Init::Default, |chain| {
        let mut w = writers[chain].lock().expect("writer lock").take().expect("one sink per chain");
        move |d: &Draw| -> dtslpm::Result<()> {
            let sink_err = |e: std::io::Error| dtslpm::Error::Sink(e.to_string());
            serde_json::to_writer(&mut w, d).map_err(|e| dtslpm::Error::Sink(e.to_string()))?;
            w.write_all(b"\n").map_err(sink_err)?;
            w.flush().map_err(sink_err)
        }
    })?;
    let artifact = HmcArtifact {
        spec,
        sampler,
        n_times: panel.n_times(),
        series_labels: panel.series_labels().to_vec(),
        time_labels: panel.time_labels().to_vec(),
        chains: draws.chains.clone(),
        warnings: draws.warnings.clone(),
    };
    out.write_json(HMC_FILE, &artifact)?;
    out.finish("fit-hmc", cfg, draws.warnings.clone())?;
    Ok(draws.warnings)
}

/// Reads the sampler record and every chain file written by `fit-hmc`.
fn load_draws(cfg: &RunConfig, out: &mut Outputs) -> Result<(HmcArtifact, PosteriorDraws)> {
    let hmc_path = out.path(HMC_FILE);
    let hmc: HmcArtifact = read_json(&hmc_path, "fit-hmc")?.body;
    out.read(&hmc_path);
    let mut draws = Vec::new();
    for chain in 0..hmc.chains.len() {
        let path = cfg.output_dir.join(chain_file(chain));
        if !path.exists() {
            bail!("{} not found; run `dtslpm fit-hmc` first with the same --output-dir", path.display());
        }
        let reader = BufReader::new(File::open(&path)?);
        for (n, line) in reader.lines().enumerate().skip(1) {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let d: Draw = serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), n + 1))?;
            draws.push(d);
        }
        out.read(&path);
    }
    let posterior = PosteriorDraws {
        spec: hmc.spec,
        n_times: hmc.n_times,
        draws,
        chains: hmc.chains.clone(),
        warnings: hmc.warnings.clone(),
    };
    Ok((hmc, posterior))
}

fn load_map(out: &mut Outputs) -> Result<MapArtifact> {
    let path = out.path(MAP_FILE);
    let map: MapArtifact = read_json(&path, "fit-map")?.body;
    out.read(&path);
    Ok(map)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

/// Label of latent slice `s`: the time label, or `all` for a static fit.
fn slice_label(spec: &ModelSpec, time_labels: &[String], s: usize) -> String {
    match spec.mode {
        LatentMode::Static => "all".into(),
        LatentMode::Dynamic => time_labels[s].clone(),
    }
}

type Accessor = Box<dyn Fn(&Draw) -> f64>;

/// Scalar parameters available in every draw, as (name, accessor) pairs.
fn scalar_parameters(spec: &ModelSpec, n_series: usize) -> Vec<(String, Accessor)> {
    let mut out: Vec<(String, Accessor)> = vec![("alpha".into(), Box::new(|d: &Draw| d.alpha))];
    for i in 0..n_series {
        out.push((format!("beta[{}]", i + 1), Box::new(move |d: &Draw| d.beta[i])));
    }
    if spec.rho_sigma_mode.is_priored() {
        out.push(("rho".into(), Box::new(|d: &Draw| d.rho)));
        if spec.mode == LatentMode::Dynamic {
            out.push(("sigma".into(), Box::new(|d: &Draw| d.sigma)));
        }
    }
    out.push(("log_posterior".into(), Box::new(|d: &Draw| d.log_posterior)));
    out
}

#[derive(Serialize)]
struct SummaryArtifact<'a> {
    parameters: &'a [dtslpm::postprocess::ParameterSummary],
    n_draws: usize,
    n_chains: usize,
    warnings: &'a [String],
}

pub fn summarize(cfg: &RunConfig) -> Result<Vec<String>> {
    let mut out = Outputs::new(cfg)?;
    let map = load_map(&mut out)?;
    let (hmc, posterior) = load_draws(cfg, &mut out)?;
    let (m, h) = (&map.estimate, &hmc.spec);
    if m.spec.mode != h.mode || m.latents.dim() != h.latent_dim || map.series_labels != hmc.series_labels {
        bail!(
            "map.json ({:?}, K={}) and the HMC draws ({:?}, K={}) come from different models or data; \
             re-run fit-map and fit-hmc with the same settings",
            m.spec.mode,
            m.latents.dim(),
            h.mode,
            h.latent_dim
        );
    }
    if posterior.len() < 2 {
        bail!("only {} posterior draws; run fit-hmc with more iterations", posterior.len());
    }
    let aligned = align_all(&posterior, &map.estimate)?;
    let summary = summarize_draws(&aligned)?;
    write_summary(&mut out, &hmc, &aligned.draws, &summary)?;
    let mut warnings = posterior.warnings.clone();
    warnings.extend(aligned.warnings.iter().cloned());
    out.write_json(
        "summary/summary.json",
        &SummaryArtifact {
            parameters: &summary.parameters,
            n_draws: aligned.len(),
            n_chains: aligned.n_chains(),
            warnings: &warnings,
        },
    )?;
    out.finish("summarize", cfg, warnings.clone())?;
    Ok(warnings)
}

fn interval_cells(iv: &Interval) -> [String; 3] {
    [iv.mean.to_string(), iv.lower.to_string(), iv.upper.to_string()]
}

fn write_summary(out: &mut Outputs, hmc: &HmcArtifact, draws: &[Draw], s: &Summary) -> Result<()> {
    let labels = &hmc.series_labels;
    let spec = &hmc.spec;

    let mut w = out.csv("summary/parameters.csv")?;
    w.write_record(["parameter", "mean", "lower_2.5", "upper_97.5", "sd", "rhat", "ess"])?;
    for p in &s.parameters {
        let [mean, lo, hi] = interval_cells(&p.interval);
        w.write_record([p.name.clone(), mean, lo, hi, p.sd.to_string(), fmt_opt(p.rhat), fmt_opt(p.ess)])?;
    }
    w.flush()?;

    let inter = &s.interactions;
    let mut w = out.csv("summary/interactions.csv")?;
    w.write_record(["time", "from", "to", "mean", "lower_2.5", "upper_97.5"])?;
    for slice in 0..inter.n_slices {
        let t = slice_label(spec, &hmc.time_labels, slice);
        for i in 0..inter.n_nodes {
            for j in 0..inter.n_nodes {
                let [mean, lo, hi] = interval_cells(&inter.get(slice, i, j));
                w.write_record([t.clone(), labels[i].clone(), labels[j].clone(), mean, lo, hi])?;
            }
        }
    }
    w.flush()?;

    // Posterior-mean interaction matrix, averaged over time for dynamic fits.
    let n = inter.n_nodes;
    let mut avg = DMatrix::zeros(n, n);
    for slice in 0..inter.n_slices {
        avg += inter.mean_matrix(slice);
    }
    avg /= inter.n_slices as f64;
    let mut w = out.csv("summary/interaction_matrix.csv")?;
    let mut header = vec![String::new()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for i in 0..n {
        let mut row = vec![labels[i].clone()];
        row.extend((0..n).map(|j| avg[(i, j)].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;

    let lat = &s.latents;
    let mut w = out.csv("summary/latents.csv")?;
    w.write_record(["node", "time", "dim", "mean", "lower_2.5", "upper_97.5"])?;
    for (i, label) in labels.iter().enumerate() {
        for slice in 0..lat.mean.n_slices() {
            let t = slice_label(spec, &hmc.time_labels, slice);
            for k in 0..lat.mean.dim() {
                w.write_record([
                    label.clone(),
                    t.clone(),
                    (k + 1).to_string(),
                    lat.mean.position(i, slice)[k].to_string(),
                    lat.lower.position(i, slice)[k].to_string(),
                    lat.upper.position(i, slice)[k].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;

    let mut w = out.csv("summary/risk_series.csv")?;
    w.write_record(["time", "mean", "lower_2.5", "upper_97.5"])?;
    for (slice, iv) in s.risk.summary.iter().enumerate() {
        let [mean, lo, hi] = interval_cells(iv);
        w.write_record([slice_label(spec, &hmc.time_labels, slice), mean, lo, hi])?;
    }
    w.flush()?;

    let params = scalar_parameters(spec, labels.len());
    let mut w = out.csv("summary/draws.csv")?;
    w.write_record(["chain", "iteration", "parameter", "value"])?;
    for d in draws {
        for (name, f) in &params {
            w.write_record([d.chain.to_string(), d.iteration.to_string(), name.clone(), f(d).to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct StabilityArtifact<'a> {
    /// The estimate whose interaction matrices were checked.
    source: &'static str,
    report: &'a TrajectoryStability,
}

pub fn diagnose(cfg: &RunConfig) -> Result<Vec<String>> {
    let mut out = Outputs::new(cfg)?;
    let map = load_map(&mut out)?;
    let (hmc, posterior) = load_draws(cfg, &mut out)?;

    let report = check_trajectory_stability(&map.estimate.params(), &map.estimate.latents)?;
    let mut warnings = Vec::new();
    if !report.relaxed_satisfied {
        let msg = format!("MAP interaction matrix fails the stability condition (worst slice {})", report.worst_slice);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    out.write_json("diagnostics/stability.json", &StabilityArtifact { source: "map", report: &report })?;

    let mut w = out.csv("diagnostics/diagnostics.csv")?;
    w.write_record(["parameter", "rhat", "ess"])?;
    for (name, f) in scalar_parameters(&hmc.spec, hmc.series_labels.len()) {
        let chains = posterior.scalar_chains(|d| f(d));
        let r = rhat(&chains).ok().flatten();
        let e = ess_chains(&chains).ok().flatten();
        if r.is_some_and(|r| r > 1.1) {
            warnings.push(format!("{name}: R-hat {:.3} exceeds 1.1", r.unwrap_or_default()));
        }
        w.write_record([name, fmt_opt(r), fmt_opt(e)])?;
    }
    w.flush()?;

    let mut w = out.csv("diagnostics/chains.csv")?;
    w.write_record([
        "chain",
        "step_size",
        "mean_accept_prob",
        "accept_rate",
        "divergences",
        "burn_in_divergences",
        "n_draws",
    ])?;
    for c in &hmc.chains {
        w.write_record([
            c.chain.to_string(),
            c.step_size.to_string(),
            c.mean_accept_prob.to_string(),
            c.accept_rate.to_string(),
            c.divergences.to_string(),
            c.burn_in_divergences.to_string(),
            c.n_draws.to_string(),
        ])?;
    }
    w.flush()?;
    warnings.extend(posterior.warnings.iter().cloned());
    out.finish("diagnose", cfg, warnings.clone())?;
    Ok(warnings)
}
