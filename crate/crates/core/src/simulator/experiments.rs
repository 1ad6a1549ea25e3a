use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LatentTrajectories, ModelParams};

const ANCHOR_A: [f64; 2] = [0.0, 0.0];
const ANCHOR_B: [f64; 2] = [3.0, 3.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    /// Two pairs, each moving relative to its partner inside its cluster.
    PairsWithinClusters,
    /// Node 1 leaves its cluster for the other one over the middle third.
    SingleNodeMigration,
    /// Nodes 1 and 4 trade places over the middle third.
    NodeSwap,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 3] = [Self::PairsWithinClusters, Self::SingleNodeMigration, Self::NodeSwap];

    /// Generating `alpha`/`beta` used for the reference runs of each design.
    pub fn reference_params(self) -> ModelParams {
        match self {
            Self::PairsWithinClusters => ModelParams::new(-0.31, vec![-0.86, -0.25, -0.84, -0.74]),
            Self::SingleNodeMigration => ModelParams::new(-0.005, vec![-0.53, 0.01, -0.67, -0.15]),
            Self::NodeSwap => ModelParams::new(0.22, vec![-0.67, -0.15, -0.85, -0.04]),
        }
    }
}

impl std::str::FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "pairs-within-clusters" => Ok(Self::PairsWithinClusters),
            "2" | "single-node-migration" => Ok(Self::SingleNodeMigration),
            "3" | "node-swap" => Ok(Self::NodeSwap),
            other => Err(Error::Config(format!("unknown experiment design {other:?}"))),
        }
    }
}

/// A position the node passes through at a fraction `at` of the series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub at: f64,
    pub pos: [f64; 2],
}

/// Waypoints joined by smoothstep segments, plus a small periodic wobble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSchedule {
    pub waypoints: Vec<Waypoint>,
    pub wobble: f64,
    pub phase: f64,
}

impl NodeSchedule {
    fn hold(pos: [f64; 2], phase: f64) -> Self {
        Self { waypoints: vec![Waypoint { at: 0.0, pos }], wobble: 0.05, phase }
    }

    fn position(&self, frac: f64) -> [f64; 2] {
        let wp = &self.waypoints;
        let base = match wp.iter().position(|w| w.at > frac) {
            None => wp[wp.len() - 1].pos,
            Some(0) => wp[0].pos,
            Some(j) => {
                let (a, b) = (wp[j - 1], wp[j]);
                let u = ((frac - a.at) / (b.at - a.at)).clamp(0.0, 1.0);
                let s = u * u * (3.0 - 2.0 * u);
                [a.pos[0] + s * (b.pos[0] - a.pos[0]), a.pos[1] + s * (b.pos[1] - a.pos[1])]
            }
        };
        let angle = 6.0 * PI * frac + self.phase;
        [base[0] + self.wobble * angle.sin(), base[1] + self.wobble * angle.cos()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDesign {
    pub id: ExperimentId,
    pub n_times: usize,
    /// Largest allowed per-step displacement of any node.
    pub max_step: f64,
    pub schedules: Vec<NodeSchedule>,
}

fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

impl ExperimentDesign {
    /// Four nodes over 200 time points with the default schedule for `id`.
    pub fn new(id: ExperimentId) -> Self {
        Self::with_times(id, 200)
    }

    pub fn with_times(id: ExperimentId, n_times: usize) -> Self {
        let schedules = match id {
            ExperimentId::PairsWithinClusters => {
                // Each pair spins about its anchor while its separation
                // oscillates between 0.4 and 1.6; the pairs are out of phase.
                let pair = |anchor: [f64; 2], phase: f64| {
                    let pts: Vec<([f64; 2], [f64; 2])> = (0..=8)
                        .map(|k| {
                            let theta = k as f64 * PI / 8.0;
                            let sep = if (k % 2 == 0) ^ (phase > 0.0) { 0.4 } else { 1.6 };
                            let off = [0.5 * sep * theta.cos(), 0.5 * sep * theta.sin()];
                            (add(anchor, off), add(anchor, [-off[0], -off[1]]))
                        })
                        .collect();
                    let sched = |first: bool| NodeSchedule {
                        waypoints: pts
                            .iter()
                            .enumerate()
                            .map(|(k, p)| Waypoint { at: k as f64 / 8.0, pos: if first { p.0 } else { p.1 } })
                            .collect(),
                        wobble: 0.0,
                        phase: 0.0,
                    };
                    [sched(true), sched(false)]
                };
                let [n1, n2] = pair(ANCHOR_A, 0.0);
                let [n3, n4] = pair(ANCHOR_B, 1.0);
                vec![n1, n2, n3, n4]
            }
            ExperimentId::SingleNodeMigration => vec![
                NodeSchedule {
                    waypoints: vec![
                        Waypoint { at: 0.0, pos: add(ANCHOR_A, [0.35, 0.0]) },
                        Waypoint { at: 1.0 / 3.0, pos: add(ANCHOR_A, [0.35, 0.0]) },
                        Waypoint { at: 2.0 / 3.0, pos: add(ANCHOR_B, [-0.5, 0.3]) },
                    ],
                    wobble: 0.05,
                    phase: 0.0,
                },
                NodeSchedule::hold(add(ANCHOR_A, [-0.35, 0.0]), 1.0),
                NodeSchedule::hold(add(ANCHOR_B, [0.5, 0.3]), 2.0),
                NodeSchedule::hold(add(ANCHOR_B, [0.0, -0.5]), 3.0),
            ],
            ExperimentId::NodeSwap => {
                let mid = [0.5 * (ANCHOR_A[0] + ANCHOR_B[0]), 0.5 * (ANCHOR_A[1] + ANCHOR_B[1])];
                let a_slot = add(ANCHOR_A, [0.35, 0.0]);
                let b_slot = add(ANCHOR_B, [-0.35, 0.0]);
                let swap = |from: [f64; 2], bulge: [f64; 2], to: [f64; 2], phase: f64| NodeSchedule {
                    waypoints: vec![
                        Waypoint { at: 0.0, pos: from },
                        Waypoint { at: 1.0 / 3.0, pos: from },
                        Waypoint { at: 0.5, pos: add(mid, bulge) },
                        Waypoint { at: 2.0 / 3.0, pos: to },
                    ],
                    wobble: 0.05,
                    phase,
                };
                vec![
                    swap(a_slot, [-0.6, 0.6], b_slot, 0.0),
                    NodeSchedule::hold(add(ANCHOR_A, [-0.35, 0.0]), 1.0),
                    NodeSchedule::hold(add(ANCHOR_B, [0.35, 0.0]), 2.0),
                    swap(b_slot, [0.6, -0.6], a_slot, 3.0),
                ]
            }
        };
        Self { id, n_times, max_step: 0.15, schedules }
    }

    pub fn n_nodes(&self) -> usize {
        self.schedules.len()
    }

    fn validate(&self) -> Result<()> {
        if self.n_times < 2 || self.schedules.is_empty() {
            return Err(Error::Config("a design needs nodes and at least two time points".into()));
        }
        for (i, s) in self.schedules.iter().enumerate() {
            if s.waypoints.is_empty() || s.waypoints.windows(2).any(|w| w[1].at <= w[0].at) {
                return Err(Error::Config(format!("node {i} needs increasing waypoint times")));
            }
        }
        Ok(())
    }
}

/// Deterministic trajectories for a design; fails if any step exceeds
/// `design.max_step`.
pub fn make_experiment_trajectories(design: &ExperimentDesign) -> Result<LatentTrajectories> {
    design.validate()?;
    let t_max = (design.n_times - 1) as f64;
    let out = LatentTrajectories::from_fn(design.n_nodes(), design.n_times, 2, |i, s, k| {
        design.schedules[i].position(s as f64 / t_max)[k]
    });
    for i in 0..design.n_nodes() {
        for s in 1..design.n_times {
            let (a, b) = (out.position(i, s - 1), out.position(i, s));
            let step = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            if step > design.max_step {
                return Err(Error::Config(format!(
                    "node {i} moves {step:.3} at step {s}, above the bound {}",
                    design.max_step
                )));
            }
        }
    }
    Ok(out)
}
