//! Evaluation metrics of a simulation log.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::payoff::Style;
use crate::scenario::SolverKind;
use crate::simulation::{SimulationLog, Termination};

/// Five-number summary with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let pos = q * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
        };
        Some(Quartiles {
            min: v[0],
            q1: at(0.25),
            median: at(0.5),
            q3: at(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub id: String,
    pub style: Style,
    pub samples: usize,
    pub max_velocity: f64,
    pub velocity_rms: f64,
    pub ax: Quartiles,
    pub ay: Quartiles,
    /// Smallest gap to any other vehicle over the run (m).
    pub min_gap: Option<f64>,
    /// Smallest gap to each vehicle that was ever in one of the agent's NV slots (m).
    pub nv_min_gap: BTreeMap<String, f64>,
    pub finished_at: Option<f64>,
    /// Steps on which the braking fallback was executed.
    pub fallback_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub solver: SolverKind,
    pub agents: Vec<AgentMetrics>,
    /// RMS of the pooled velocities of all agents and steps (m/s).
    pub system_velocity_rms: f64,
    /// Smallest gap between any two vehicles (m).
    pub min_gap: Option<f64>,
    pub termination: Termination,
    /// Mean wall time of one decision epoch (s); not part of the deterministic exports.
    #[serde(skip)]
    pub mean_solve_time: f64,
}

impl MetricsReport {
    pub fn agent(&self, id: &str) -> Option<&AgentMetrics> {
        self.agents.iter().find(|a| a.id == id)
    }
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Agent index and position.
type Placed = (usize, (f64, f64));

/// Gap between two vehicle centers, with the collision distance subtracted (m).
fn pair_gaps(log: &SimulationLog) -> BTreeMap<(usize, usize), f64> {
    let mut by_step: BTreeMap<usize, Vec<Placed>> = BTreeMap::new();
    for (i, a) in log.agents.iter().enumerate() {
        for r in &a.records {
            by_step
                .entry(r.step)
                .or_default()
                .push((i, (r.state.x, r.state.y)));
        }
    }
    let mut gaps: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for present in by_step.values() {
        for (n, &(i, p)) in present.iter().enumerate() {
            for &(j, q) in &present[n + 1..] {
                let g = (p.0 - q.0).hypot(p.1 - q.1) - log.collision_distance;
                let e = gaps.entry((i.min(j), i.max(j))).or_insert(f64::INFINITY);
                *e = e.min(g);
            }
        }
    }
    gaps
}

pub fn metrics(log: &SimulationLog) -> Result<MetricsReport> {
    if log.agents.iter().all(|a| a.records.is_empty()) {
        return Err(Error::InvalidInput(
            "cannot compute metrics of an empty log".into(),
        ));
    }
    let gaps = pair_gaps(log);
    let gap = |i: usize, j: usize| gaps.get(&(i.min(j), i.max(j))).copied();
    let index: BTreeMap<&str, usize> = log
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| (a.id.as_str(), i))
        .collect();
    let mut agents = Vec::with_capacity(log.agents.len());
    for (i, a) in log.agents.iter().enumerate() {
        let vx: Vec<f64> = a.records.iter().map(|r| r.state.vx).collect();
        let ax: Vec<f64> = a.records.iter().map(|r| r.control.ax).collect();
        let ay: Vec<f64> = a.records.iter().map(|r| r.ay).collect();
        let mut nv_min_gap = BTreeMap::new();
        for r in &a.records {
            for id in r.roles.nv.iter().flatten() {
                if let Some(g) = index.get(id.as_str()).and_then(|&j| gap(i, j)) {
                    nv_min_gap.insert(id.clone(), g);
                }
            }
        }
        let min_gap = (0..log.agents.len())
            .filter(|&j| j != i)
            .filter_map(|j| gap(i, j))
            .reduce(f64::min);
        agents.push(AgentMetrics {
            id: a.id.clone(),
            style: a.style,
            samples: vx.len(),
            max_velocity: vx.iter().copied().reduce(f64::max).unwrap_or(0.0),
            velocity_rms: rms(vx.iter().copied()),
            ax: Quartiles::of(&ax).unwrap_or_default(),
            ay: Quartiles::of(&ay).unwrap_or_default(),
            min_gap,
            nv_min_gap,
            finished_at: a.finished_at,
            fallback_steps: a.records.iter().filter(|r| !r.feasible).count(),
        });
    }
    let records = || log.agents.iter().flat_map(|a| &a.records);
    let n = records().count();
    Ok(MetricsReport {
        scenario: log.scenario.clone(),
        solver: log.solver,
        agents,
        system_velocity_rms: rms(records().map(|r| r.state.vx)),
        min_gap: gaps.values().copied().reduce(f64::min),
        termination: log.termination.clone(),
        mean_solve_time: records().map(|r| r.solve_time).sum::<f64>() / n as f64,
    })
}
