//! Log and metrics files.
//!
//! For a run of scenario `S` with solver `V` (`sg` or `gc`) in directory `D`:
//!
//! - `D/S_V_<agent>.csv`: one trajectory row per step, columns [`TRAJECTORY_COLUMNS`]
//! - `D/S_V_metrics.csv`: one row per agent and a final `system` row, columns [`METRICS_COLUMNS`]
//! - `D/S_V_metrics.json`: the full [`MetricsReport`]
//! - `D/S_V_summary.json`: run header needed to re-import the trajectories
//! - `D/S_V_timing.csv`: epoch wall times, the only non-deterministic file
//!
//! Floating-point values are written with 9 significant digits.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::game::DecisionVector;
use crate::kinematics::{ControlInput, VehicleState};
use crate::payoff::{PayoffBreakdown, Stage, Style};
use crate::scenario::geometry::Port;
use crate::scenario::SolverKind;
use crate::simulation::metrics::{AgentMetrics, MetricsReport, Quartiles};
use crate::simulation::{AgentRecord, AgentTrack, RoleSummary, SimulationLog, Termination};

pub const TRAJECTORY_COLUMNS: [&str; 28] = [
    "step",
    "t",
    "vx",
    "phi",
    "x",
    "y",
    "ax",
    "delta_f",
    "plant_steer",
    "ay",
    "d_ax",
    "d_delta_f",
    "alpha",
    "beta",
    "stage",
    "ring",
    "lv",
    "nv1",
    "nv2",
    "nv3",
    "p_s_log",
    "p_s_lat",
    "p_s_lk",
    "p_s",
    "p_c",
    "p_e",
    "p_total",
    "feasible",
];

pub const METRICS_COLUMNS: [&str; 17] = [
    "agent",
    "style",
    "samples",
    "max_velocity",
    "velocity_rms",
    "ax_min",
    "ax_q1",
    "ax_median",
    "ax_q3",
    "ax_max",
    "ay_min",
    "ay_q1",
    "ay_median",
    "ay_q3",
    "ay_max",
    "min_gap",
    "finished_at",
];

/// Formats with 9 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.8e}")
}

/// Rounds to the value written by [`fmt_f64`].
pub fn round9(v: f64) -> f64 {
    if v.is_finite() {
        fmt_f64(v).parse().unwrap_or(v)
    } else {
        v
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// File stem shared by all files of one run.
pub fn stem(scenario: &str, solver: SolverKind) -> String {
    format!("{scenario}_{}", solver.short())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Summary {
    scenario: String,
    solver: SolverKind,
    dt: f64,
    collision_distance: f64,
    termination: Termination,
    agents: Vec<AgentSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AgentSummary {
    id: String,
    style: Style,
    exit: Port,
    finished_at: Option<f64>,
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::InvalidInput(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv encoding failed: {e}")))
}

fn stage_name(s: Stage) -> String {
    s.to_string()
}

fn parse_stage(s: &str) -> Result<Stage> {
    match s {
        "entering" => Ok(Stage::Entering),
        "passing" => Ok(Stage::Passing),
        "exiting" => Ok(Stage::Exiting),
        other => Err(Error::Parse(format!("unknown stage `{other}`"))),
    }
}

fn trajectory_row(r: &AgentRecord) -> Vec<String> {
    let id = |v: &Option<String>| v.clone().unwrap_or_default();
    let p = &r.payoff;
    vec![
        r.step.to_string(),
        fmt_f64(r.t),
        fmt_f64(r.state.vx),
        fmt_f64(r.state.phi),
        fmt_f64(r.state.x),
        fmt_f64(r.state.y),
        fmt_f64(r.control.ax),
        fmt_f64(r.control.delta_f),
        fmt_f64(r.plant_steer),
        fmt_f64(r.ay),
        fmt_f64(r.decision.d_ax),
        fmt_f64(r.decision.d_delta_f),
        r.decision.alpha.to_string(),
        r.decision.beta.to_string(),
        stage_name(r.stage),
        r.ring.to_string(),
        id(&r.roles.lv),
        id(&r.roles.nv[0]),
        id(&r.roles.nv[1]),
        id(&r.roles.nv[2]),
        fmt_f64(p.p_s_log),
        fmt_f64(p.p_s_lat),
        fmt_f64(p.p_s_lk),
        fmt_f64(p.p_s),
        fmt_f64(p.p_c),
        fmt_f64(p.p_e),
        fmt_f64(p.total),
        u8::from(r.feasible).to_string(),
    ]
}

fn metrics_row(a: &AgentMetrics) -> Vec<String> {
    let q = |q: &Quartiles| [q.min, q.q1, q.median, q.q3, q.max].map(fmt_f64);
    let mut row = vec![
        a.id.clone(),
        a.style.to_string(),
        a.samples.to_string(),
        fmt_f64(a.max_velocity),
        fmt_f64(a.velocity_rms),
    ];
    row.extend(q(&a.ax));
    row.extend(q(&a.ay));
    row.push(opt(a.min_gap));
    row.push(opt(a.finished_at));
    row
}

fn rounded_report(m: &MetricsReport) -> MetricsReport {
    let q = |q: Quartiles| Quartiles {
        min: round9(q.min),
        q1: round9(q.q1),
        median: round9(q.median),
        q3: round9(q.q3),
        max: round9(q.max),
    };
    let mut m = m.clone();
    m.system_velocity_rms = round9(m.system_velocity_rms);
    m.min_gap = m.min_gap.map(round9);
    for a in &mut m.agents {
        a.max_velocity = round9(a.max_velocity);
        a.velocity_rms = round9(a.velocity_rms);
        a.ax = q(a.ax);
        a.ay = q(a.ay);
        a.min_gap = a.min_gap.map(round9);
        a.finished_at = a.finished_at.map(round9);
        for g in a.nv_min_gap.values_mut() {
            *g = round9(*g);
        }
    }
    m
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::InvalidInput(format!("json encoding failed: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

/// Writes every file of the run to `dir` and returns their paths.
pub fn export(log: &SimulationLog, report: &MetricsReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = stem(&log.scenario, log.solver);
    let mut written = Vec::new();
    let mut emit = |name: String, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        write(&path, &bytes)?;
        written.push(path);
        Ok(())
    };

    for a in &log.agents {
        let rows = a.records.iter().map(trajectory_row).collect();
        emit(
            format!("{stem}_{}.csv", a.id),
            csv_bytes(&TRAJECTORY_COLUMNS, rows)?,
        )?;
    }

    let mut rows: Vec<Vec<String>> = report.agents.iter().map(metrics_row).collect();
    let mut system = vec![String::new(); METRICS_COLUMNS.len()];
    system[0] = "system".into();
    system[2] = report
        .agents
        .iter()
        .map(|a| a.samples)
        .sum::<usize>()
        .to_string();
    system[4] = fmt_f64(report.system_velocity_rms);
    system[15] = opt(report.min_gap);
    rows.push(system);
    emit(
        format!("{stem}_metrics.csv"),
        csv_bytes(&METRICS_COLUMNS, rows)?,
    )?;
    emit(
        format!("{stem}_metrics.json"),
        json_bytes(&rounded_report(report))?,
    )?;

    let summary = Summary {
        scenario: log.scenario.clone(),
        solver: log.solver,
        dt: log.dt,
        collision_distance: log.collision_distance,
        termination: log.termination.clone(),
        agents: log
            .agents
            .iter()
            .map(|a| AgentSummary {
                id: a.id.clone(),
                style: a.style,
                exit: a.exit,
                finished_at: a.finished_at,
            })
            .collect(),
    };
    emit(format!("{stem}_summary.json"), json_bytes(&summary)?)?;

    let rows = log
        .agents
        .iter()
        .flat_map(|a| {
            a.records
                .iter()
                .map(move |r| vec![a.id.clone(), r.step.to_string(), fmt_f64(r.solve_time)])
        })
        .collect();
    emit(
        format!("{stem}_timing.csv"),
        csv_bytes(&["agent", "step", "solve_time"], rows)?,
    )?;
    Ok(written)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize, path: &Path) -> Result<&'a str> {
    rec.get(i).ok_or_else(|| {
        Error::Parse(format!(
            "{}: missing column {}",
            path.display(),
            TRAJECTORY_COLUMNS[i]
        ))
    })
}

fn num<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path) -> Result<T> {
    let s = field(rec, i, path)?;
    s.parse().map_err(|_| {
        Error::Parse(format!(
            "{}: bad value `{s}` in column {}",
            path.display(),
            TRAJECTORY_COLUMNS[i]
        ))
    })
}

fn id(rec: &csv::StringRecord, i: usize, path: &Path) -> Result<Option<String>> {
    let s = field(rec, i, path)?;
    Ok((!s.is_empty()).then(|| s.to_string()))
}

fn read_records(path: &Path) -> Result<Vec<AgentRecord>> {
    let text = read(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let f = |i| num::<f64>(&rec, i, path);
        out.push(AgentRecord {
            step: num(&rec, 0, path)?,
            t: f(1)?,
            state: VehicleState::new(f(2)?, f(3)?, f(4)?, f(5)?),
            control: ControlInput::new(f(6)?, f(7)?),
            plant_steer: f(8)?,
            ay: f(9)?,
            decision: DecisionVector {
                d_ax: f(10)?,
                d_delta_f: f(11)?,
                alpha: num(&rec, 12, path)?,
                beta: num(&rec, 13, path)?,
            },
            stage: parse_stage(field(&rec, 14, path)?)?,
            ring: num(&rec, 15, path)?,
            roles: RoleSummary {
                lv: id(&rec, 16, path)?,
                nv: [
                    id(&rec, 17, path)?,
                    id(&rec, 18, path)?,
                    id(&rec, 19, path)?,
                ],
            },
            payoff: PayoffBreakdown {
                p_s_log: f(20)?,
                p_s_lat: f(21)?,
                p_s_lk: f(22)?,
                p_s: f(23)?,
                p_c: f(24)?,
                p_e: f(25)?,
                total: f(26)?,
            },
            feasible: field(&rec, 27, path)? == "1",
            solve_time: 0.0,
        });
    }
    Ok(out)
}

/// Reads back the log written by [`export`]; epoch times come from the
/// timing file when it is present.
pub fn import_log(dir: &Path, scenario: &str, solver: SolverKind) -> Result<SimulationLog> {
    let stem = stem(scenario, solver);
    let summary_path = dir.join(format!("{stem}_summary.json"));
    let summary: Summary = serde_json::from_str(&read(&summary_path)?)
        .map_err(|e| Error::Parse(format!("{}: {e}", summary_path.display())))?;
    let mut agents = Vec::with_capacity(summary.agents.len());
    for a in &summary.agents {
        agents.push(AgentTrack {
            id: a.id.clone(),
            style: a.style,
            exit: a.exit,
            records: read_records(&dir.join(format!("{stem}_{}.csv", a.id)))?,
            finished_at: a.finished_at,
        });
    }
    let timing = dir.join(format!("{stem}_timing.csv"));
    if timing.exists() {
        let text = read(&timing)?;
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", timing.display())))?;
            let bad = || Error::Parse(format!("{}: malformed row", timing.display()));
            let agent = rec.get(0).ok_or_else(bad)?;
            let step: usize = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let t: f64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if let Some(r) = agents
                .iter_mut()
                .find(|a| a.id == agent)
                .and_then(|a| a.records.iter_mut().find(|r| r.step == step))
            {
                r.solve_time = t;
            }
        }
    }
    Ok(SimulationLog {
        scenario: summary.scenario,
        solver: summary.solver,
        dt: summary.dt,
        collision_distance: summary.collision_distance,
        agents,
        termination: summary.termination,
    })
}
