//! Scenario files: schema, defaults, validation and the bundled corpus.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path as FsPath;
use std::str::FromStr;

use crate::constraints::{Angle, ConstraintBounds};
use crate::error::{Error, Result};
use crate::game::GameConfig;
use crate::kinematics::{ControlInput, HorizonConfig, VehicleParameters, VehicleState};
use crate::payoff::{PayoffWeights, Style, StyleTable};
use crate::scenario::agent::VehicleAgent;
use crate::scenario::geometry::{LaneIndex, Port, RoundaboutGeometry};
use crate::scenario::roles::{nearest_ring, RoleConfig};
use crate::scenario::tracking::TrackerConfig;
use crate::simulation::SimulationSettings;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    #[serde(alias = "sg")]
    Stackelberg,
    #[serde(alias = "gc")]
    GrandCoalition,
}

impl SolverKind {
    pub const ALL: [SolverKind; 2] = [SolverKind::Stackelberg, SolverKind::GrandCoalition];

    pub fn short(self) -> &'static str {
        match self {
            SolverKind::Stackelberg => "sg",
            SolverKind::GrandCoalition => "gc",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sg" | "stackelberg" => Ok(SolverKind::Stackelberg),
            "gc" | "grand_coalition" => Ok(SolverKind::GrandCoalition),
            other => Err(Error::Parse(format!(
                "unknown solver `{other}` (expected sg or gc)"
            ))),
        }
    }
}

/// Initial condition and route of one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    /// Defaults to the lane tangent at the initial position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<Angle>,
    pub style: Style,
    /// Entrance port; absent for vehicles that start on the round road.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry: Option<Port>,
    /// Inbound lane, 0 inner or 1 outer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_lane: Option<LaneIndex>,
    /// Initially intended round lane; defaults to the entry lane, or to the
    /// lane nearest the initial position for circulating vehicles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring_lane: Option<LaneIndex>,
    pub exit: Port,
    /// Initial longitudinal acceleration (m/s^2).
    #[serde(default)]
    pub ax: f64,
}

fn default_duration() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    /// Simulated time (s).
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default)]
    pub geometry: RoundaboutGeometry,
    #[serde(default)]
    pub horizon: HorizonConfig,
    #[serde(default)]
    pub vehicle: VehicleParameters,
    #[serde(default)]
    pub bounds: ConstraintBounds,
    #[serde(default)]
    pub payoff: PayoffWeights,
    #[serde(default)]
    pub styles: StyleTable,
    #[serde(default)]
    pub game: GameConfig,
    #[serde(default)]
    pub roles: RoleConfig,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub simulation: SimulationSettings,
    pub agents: Vec<AgentSpec>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.name.trim().is_empty() {
            return Err(Error::Config("scenario name must not be empty".into()));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        self.geometry.validate()?;
        self.horizon.validate()?;
        self.vehicle.validate()?;
        self.bounds.validate()?;
        self.payoff.validate()?;
        self.styles.validate()?;
        self.game.validate(self.horizon.np)?;
        self.roles.validate()?;
        self.tracker.validate()?;
        self.simulation.validate()?;
        if self.agents.is_empty() {
            return Err(Error::Config("scenario has no agents".into()));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.id.trim().is_empty() {
                return Err(Error::Config(format!("agent #{i} has an empty id")));
            }
            if self.agents[..i].iter().any(|b| b.id == a.id) {
                return Err(Error::Config(format!("duplicate agent id `{}`", a.id)));
            }
            if ![a.x, a.y, a.vx, a.ax].iter().all(|v| v.is_finite()) || a.vx < 0.0 {
                return Err(Error::Config(format!(
                    "agent {}: non-finite or negative initial values",
                    a.id
                )));
            }
            if a.vx > self.bounds.vx_max {
                return Err(Error::Config(format!(
                    "agent {}: initial speed {} exceeds vx_max {}",
                    a.id, a.vx, self.bounds.vx_max
                )));
            }
            if a.entry.is_none() && a.entry_lane.is_some() {
                return Err(Error::Config(format!(
                    "agent {}: entry_lane given without entry",
                    a.id
                )));
            }
        }
        let agents = self.build_agents()?;
        let d_min = self.simulation.collision_distance;
        for i in 0..agents.len() {
            for j in (i + 1)..agents.len() {
                let d = agents[i].state.distance_to(&agents[j].state);
                if !(d > d_min) {
                    return Err(Error::Config(format!(
                        "agents {} and {} start {d:.3} m apart, inside the collision distance {d_min} m",
                        agents[i].id, agents[j].id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Instantiates the agents sorted by id, the order in which they act.
    pub fn build_agents(&self) -> Result<Vec<VehicleAgent>> {
        let mut agents = Vec::with_capacity(self.agents.len());
        for spec in &self.agents {
            agents.push(self.build_agent(spec)?);
        }
        agents.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(agents)
    }

    fn build_agent(&self, spec: &AgentSpec) -> Result<VehicleAgent> {
        let entry = spec.entry.map(|p| (p, spec.entry_lane.unwrap_or(0)));
        let provisional = VehicleState::new(spec.vx, 0.0, spec.x, spec.y);
        let ring = match (spec.ring_lane, entry) {
            (Some(r), _) => r,
            (None, Some((_, lane))) => lane,
            (None, None) => nearest_ring(&provisional, &self.geometry),
        };
        let mut agent = VehicleAgent::new(
            spec.id.clone(),
            spec.style,
            entry,
            spec.exit,
            ring,
            provisional,
            self.vehicle,
            &self.geometry,
        )?;
        let phi = match spec.heading {
            Some(h) => h.rad(),
            None => agent.path().pose_at(agent.station).1,
        };
        let state = VehicleState::new(spec.vx, phi, spec.x, spec.y);
        agent = VehicleAgent::new(
            spec.id.clone(),
            spec.style,
            entry,
            spec.exit,
            ring,
            state,
            self.vehicle,
            &self.geometry,
        )?;
        agent.prev_control = ControlInput::new(spec.ax, 0.0);
        Ok(agent)
    }

    /// The fully resolved configuration as scenario-file text.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("cannot serialize scenario: {e}")))
    }
}

/// Parses and validates scenario text.
pub fn load_scenario(document: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(document).map_err(|e| Error::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario_file(path: impl AsRef<FsPath>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    load_scenario(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// The scenarios shipped with the library.
pub const BUNDLED: [(&str, &str); 7] = [
    ("case1_A", include_str!("../../scenarios/case1_A.toml")),
    ("case1_B", include_str!("../../scenarios/case1_B.toml")),
    ("case1_C", include_str!("../../scenarios/case1_C.toml")),
    ("case2_A", include_str!("../../scenarios/case2_A.toml")),
    ("case2_B", include_str!("../../scenarios/case2_B.toml")),
    ("case2_C", include_str!("../../scenarios/case2_C.toml")),
    ("case3", include_str!("../../scenarios/case3.toml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Loads a scenario from a file path, or by bundled name when no such file exists.
pub fn resolve_scenario(name_or_path: &str) -> Result<ScenarioConfig> {
    let path = FsPath::new(name_or_path);
    if path.exists() {
        return load_scenario_file(path);
    }
    match bundled(name_or_path) {
        Some(text) => load_scenario(text),
        None => Err(Error::Config(format!(
            "scenario `{name_or_path}` is neither a readable file nor a bundled scenario"
        ))),
    }
}
