//! Roundabout geometry, agents and their routes, role assignment and stage
//! classification, and the scenario file format.

pub mod agent;
pub mod config;
pub mod geometry;
pub mod roles;
pub mod tracking;

pub use crate::payoff::Stage;
pub use agent::{classify_stage, LanePlan, Role, VehicleAgent};
pub use config::{
    bundled, load_scenario, load_scenario_file, resolve_scenario, AgentSpec, ScenarioConfig,
    SolverKind, BUNDLED, SCHEMA_VERSION,
};
pub use geometry::{reference_pose, LaneIndex, Path, Port, RoundaboutGeometry, Route};
pub use roles::{assign_roles, RoleConfig, RoleMap};
pub use tracking::{tracking_steer, TrackerConfig};

/// Lane reference paths are arc-length parameterized segment chains.
pub type LaneRef = Path;
