//! Vehicle agents: route, lane plan, localization and stage classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{ControlInput, VehicleParameters, VehicleState};
use crate::payoff::{Behavior, Stage, Style};
use crate::scenario::geometry::{LaneIndex, Path, Port, Projection, RoundaboutGeometry, Route};

/// Role of another vehicle from one ego's perspective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub enum Role {
    HV,
    NV,
    LV,
    IV,
}

/// Lane intention of an agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanePlan {
    /// Round lane the reference path follows.
    pub ring: LaneIndex,
    /// Merge lane fixed once the yield point is passed.
    pub committed: bool,
    /// Behavior of the last executed decision.
    pub last_behavior: Behavior,
    /// Furthest stage reached; stages never move backwards.
    pub stage_floor: Stage,
}

/// Distance a circulating vehicle's path starts behind it (m).
const RING_START_BACKOFF: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleAgent {
    pub id: String,
    pub style: Style,
    pub route: Route,
    /// Reference paths of the route through the inner and outer round lane.
    pub paths: [Path; 2],
    pub state: VehicleState,
    /// Decision-level control `(ax, delta_dec)`; the lane assist adds to the steering.
    pub prev_control: ControlInput,
    /// Steering applied to the plant on the last step (rad).
    pub applied_steer: f64,
    pub params: VehicleParameters,
    pub plan: LanePlan,
    /// Arc-length on the current plan path (m).
    pub station: f64,
    pub finished: bool,
}

impl VehicleAgent {
    /// Builds an agent and localizes it on its plan path.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        style: Style,
        entry: Option<(Port, LaneIndex)>,
        exit: Port,
        ring: LaneIndex,
        state: VehicleState,
        params: VehicleParameters,
        geometry: &RoundaboutGeometry,
    ) -> Result<Self> {
        let id = id.into();
        if ring > 1 || entry.is_some_and(|(_, l)| l > 1) {
            return Err(Error::Config(format!(
                "agent {id}: lane index must be 0 (inner) or 1 (outer)"
            )));
        }
        let ring_start_angle = match entry {
            Some(_) => 0.0,
            None => state.y.atan2(state.x) - RING_START_BACKOFF / geometry.ring_radius(ring),
        };
        let route = Route {
            entry,
            exit,
            ring_start_angle,
        };
        let paths = [
            geometry.route_path(&route, 0),
            geometry.route_path(&route, 1),
        ];
        let mut agent = VehicleAgent {
            id,
            style,
            route,
            paths,
            state,
            prev_control: ControlInput::default(),
            applied_steer: 0.0,
            params,
            plan: LanePlan {
                ring,
                committed: false,
                last_behavior: Behavior::KEEP,
                stage_floor: Stage::Entering,
            },
            station: 0.0,
            finished: false,
        };
        let proj = agent.path().project((state.x, state.y), Some(state.phi));
        agent.check_capture(&proj, geometry)?;
        agent.station = proj.s;
        agent.plan.committed = agent.past_yield();
        agent.plan.stage_floor = agent.geometric_stage();
        Ok(agent)
    }

    pub fn path(&self) -> &Path {
        &self.paths[self.plan.ring]
    }

    /// Inbound lane for agents that start on a main road.
    pub fn entry(&self) -> Option<(Port, LaneIndex)> {
        self.route.entry
    }

    fn check_capture(&self, proj: &Projection, geometry: &RoundaboutGeometry) -> Result<()> {
        if proj.distance > 2.0 * geometry.lane_width {
            return Err(Error::Localization(format!(
                "{} at ({:.2}, {:.2}) is {:.2} m from lane `{}`",
                self.id,
                self.state.x,
                self.state.y,
                proj.distance,
                self.path().id
            )));
        }
        Ok(())
    }

    /// Projection of the current pose on the plan path near the last station.
    pub fn locate(&self, geometry: &RoundaboutGeometry) -> Result<Projection> {
        let proj = self.path().project_near(
            (self.state.x, self.state.y),
            Some(self.state.phi),
            self.station,
            10.0,
            30.0,
        );
        self.check_capture(&proj, geometry)?;
        Ok(proj)
    }

    /// Projection on the route through round lane `ring`, searched globally.
    pub fn project_on(&self, ring: LaneIndex) -> Projection {
        self.paths[ring].project((self.state.x, self.state.y), Some(self.state.phi))
    }

    pub fn past_yield(&self) -> bool {
        match self.path().markers.yield_station {
            Some(y) => self.station > y,
            None => true,
        }
    }

    /// Whether the agent is on the circular part of its path.
    pub fn on_ring(&self) -> bool {
        let m = &self.path().markers;
        self.station >= m.ring_start && self.station < m.ring_end
    }

    /// Whether the agent is still on its inbound road or entry arc.
    pub fn is_entering(&self) -> bool {
        self.route.entry.is_some() && self.station < self.path().markers.ring_start
    }

    pub fn geometric_stage(&self) -> Stage {
        let m = &self.path().markers;
        if self.route.entry.is_some() && self.station < m.ring_start {
            Stage::Entering
        } else if self.station >= m.exit_threshold {
            Stage::Exiting
        } else {
            Stage::Passing
        }
    }

    /// Station past which the route counts as complete (m).
    pub fn completion_station(&self, completion_distance: f64) -> f64 {
        self.path().markers.exit_port + completion_distance
    }

    /// Switches the plan to another round lane and relocates the station.
    pub fn switch_ring(&mut self, ring: LaneIndex) {
        if ring != self.plan.ring {
            self.plan.ring = ring;
            self.station = self.project_on(ring).s;
        }
    }
}

/// Decision stage of an agent: geometric stage, never earlier than any stage
/// it has already reached.
pub fn classify_stage(agent: &VehicleAgent, geometry: &RoundaboutGeometry) -> Result<Stage> {
    let proj = agent.locate(geometry)?;
    let mut probe = agent.clone();
    probe.station = proj.s;
    Ok(probe.geometric_stage().max(agent.plan.stage_floor))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> RoundaboutGeometry {
        RoundaboutGeometry::default()
    }

    fn agent(
        entry: Option<(Port, LaneIndex)>,
        exit: Port,
        ring: LaneIndex,
        s: VehicleState,
    ) -> VehicleAgent {
        VehicleAgent::new(
            "a",
            Style::Normal,
            entry,
            exit,
            ring,
            s,
            VehicleParameters::default(),
            &geom(),
        )
        .unwrap()
    }

    #[test]
    fn hv_on_entry_road_is_entering() {
        let a = agent(
            Some((Port::A, 0)),
            Port::B,
            0,
            VehicleState::new(5.5, 0.0, -25.0, -2.45),
        );
        assert_eq!(classify_stage(&a, &geom()).unwrap(), Stage::Entering);
        assert!(!a.past_yield());
    }

    #[test]
    fn ring_vehicle_far_from_exit_is_passing() {
        // outer ring, heading counter-clockwise, exit three quadrants away
        let th: f64 = -0.3;
        let r = 19.0;
        let s = VehicleState::new(
            5.0,
            th + std::f64::consts::FRAC_PI_2,
            r * th.cos(),
            r * th.sin(),
        );
        let a = agent(None, Port::B, 1, s);
        assert_eq!(classify_stage(&a, &geom()).unwrap(), Stage::Passing);
    }

    #[test]
    fn ring_vehicle_near_exit_is_exiting() {
        let th: f64 = 40f64.to_radians();
        let r = 19.0;
        let s = VehicleState::new(
            5.0,
            th + std::f64::consts::FRAC_PI_2,
            r * th.cos(),
            r * th.sin(),
        );
        let a = agent(None, Port::D, 1, s);
        assert_eq!(classify_stage(&a, &geom()).unwrap(), Stage::Exiting);
    }

    #[test]
    fn off_lane_agent_fails_to_localize() {
        let err = VehicleAgent::new(
            "lost",
            Style::Normal,
            Some((Port::A, 0)),
            Port::B,
            0,
            VehicleState::new(5.0, 0.0, -60.0, 30.0),
            VehicleParameters::default(),
            &geom(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Localization(m) if m.contains("lost")));
    }

    #[test]
    fn stage_floor_prevents_regression() {
        let mut a = agent(
            Some((Port::A, 0)),
            Port::B,
            0,
            VehicleState::new(5.5, 0.0, -25.0, -2.45),
        );
        a.plan.stage_floor = Stage::Passing;
        assert_eq!(classify_stage(&a, &geom()).unwrap(), Stage::Passing);
    }
}
