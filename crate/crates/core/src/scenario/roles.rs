//! Role assignment: the lead vehicle and up to three neighbor vehicles of an
//! ego, each neighbor bound to the slot its payoff term refers to.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{wrap_angle, VehicleState};
use crate::payoff::Stage;
use crate::scenario::agent::{Role, VehicleAgent};
use crate::scenario::geometry::{LaneIndex, RoundaboutGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoleConfig {
    /// Neighbors farther than this center distance are ignored (m).
    pub interaction_radius: f64,
    /// Lookahead for the lead vehicle along the ego path (m).
    pub lv_window: f64,
    /// Arc window `[behind, ahead]` for the adjacent round-lane neighbor (m).
    pub adjacent_window: [f64; 2],
    /// Arc window `[behind, ahead]` around a merge point (m).
    pub merge_window: [f64; 2],
}

impl Default for RoleConfig {
    fn default() -> Self {
        Self {
            interaction_radius: 35.0,
            lv_window: 40.0,
            adjacent_window: [15.0, 25.0],
            merge_window: [5.0, 40.0],
        }
    }
}

impl RoleConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.interaction_radius,
            self.lv_window,
            self.adjacent_window[0],
            self.adjacent_window[1],
            self.merge_window[0],
            self.merge_window[1],
        ];
        if all.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || self.lv_window <= 0.0 {
            return Err(Error::Config(
                "roles: windows must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Roles of all other agents from one ego's perspective (indices into the agent list).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RoleMap {
    pub ego: usize,
    pub lv: Option<usize>,
    /// NV1..NV3 slots.
    pub nv: [Option<usize>; 3],
    pub iv: Vec<usize>,
}

impl RoleMap {
    pub fn role_of(&self, j: usize) -> Role {
        if j == self.ego {
            Role::HV
        } else if self.lv == Some(j) {
            Role::LV
        } else if self.nv.contains(&Some(j)) {
            Role::NV
        } else {
            Role::IV
        }
    }

    /// Present neighbors in slot order.
    pub fn neighbors(&self) -> impl Iterator<Item = usize> + '_ {
        self.nv.iter().flatten().copied()
    }
}

/// Round lane whose radius is closest to the agent's position.
pub fn nearest_ring(state: &VehicleState, geometry: &RoundaboutGeometry) -> LaneIndex {
    let r = state.x.hypot(state.y);
    if (r - geometry.inner_lane_radius).abs() <= (r - geometry.outer_lane_radius).abs() {
        0
    } else {
        1
    }
}

fn polar(state: &VehicleState) -> f64 {
    state.y.atan2(state.x)
}

fn time_to_conflict(ego: &VehicleState, other: &VehicleState) -> f64 {
    let (rx, ry) = (other.x - ego.x, other.y - ego.y);
    let dist = rx.hypot(ry);
    let (evx, evy) = (ego.vx * ego.phi.cos(), ego.vx * ego.phi.sin());
    let (ovx, ovy) = (other.vx * other.phi.cos(), other.vx * other.phi.sin());
    let closing = if dist > 0.0 {
        -(rx * (ovx - evx) + ry * (ovy - evy)) / dist
    } else {
        0.0
    };
    dist / closing.max(0.1)
}

fn in_window(arc: f64, window: [f64; 2]) -> bool {
    arc >= -window[0] && arc <= window[1]
}

/// Assigns LV, NV1..NV3 and IV roles for `ego`.
pub fn assign_roles(
    agents: &[VehicleAgent],
    ego: usize,
    geometry: &RoundaboutGeometry,
    cfg: &RoleConfig,
) -> RoleMap {
    let e = &agents[ego];
    let mut map = RoleMap {
        ego,
        ..Default::default()
    };
    let live: Vec<usize> = (0..agents.len())
        .filter(|&j| j != ego && !agents[j].finished)
        .collect();

    let mut best_lv: Option<(f64, usize)> = None;
    for &j in &live {
        let o = &agents[j].state;
        let proj = e
            .path()
            .project_near((o.x, o.y), None, e.station, 0.0, cfg.lv_window + 10.0);
        let ds = proj.s - e.station;
        if proj.dy.abs() < 0.5 * geometry.lane_width && ds > 0.0 && ds <= cfg.lv_window {
            let better = match best_lv {
                None => true,
                Some((d, k)) => ds < d || (ds == d && agents[j].id < agents[k].id),
            };
            if better {
                best_lv = Some((ds, j));
            }
        }
    }
    map.lv = best_lv.map(|(_, j)| j);

    let stage = e.geometric_stage().max(e.plan.stage_floor);
    let near: Vec<usize> = live
        .iter()
        .copied()
        .filter(|&j| {
            Some(j) != map.lv && e.state.distance_to(&agents[j].state) <= cfg.interaction_radius
        })
        .collect();
    let mut taken: Vec<usize> = Vec::new();
    let mut pick = |slot: usize, pred: &dyn Fn(&VehicleAgent) -> bool, map: &mut RoleMap| {
        let mut best: Option<(f64, usize)> = None;
        for &j in &near {
            if taken.contains(&j) || !pred(&agents[j]) {
                continue;
            }
            let t = time_to_conflict(&e.state, &agents[j].state);
            let better = match best {
                None => true,
                Some((bt, k)) => t < bt || (t == bt && agents[j].id < agents[k].id),
            };
            if better {
                best = Some((t, j));
            }
        }
        if let Some((_, j)) = best {
            taken.push(j);
            map.nv[slot] = Some(j);
        }
    };

    match (stage, e.entry()) {
        (Stage::Entering, Some((port, lane))) => {
            pick(
                0,
                &|o: &VehicleAgent| o.is_entering() && o.entry() == Some((port, 1 - lane)),
                &mut map,
            );
            for (slot, ring) in [(1, 1), (2, 0)] {
                let merge = geometry.entry_tangent_angle(port, lane, ring);
                let r = geometry.ring_radius(ring);
                pick(
                    slot,
                    &|o: &VehicleAgent| {
                        o.on_ring()
                            && nearest_ring(&o.state, geometry) == ring
                            && in_window(wrap_angle(merge - polar(&o.state)) * r, cfg.merge_window)
                    },
                    &mut map,
                );
            }
        }
        _ => {
            let ring = nearest_ring(&e.state, geometry);
            let theta = polar(&e.state);
            pick(
                0,
                &|o: &VehicleAgent| {
                    let r_o = geometry.ring_radius(1 - ring);
                    o.on_ring()
                        && nearest_ring(&o.state, geometry) != ring
                        && in_window(
                            wrap_angle(polar(&o.state) - theta) * r_o,
                            cfg.adjacent_window,
                        )
                },
                &mut map,
            );
            let r = geometry.ring_radius(ring);
            pick(
                1,
                &|o: &VehicleAgent| match o.entry() {
                    Some((port, lane)) if o.is_entering() => {
                        let merge = geometry.entry_tangent_angle(port, lane, ring);
                        in_window(wrap_angle(merge - theta) * r, cfg.merge_window)
                    }
                    _ => false,
                },
                &mut map,
            );
        }
    }

    map.iv = live
        .into_iter()
        .filter(|&j| Some(j) != map.lv && !map.nv.contains(&Some(j)))
        .collect();
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::VehicleParameters;
    use crate::payoff::Style;
    use crate::scenario::geometry::Port;

    fn geom() -> RoundaboutGeometry {
        RoundaboutGeometry::default()
    }

    fn on_entry(id: &str, port_lane: (Port, usize), x: f64, y: f64, vx: f64) -> VehicleAgent {
        VehicleAgent::new(
            id,
            Style::Normal,
            Some(port_lane),
            Port::B,
            port_lane.1,
            VehicleState::new(vx, 0.0, x, y),
            VehicleParameters::default(),
            &geom(),
        )
        .unwrap()
    }

    #[test]
    fn lone_vehicle_has_no_roles() {
        let agents = vec![on_entry("HV", (Port::A, 0), -25.0, -2.45, 5.0)];
        let m = assign_roles(&agents, 0, &geom(), &RoleConfig::default());
        assert_eq!(m.lv, None);
        assert_eq!(m.nv, [None; 3]);
        assert!(m.iv.is_empty());
    }

    #[test]
    fn same_lane_vehicle_ahead_is_lv() {
        let agents = vec![
            on_entry("HV", (Port::A, 0), -60.0, -2.45, 5.0),
            on_entry("X", (Port::A, 0), -50.0, -2.45, 5.0),
        ];
        let m = assign_roles(&agents, 0, &geom(), &RoleConfig::default());
        assert_eq!(m.lv, Some(1));
        assert_eq!(m.nv, [None; 3]);
        assert_eq!(m.role_of(1), Role::LV);
        // the follower sees nobody ahead
        let m = assign_roles(&agents, 1, &geom(), &RoleConfig::default());
        assert_eq!(m.lv, None);
    }

    #[test]
    fn parallel_entry_lane_is_first_slot() {
        let agents = vec![
            on_entry("HV", (Port::A, 0), -25.0, -2.45, 5.5),
            on_entry("NV1", (Port::A, 1), -28.0, -6.08, 4.0),
        ];
        let m = assign_roles(&agents, 0, &geom(), &RoleConfig::default());
        assert_eq!(m.nv[0], Some(1));
    }
}
