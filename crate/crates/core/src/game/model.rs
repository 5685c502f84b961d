//! The roundabout decision game for one simulation step: per-agent candidate
//! predictions, payoff tables and the cost model handed to the solvers.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::constraints::{self, ConstraintSample, LaneContext};
use crate::error::Result;
use crate::game::decision::{candidate_set, fallback_sequence, DecisionSequence};
use crate::game::solver::{Choice, CostModel};
use crate::game::{MpcWeights, Separation};
use crate::kinematics::{
    integrate_plant, wrap_angle, ControlInput, PredictionMatrices, VehicleState,
};
use crate::payoff::{
    comfort, efficiency, entering_lateral_coefficients, safety_gates, safety_lanekeep,
    safety_lateral_pair, safety_longitudinal, total_payoff, Behavior, OpponentPredictions,
    PayoffBreakdown, Stage, StyleWeights,
};
use crate::scenario::agent::VehicleAgent;
use crate::scenario::geometry::LaneIndex;
use crate::scenario::roles::{assign_roles, RoleMap};
use crate::scenario::tracking::{curve_speed_limit, tracking_steer};
use crate::scenario::ScenarioConfig;

/// Lateral offset from the plan lane beyond which a lane change is still in progress (m).
const LANE_CHANGE_SETTLED: f64 = 0.5;

/// Lane-error tolerance added to an allowance carried over from the free response (m, rad).
const LANE_SLACK: (f64, f64) = (0.02, 0.003);

/// Slowest speed at which a lane change may start (m/s).
const LANE_CHANGE_MIN_SPEED: f64 = 2.0;

/// Below this speed the steering command is frozen (m/s).
const STEER_MIN_SPEED: f64 = 0.5;

/// Predicted motion of every candidate of one agent.
#[derive(Debug, Clone)]
pub struct AgentPrediction {
    pub stage: Stage,
    pub candidates: Vec<DecisionSequence>,
    pub feasible: Vec<bool>,
    /// Index of the injected braking candidate, if no candidate was feasible.
    pub fallback: Option<usize>,
    /// Round lane each candidate steers toward.
    pub targets: Vec<LaneIndex>,
    /// `[candidate][p]`: state at step `k+p+1`.
    pub states: Vec<Vec<VehicleState>>,
    /// `[candidate][p]`: plant control applied at step `k+p`.
    pub controls: Vec<Vec<ControlInput>>,
    /// `[candidate][p]`: lateral and course error with respect to the target lane.
    pub lane_errors: Vec<Vec<(f64, f64)>>,
    /// Zero-increment, plan-keeping prediction used for non-strategic roles.
    pub default_states: Vec<VehicleState>,
    /// Merge maneuver assumed when the agent is not a player.
    pub default_alpha: i8,
}

impl AgentPrediction {
    pub fn n(&self) -> usize {
        self.candidates.len()
    }
}

/// Round lane of the route a behavior steers toward, or `None` if the
/// behavior is unavailable from the agent's situation.
pub fn behavior_target(
    agent: &VehicleAgent,
    stage: Stage,
    behavior: Behavior,
    plan_dy: f64,
) -> Option<LaneIndex> {
    let ring = agent.plan.ring;
    match stage {
        Stage::Entering => {
            if agent.plan.committed {
                (behavior.alpha == plan_alpha(ring)).then_some(ring)
            } else {
                match behavior.alpha {
                    -1 => Some(0),
                    1 => Some(1),
                    _ => Some(ring),
                }
            }
        }
        Stage::Passing | Stage::Exiting => {
            let settled = plan_dy.abs() <= LANE_CHANGE_SETTLED
                && agent.station < agent.path().markers.ring_end
                && agent.state.vx >= LANE_CHANGE_MIN_SPEED;
            match behavior.beta {
                0 => Some(ring),
                -1 if settled && ring == 1 => Some(0),
                1 if settled && ring == 0 => Some(1),
                _ => None,
            }
        }
    }
}

/// Merge maneuver that leads onto round lane `ring`.
pub fn plan_alpha(ring: LaneIndex) -> i8 {
    if ring == 0 {
        -1
    } else {
        1
    }
}

/// Behavior that continues the current plan.
pub fn keep_behavior(agent: &VehicleAgent, stage: Stage) -> Behavior {
    if stage == Stage::Entering && agent.plan.committed {
        Behavior::merge(plan_alpha(agent.plan.ring))
    } else {
        Behavior::KEEP
    }
}

struct BehaviorModel {
    target: LaneIndex,
    /// Free response with the lane assist re-evaluated at every step.
    nominal: Vec<VehicleState>,
    /// Controls of the free response.
    u_nom: Vec<ControlInput>,
    /// Lane errors of the free response.
    err_nom: Vec<(f64, f64)>,
    mats: PredictionMatrices,
    dy0: f64,
    dphi0: f64,
    /// Station on the target lane at the epoch start.
    s0: f64,
}

fn behavior_model(
    agent: &VehicleAgent,
    target: LaneIndex,
    cfg: &ScenarioConfig,
) -> Result<BehaviorModel> {
    let params = &agent.params;
    let proj = if target == agent.plan.ring {
        agent.path().project_near(
            (agent.state.x, agent.state.y),
            Some(agent.state.phi),
            agent.station,
            10.0,
            30.0,
        )
    } else {
        agent.project_on(target)
    };
    let path = &agent.paths[target];
    let steer = tracking_steer(
        &agent.state,
        agent.applied_steer,
        path,
        proj.s,
        params,
        cfg.bounds.ay_max,
        cfg.bounds.delta_max.rad(),
        &cfg.tracker,
    );
    let u_lin = ControlInput::new(agent.prev_control.ax, steer + agent.prev_control.delta_f);
    let np = cfg.horizon.np;
    let mut nominal = Vec::with_capacity(np);
    let mut u_nom = Vec::with_capacity(np);
    let mut err_nom = Vec::with_capacity(np);
    let mut x = agent.state;
    let mut u = u_lin;
    let mut s = proj.s;
    for p in 0..np {
        if p > 0 {
            let steer = tracking_steer(
                &x,
                u.delta_f,
                path,
                s,
                params,
                cfg.bounds.ay_max,
                cfg.bounds.delta_max.rad(),
                &cfg.tracker,
            );
            u = ControlInput::new(u.ax, steer + agent.prev_control.delta_f);
        }
        u_nom.push(u);
        x = integrate_plant(&x, &u, params, cfg.horizon.dt)?;
        let pr = path.project_near((x.x, x.y), Some(x.phi), s, 5.0, 10.0);
        s = pr.s;
        err_nom.push((
            pr.dy,
            wrap_angle(x.phi + params.sideslip(u.delta_f) - pr.tangent),
        ));
        nominal.push(x);
    }
    let mats = PredictionMatrices::at(&agent.state, &u_lin, params, cfg.horizon)?;
    Ok(BehaviorModel {
        target,
        nominal,
        u_nom,
        err_nom,
        mats,
        dy0: proj.dy,
        dphi0: wrap_angle(agent.state.phi + params.sideslip(agent.applied_steer) - proj.tangent),
        s0: proj.s,
    })
}

struct CandidateMotion {
    states: Vec<VehicleState>,
    controls: Vec<ControlInput>,
    lane_errors: Vec<(f64, f64)>,
    feasible: bool,
}

fn candidate_motion(
    agent: &VehicleAgent,
    bm: &BehaviorModel,
    seq: &DecisionSequence,
    cfg: &ScenarioConfig,
) -> Result<CandidateMotion> {
    let params = &agent.params;
    let np = cfg.horizon.np;
    let deltas = seq.deltas();
    let du = nalgebra::DVector::from_iterator(
        2 * deltas.len(),
        deltas.iter().flat_map(|d| [d.d_ax, d.d_delta_f]),
    );
    let dev = &bm.mats.d_bar * du;
    let mut states = Vec::with_capacity(np);
    let mut controls = Vec::with_capacity(np);
    let mut lane_errors = Vec::with_capacity(np);
    let mut samples = Vec::with_capacity(np);
    let mut offset = ControlInput::new(0.0, 0.0);
    let path = &agent.paths[bm.target];
    let mut station = bm.s0;
    // speed gained while a positive acceleration is ramped down at the jerk limit
    let jerk = cfg.bounds.dax_max / cfg.horizon.dt;
    let overshoot = |ax: f64| ax.max(0.0).powi(2) / (2.0 * jerk);
    // the full-brake sequence always satisfies the curve limit
    let nc = deltas.len();
    let brake_du =
        nalgebra::DVector::from_iterator(2 * nc, (0..nc).flat_map(|_| [-cfg.bounds.dax_max, 0.0]));
    let brake = &bm.mats.d_bar * brake_du;
    let mut last = (agent.state.x, agent.state.y);
    let mut steer_frozen = false;
    for p in 0..np {
        if p < deltas.len() {
            offset = offset.apply(deltas[p]);
            let vx = states
                .last()
                .map_or(agent.state.vx, |s: &VehicleState| s.vx);
            steer_frozen |= vx < STEER_MIN_SPEED && deltas[p].d_delta_f != 0.0;
        }
        let base = bm.u_nom[p];
        let u = ControlInput::new(base.ax + offset.ax, base.delta_f + offset.delta_f);
        let nom = &bm.nominal[p];
        let d = [dev[4 * p], dev[4 * p + 1], dev[4 * p + 2], dev[4 * p + 3]];
        let s = VehicleState::new(
            (nom.vx + d[0]).max(0.0),
            wrap_angle(nom.phi + d[1]),
            nom.x + d[2],
            nom.y + d[3],
        );
        let (sn, cs) = nom.phi.sin_cos();
        let along = cs * d[2] + sn * d[3];
        let across = -sn * d[2] + cs * d[3];
        let course_dev = d[1] + params.sideslip(u.delta_f) - params.sideslip(base.delta_f);
        let (dy_nom, dphi_nom) = bm.err_nom[p];
        let err = (dy_nom + across, wrap_angle(dphi_nom + course_dev));
        station += (s.x - last.0).hypot(s.y - last.1);
        last = (s.x, s.y);
        let limit = curve_speed_limit(path, station, cfg.bounds.ay_max, &cfg.tracker);
        samples.push(ConstraintSample {
            ds: along,
            lane_error: (seq.behavior().beta == 0).then_some(err),
            ax: u.ax,
            ay: params.lateral_acceleration(s.vx, u.delta_f),
            vx: s.vx,
            delta_f: u.delta_f,
            vx_limit: limit.is_finite().then(|| {
                let ax = base.ax - cfg.bounds.dax_max * (p + 1).min(nc) as f64;
                let reach = (nom.vx + brake[4 * p]).max(0.0) + overshoot(ax);
                limit.max(reach) - overshoot(u.ax)
            }),
        });
        states.push(s);
        controls.push(u);
        lane_errors.push(err);
    }
    let lane = LaneContext {
        dy_allowance: bm
            .err_nom
            .iter()
            .fold(bm.dy0.abs(), |m, e| m.max(e.0.abs()))
            + LANE_SLACK.0,
        dphi_allowance: bm
            .err_nom
            .iter()
            .fold(bm.dphi0.abs(), |m, e| m.max(e.1.abs()))
            + LANE_SLACK.1,
    };
    let report = constraints::check(&samples, &deltas, &cfg.bounds, &lane);
    Ok(CandidateMotion {
        states,
        controls,
        lane_errors,
        feasible: report.feasible && !steer_frozen,
    })
}

/// Predicts every candidate of agent `i` from the current snapshot.
pub fn predict_agent(
    agents: &[VehicleAgent],
    i: usize,
    cfg: &ScenarioConfig,
) -> Result<AgentPrediction> {
    let agent = &agents[i];
    let proj = agent.locate(&cfg.geometry)?;
    let mut probe = agent.clone();
    probe.station = proj.s;
    let stage = probe.geometric_stage().max(agent.plan.stage_floor);
    let nc = cfg.horizon.nc;
    let mut candidates = candidate_set(stage, &cfg.bounds, cfg.game.grid, nc)?;

    let mut models: Vec<(Behavior, Option<BehaviorModel>)> = Vec::new();
    let model_for =
        |b: Behavior, models: &mut Vec<(Behavior, Option<BehaviorModel>)>| -> Result<usize> {
            if let Some(k) = models.iter().position(|(mb, _)| *mb == b) {
                return Ok(k);
            }
            let m = match behavior_target(&probe, stage, b, proj.dy) {
                Some(t) => Some(behavior_model(&probe, t, cfg)?),
                None => None,
            };
            models.push((b, m));
            Ok(models.len() - 1)
        };

    let keep = keep_behavior(agent, stage);
    let keep_model = model_for(keep, &mut models)?;
    let default_states = match &models[keep_model].1 {
        Some(m) => m.nominal.clone(),
        None => unreachable!("continuing the plan is always available"),
    };

    let n = candidates.len();
    let mut pred = AgentPrediction {
        stage,
        candidates: Vec::new(),
        feasible: Vec::with_capacity(n + 1),
        fallback: None,
        targets: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
        controls: Vec::with_capacity(n + 1),
        lane_errors: Vec::with_capacity(n + 1),
        default_states: default_states.clone(),
        default_alpha: if stage == Stage::Entering {
            agent.plan.last_behavior.alpha
        } else {
            0
        },
    };
    let push = |pred: &mut AgentPrediction,
                bm: Option<&BehaviorModel>,
                seq: &DecisionSequence|
     -> Result<()> {
        match bm {
            Some(bm) => {
                let m = candidate_motion(&probe, bm, seq, cfg)?;
                pred.feasible.push(m.feasible);
                pred.targets.push(bm.target);
                pred.states.push(m.states);
                pred.controls.push(m.controls);
                pred.lane_errors.push(m.lane_errors);
            }
            None => {
                pred.feasible.push(false);
                pred.targets.push(agent.plan.ring);
                pred.states.push(default_states.clone());
                pred.controls.push(vec![agent.prev_control; cfg.horizon.np]);
                pred.lane_errors.push(vec![(0.0, 0.0); cfg.horizon.np]);
            }
        }
        Ok(())
    };
    for seq in &candidates {
        let k = model_for(seq.behavior(), &mut models)?;
        push(&mut pred, models[k].1.as_ref(), seq)?;
    }
    if !pred.feasible.iter().any(|&f| f) {
        let seq = fallback_sequence(&cfg.bounds, keep, nc);
        push(&mut pred, models[keep_model].1.as_ref(), &seq)?;
        *pred.feasible.last_mut().expect("just pushed") = true;
        pred.fallback = Some(candidates.len());
        candidates.push(seq);
    }
    pred.candidates = candidates;
    Ok(pred)
}

/// `[row][col][p]` contributions of one neighbor slot to a player's payoff;
/// the last column is the neighbor's default prediction.
#[derive(Debug)]
pub struct PairTable {
    cols: usize,
    np: usize,
    data: Vec<f64>,
    /// `[row * cols + col]`: separation cost of the pair.
    risk: Vec<f64>,
}

impl PairTable {
    fn at(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.cols + col) * self.np;
        &self.data[start..start + self.np]
    }

    fn risk(&self, row: usize, col: usize) -> f64 {
        self.risk[row * self.cols + col]
    }
}

/// Separation cost of `ego` against `other` over the horizon. Unless `yielding`,
/// the headway term only applies while `other` is ahead of `ego`.
pub fn separation_penalty(
    ego: &[VehicleState],
    other: &[VehicleState],
    sep: &Separation,
    collision_distance: f64,
    yielding: bool,
) -> f64 {
    if sep.weight == 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for (a, b) in ego.iter().zip(other) {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let d = dx.hypot(dy);
        let (vax, vay) = (a.vx * a.phi.cos(), a.vx * a.phi.sin());
        let (vbx, vby) = (b.vx * b.phi.cos(), b.vx * b.phi.sin());
        let ahead = yielding || dx * a.phi.cos() + dy * a.phi.sin() > 0.0;
        let closing = if ahead && d > 0.0 {
            -((vbx - vax) * dx + (vby - vay) * dy) / d
        } else {
            0.0
        };
        let safe = collision_distance + sep.margin + sep.headway * closing.max(0.0);
        sum += (safe - d).max(0.0).powi(2);
    }
    sep.weight * sum
}

/// Everything shared by the games of one simulation step.
pub struct StepContext<'a> {
    pub cfg: &'a ScenarioConfig,
    pub agents: &'a [VehicleAgent],
    pub predictions: Vec<Option<AgentPrediction>>,
    pub roles: Vec<RoleMap>,
    /// Lead trajectory used by the longitudinal safety term of each agent.
    pub leads: Vec<Option<Vec<VehicleState>>>,
    /// `[agent][candidate * np + p]`: payoff terms independent of neighbors.
    base: Vec<Vec<f64>>,
    /// `[agent][candidate]`: separation cost against vehicles outside the NV slots.
    risk: Vec<Vec<f64>>,
    tables: RefCell<HashMap<(usize, usize), Rc<PairTable>>>,
}

fn style_of(cfg: &ScenarioConfig, agent: &VehicleAgent) -> StyleWeights {
    cfg.styles.get(agent.style)
}

/// Virtual stationary obstacle at the yield point of an uncommitted entering agent.
fn yield_obstacle(agent: &VehicleAgent) -> Option<VehicleState> {
    let y = agent.path().markers.yield_station?;
    let ((x, yy), h, _) = agent.path().pose_at(y + agent.params.lv);
    Some(VehicleState::new(0.0, h, x, yy))
}

/// Slot weight of the lateral term for neighbor slot `k`.
fn lateral_coefficient(stage: Stage, own: Behavior, k: usize, neighbor_alpha: i8) -> f64 {
    match stage {
        Stage::Entering => safety_gates(own.alpha)[1] * entering_lateral_coefficients(own.alpha)[k],
        Stage::Passing | Stage::Exiting => match k {
            0 => f64::from(own.beta).powi(2),
            1 => f64::from(neighbor_alpha).powi(2),
            _ => 0.0,
        },
    }
}

impl<'a> StepContext<'a> {
    pub fn new(cfg: &'a ScenarioConfig, agents: &'a [VehicleAgent]) -> Result<Self> {
        let mut predictions = Vec::with_capacity(agents.len());
        for (i, a) in agents.iter().enumerate() {
            predictions.push(if a.finished {
                None
            } else {
                Some(predict_agent(agents, i, cfg)?)
            });
        }
        let roles: Vec<RoleMap> = (0..agents.len())
            .map(|i| assign_roles(agents, i, &cfg.geometry, &cfg.roles))
            .collect();
        let np = cfg.horizon.np;
        let mut leads = Vec::with_capacity(agents.len());
        let mut base = Vec::with_capacity(agents.len());
        for (i, a) in agents.iter().enumerate() {
            let Some(pred) = &predictions[i] else {
                leads.push(None);
                base.push(Vec::new());
                continue;
            };
            let lv = roles[i]
                .lv
                .and_then(|j| predictions[j].as_ref().map(|p| p.default_states.clone()));
            let lead = if pred.stage == Stage::Entering && !a.plan.committed {
                let obstacle = yield_obstacle(a);
                match (lv, obstacle) {
                    (Some(lv), Some(ob))
                        if lv[0].distance_to(&a.state) < ob.distance_to(&a.state) =>
                    {
                        Some(lv)
                    }
                    (_, Some(ob)) => Some(vec![ob; np]),
                    (lv, None) => lv,
                }
            } else {
                lv
            };
            let style = style_of(cfg, a);
            let w = &cfg.payoff;
            let mut b = vec![0.0; pred.n() * np];
            for c in 0..pred.n() {
                if !pred.feasible[c] {
                    continue;
                }
                let beh = pred.candidates[c].behavior();
                let m = if pred.stage == Stage::Entering {
                    beh.alpha
                } else {
                    beh.beta
                };
                let [g_log, _, g_lk] = safety_gates(m);
                for p in 0..np {
                    let s = &pred.states[c][p];
                    let u = &pred.controls[c][p];
                    let (dy, dphi) = pred.lane_errors[c][p];
                    let p_log =
                        safety_longitudinal(s, lead.as_ref().map(|l| &l[p]), w, a.params.lv);
                    let mut safety = g_log * p_log + g_lk * safety_lanekeep(dy, dphi, w);
                    for k in 0..3 {
                        if roles[i].nv[k].is_none() {
                            let coef = lateral_coefficient(pred.stage, beh, k, 0);
                            if coef != 0.0 {
                                safety += coef * safety_lateral_pair(s, None, w, a.params.lv);
                            }
                        }
                    }
                    let ay = a.params.lateral_acceleration(s.vx, u.delta_f);
                    b[c * np + p] = style.ks * safety
                        + style.kc * comfort(u.ax, ay, w)
                        + style.ke * efficiency(s.vx, w);
                }
            }
            leads.push(lead);
            base.push(b);
        }
        let sep = &cfg.game.separation;
        let dc = cfg.simulation.collision_distance;
        let mut risk = Vec::with_capacity(agents.len());
        for (i, a) in agents.iter().enumerate() {
            let Some(pred) = &predictions[i] else {
                risk.push(Vec::new());
                continue;
            };
            let yielding = pred.stage == Stage::Entering && !a.plan.committed;
            let others: Vec<&[VehicleState]> = (0..agents.len())
                .filter(|&j| j != i && !roles[i].nv.contains(&Some(j)))
                .filter(|&j| agents[j].state.distance_to(&a.state) < sep.range)
                .filter_map(|j| predictions[j].as_ref().map(|p| p.default_states.as_slice()))
                .collect();
            risk.push(
                (0..pred.n())
                    .map(|c| {
                        others
                            .iter()
                            .map(|o| separation_penalty(&pred.states[c], o, sep, dc, yielding))
                            .sum()
                    })
                    .collect(),
            );
        }
        Ok(Self {
            cfg,
            agents,
            predictions,
            roles,
            leads,
            base,
            risk,
            tables: RefCell::new(HashMap::new()),
        })
    }

    pub fn prediction(&self, i: usize) -> &AgentPrediction {
        self.predictions[i].as_ref().expect("live agent")
    }

    /// Contribution table of neighbor slot `k` of agent `i`.
    fn table(&self, i: usize, k: usize) -> Rc<PairTable> {
        if let Some(t) = self.tables.borrow().get(&(i, k)) {
            return Rc::clone(t);
        }
        let j = self.roles[i].nv[k].expect("occupied slot");
        let pi = self.prediction(i);
        let pj = self.prediction(j);
        let np = self.cfg.horizon.np;
        let a = &self.agents[i];
        let ks = style_of(self.cfg, a).ks;
        let w = &self.cfg.payoff;
        let cols = pj.n() + 1;
        let sep = &self.cfg.game.separation;
        let dc = self.cfg.simulation.collision_distance;
        let yielding = pi.stage == Stage::Entering && !a.plan.committed;
        let mut data = vec![0.0; pi.n() * cols * np];
        let mut risk = vec![0.0; pi.n() * cols];
        for r in 0..pi.n() {
            if !pi.feasible[r] {
                continue;
            }
            let own = pi.candidates[r].behavior();
            for col in 0..cols {
                let (traj, alpha) = if col == pj.n() {
                    (&pj.default_states, pj.default_alpha)
                } else {
                    if !pj.feasible[col] {
                        continue;
                    }
                    (&pj.states[col], pj.candidates[col].behavior().alpha)
                };
                risk[r * cols + col] = separation_penalty(&pi.states[r], traj, sep, dc, yielding);
                let coef = lateral_coefficient(pi.stage, own, k, alpha);
                if coef == 0.0 {
                    continue;
                }
                let start = (r * cols + col) * np;
                for p in 0..np {
                    data[start + p] = ks
                        * coef
                        * safety_lateral_pair(&pi.states[r][p], Some(&traj[p]), w, a.params.lv);
                }
            }
        }
        let t = Rc::new(PairTable {
            cols,
            np,
            data,
            risk,
        });
        self.tables.borrow_mut().insert((i, k), Rc::clone(&t));
        t
    }

    /// The decision game of `ego` and its neighbors.
    pub fn game(&self, ego: usize) -> RoundaboutGame<'_> {
        let mut players = vec![ego];
        let mut slots = vec![0usize];
        for (k, j) in self.roles[ego].nv.iter().enumerate() {
            if let Some(j) = j {
                if self.predictions[*j].is_some() {
                    players.push(*j);
                    slots.push(k + 1);
                }
            }
        }
        RoundaboutGame::new(self, players, &slots, &self.cfg.game.weights)
    }

    /// Payoff breakdown of agent `i` playing candidate `c` while the players
    /// of `game` act as in `joint`, computed directly from the payoff module.
    pub fn breakdown(
        &self,
        game: &RoundaboutGame<'_>,
        player: usize,
        joint: &[usize],
    ) -> Result<Vec<PayoffBreakdown>> {
        let i = game.players[player];
        let pred = self.prediction(i);
        let c = joint[player];
        let opponent = |j: usize| -> (&[VehicleState], i8) {
            let pj = self.prediction(j);
            match game.players.iter().position(|&x| x == j) {
                Some(q) => (
                    &pj.states[joint[q]],
                    pj.candidates[joint[q]].behavior().alpha,
                ),
                None => (&pj.default_states, pj.default_alpha),
            }
        };
        let nv = self.roles[i].nv.map(|j| j.map(|j| opponent(j).0));
        let nv2_alpha = self.roles[i].nv[1].map_or(0, |j| opponent(j).1);
        let ego: Vec<crate::payoff::EgoStep> = (0..self.cfg.horizon.np)
            .map(|p| crate::payoff::EgoStep {
                state: pred.states[c][p],
                control: pred.controls[c][p],
                dy: pred.lane_errors[c][p].0,
                dphi: pred.lane_errors[c][p].1,
            })
            .collect();
        let a = &self.agents[i];
        total_payoff(
            pred.stage,
            pred.candidates[c].behavior(),
            &ego,
            &OpponentPredictions {
                lv: self.leads[i].as_deref(),
                nv,
                nv2_alpha,
            },
            &style_of(self.cfg, a),
            &self.cfg.payoff,
            &a.params,
        )
    }
}

enum Link {
    Empty,
    Player(usize, Rc<PairTable>),
    Fixed(Rc<PairTable>),
}

/// Quadratic MPC cost of one player: `sum_p Q_p J_p^2 + sum_q ||u_hat_q||_R^2`
/// with `J = 1 / (P + eps)`.
pub fn mpc_cost(payoff: &[f64], seq: &DecisionSequence, weights: &MpcWeights, epsilon: f64) -> f64 {
    let mut cost = 0.0;
    for (p, &pv) in payoff.iter().enumerate() {
        let j = 1.0 / (pv + epsilon);
        cost += weights.q.at(p) * j * j;
    }
    cost + control_cost(seq, weights)
}

fn control_cost(seq: &DecisionSequence, w: &MpcWeights) -> f64 {
    seq.steps
        .iter()
        .map(|s| {
            w.r_ax * s.d_ax * s.d_ax
                + w.r_delta * s.d_delta_f * s.d_delta_f
                + w.r_alpha * f64::from(s.alpha).powi(2)
                + w.r_beta * f64::from(s.beta).powi(2)
        })
        .sum()
}

/// One epoch's game: player 0 is the ego, followed by its neighbors in slot order.
pub struct RoundaboutGame<'s> {
    ctx: &'s StepContext<'s>,
    pub players: Vec<usize>,
    links: Vec<[Link; 3]>,
    q: Vec<f64>,
    r: Vec<Vec<f64>>,
    omega: Vec<f64>,
    epsilon: f64,
    bounds: RefCell<Option<Bounds>>,
}

struct Bounds {
    /// `[player][candidate * np + p]`: slot contributions maximized over
    /// unassigned partners.
    pair_max: Vec<Vec<Vec<f64>>>,
    /// `[player][slot][candidate]`: separation cost minimized over unassigned partners.
    risk_min: Vec<Vec<Vec<f64>>>,
    unassigned: Vec<f64>,
}

impl<'s> RoundaboutGame<'s> {
    fn new(
        ctx: &'s StepContext<'s>,
        players: Vec<usize>,
        slots: &[usize],
        weights: &MpcWeights,
    ) -> Self {
        let np = ctx.cfg.horizon.np;
        let links = players
            .iter()
            .map(|&i| {
                [0, 1, 2].map(|k| match ctx.roles[i].nv[k] {
                    Some(j) if ctx.predictions[j].is_some() => {
                        let t = ctx.table(i, k);
                        match players.iter().position(|&x| x == j) {
                            Some(q) => Link::Player(q, t),
                            None => Link::Fixed(t),
                        }
                    }
                    _ => Link::Empty,
                })
            })
            .collect();
        let r = players
            .iter()
            .map(|&i| {
                ctx.prediction(i)
                    .candidates
                    .iter()
                    .map(|s| control_cost(s, weights))
                    .collect()
            })
            .collect();
        let omega = match weights.omega {
            Some(w) => slots.iter().map(|&s| w[s]).collect(),
            None => vec![1.0 / players.len() as f64; players.len()],
        };
        Self {
            ctx,
            players,
            links,
            q: (0..np).map(|p| weights.q.at(p)).collect(),
            r,
            omega,
            epsilon: ctx.cfg.payoff.epsilon,
            bounds: RefCell::new(None),
        }
    }

    fn prediction(&self, player: usize) -> &AgentPrediction {
        self.ctx.prediction(self.players[player])
    }

    /// Per-step payoff of `player` under `joint`.
    pub fn payoff(&self, player: usize, c: usize, joint: &[Choice]) -> Vec<f64> {
        let np = self.q.len();
        let i = self.players[player];
        let mut p = self.ctx.base[i][c * np..(c + 1) * np].to_vec();
        for link in &self.links[player] {
            let row = match link {
                Link::Empty => continue,
                Link::Fixed(t) => t.at(c, t.cols - 1),
                Link::Player(q, t) => match joint[*q] {
                    Choice::Candidate(col) => t.at(c, col),
                    Choice::Default => t.at(c, t.cols - 1),
                },
            };
            for (a, b) in p.iter_mut().zip(row) {
                *a += b;
            }
        }
        p
    }

    /// Separation cost of `player` under `joint`.
    pub fn risk(&self, player: usize, c: usize, joint: &[Choice]) -> f64 {
        let i = self.players[player];
        let mut r = self.ctx.risk[i][c];
        for link in &self.links[player] {
            r += match link {
                Link::Empty => 0.0,
                Link::Fixed(t) => t.risk(c, t.cols - 1),
                Link::Player(q, t) => match joint[*q] {
                    Choice::Candidate(col) => t.risk(c, col),
                    Choice::Default => t.risk(c, t.cols - 1),
                },
            };
        }
        r
    }

    fn cost_of(&self, player: usize, c: usize, payoff: &[f64], risk: f64) -> f64 {
        let mut cost = 0.0;
        for (q, pv) in self.q.iter().zip(payoff) {
            let j = 1.0 / (pv + self.epsilon);
            cost += q * j * j;
        }
        cost + self.r[player][c] + risk
    }

    fn ensure_bounds(&self) {
        if self.bounds.borrow().is_some() {
            return;
        }
        let np = self.q.len();
        let mut pair_max = Vec::new();
        let mut risk_min = Vec::new();
        let mut unassigned = Vec::new();
        for (player, links) in self.links.iter().enumerate() {
            let pred = self.prediction(player);
            let mut per_slot = Vec::new();
            let mut risk_slot = Vec::new();
            for link in links {
                let mut m = vec![0.0; pred.n() * np];
                let mut rm = vec![0.0; pred.n()];
                if let Link::Player(q, t) = link {
                    let partner = self.prediction(*q);
                    for c in 0..pred.n() {
                        rm[c] = f64::INFINITY;
                        for col in (0..partner.n()).filter(|&col| partner.feasible[col]) {
                            rm[c] = rm[c].min(t.risk(c, col));
                            for (p, v) in t.at(c, col).iter().enumerate() {
                                let slot = &mut m[c * np + p];
                                *slot = f64::max(*slot, *v);
                            }
                        }
                    }
                }
                per_slot.push(m);
                risk_slot.push(rm);
            }
            let mut best = f64::INFINITY;
            for c in (0..pred.n()).filter(|&c| pred.feasible[c]) {
                let (p, r) = self.optimistic(player, c, &per_slot, &risk_slot, &[]);
                best = best.min(self.cost_of(player, c, &p, r));
            }
            pair_max.push(per_slot);
            risk_min.push(risk_slot);
            unassigned.push(best);
        }
        *self.bounds.borrow_mut() = Some(Bounds {
            pair_max,
            risk_min,
            unassigned,
        });
    }

    /// Largest payoff and smallest separation cost of candidate `c` over the
    /// partners left unassigned in `partial`.
    fn optimistic(
        &self,
        player: usize,
        c: usize,
        pair_max: &[Vec<f64>],
        risk_min: &[Vec<f64>],
        partial: &[Option<usize>],
    ) -> (Vec<f64>, f64) {
        let np = self.q.len();
        let i = self.players[player];
        let mut p = self.ctx.base[i][c * np..(c + 1) * np].to_vec();
        let mut risk = self.ctx.risk[i][c];
        for (k, link) in self.links[player].iter().enumerate() {
            let (row, r): (&[f64], f64) = match link {
                Link::Empty => continue,
                Link::Fixed(t) => (t.at(c, t.cols - 1), t.risk(c, t.cols - 1)),
                Link::Player(q, t) => match partial.get(*q).copied().flatten() {
                    Some(col) => (t.at(c, col), t.risk(c, col)),
                    None => (&pair_max[k][c * np..(c + 1) * np], risk_min[k][c]),
                },
            };
            for (a, b) in p.iter_mut().zip(row) {
                *a += b;
            }
            risk += r;
        }
        (p, risk)
    }
}

impl CostModel for RoundaboutGame<'_> {
    fn n_players(&self) -> usize {
        self.players.len()
    }

    fn candidates(&self, player: usize) -> &[DecisionSequence] {
        &self.prediction(player).candidates
    }

    fn feasible(&self, player: usize, candidate: usize) -> bool {
        self.prediction(player).feasible[candidate]
    }

    fn cost(&self, player: usize, joint: &[Choice]) -> f64 {
        let Choice::Candidate(c) = joint[player] else {
            return f64::INFINITY;
        };
        if !self.feasible(player, c) {
            return f64::INFINITY;
        }
        let p = self.payoff(player, c, joint);
        self.cost_of(player, c, &p, self.risk(player, c, joint))
    }

    fn cost_lower_bound(&self, player: usize, partial: &[Option<usize>]) -> f64 {
        self.ensure_bounds();
        let bounds = self.bounds.borrow();
        let b = bounds.as_ref().expect("bounds computed");
        match partial[player] {
            None => b.unassigned[player],
            Some(c) => {
                let (p, r) =
                    self.optimistic(player, c, &b.pair_max[player], &b.risk_min[player], partial);
                self.cost_of(player, c, &p, r)
            }
        }
    }

    fn weight(&self, player: usize) -> f64 {
        self.omega[player]
    }

    fn is_fallback(&self, player: usize, candidate: usize) -> bool {
        self.prediction(player).fallback == Some(candidate)
    }
}
