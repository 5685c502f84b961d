//! The closed loop: per-agent decision epochs, first-decision application and
//! plant integration.

use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::game::{
    solve_grand_coalition, solve_stackelberg, DecisionVector, GameOutcome, RoundaboutGame,
    StepContext,
};
use crate::kinematics::{integrate_plant, ControlInput, VehicleState};
use crate::payoff::{PayoffBreakdown, Stage, Style};
use crate::scenario::geometry::{LaneIndex, Port};
use crate::scenario::{ScenarioConfig, SolverKind, VehicleAgent};

/// Speed at or below which a vehicle counts as stopped (m/s).
const STANDSTILL: f64 = 1e-6;

/// Neighbor ids seen by an agent at one step.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoleSummary {
    pub lv: Option<String>,
    pub nv: [Option<String>; 3],
}

/// One agent at one step: the state at `t` and what it did over `[t, t + dt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub step: usize,
    pub t: f64,
    pub state: VehicleState,
    /// Decision-level control `u(k) = u(k-1) + du(k)`.
    pub control: ControlInput,
    /// Steering angle applied to the plant, lane assist included (rad).
    pub plant_steer: f64,
    /// Lateral acceleration from the applied steering (m/s^2).
    pub ay: f64,
    pub decision: DecisionVector,
    pub stage: Stage,
    /// Round lane of the plan after the decision.
    pub ring: LaneIndex,
    pub roles: RoleSummary,
    /// Payoff of the executed candidate at the first predicted step.
    pub payoff: PayoffBreakdown,
    /// False when the braking fallback was executed.
    pub feasible: bool,
    /// Wall time of the epoch, prediction share included (s).
    pub solve_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub id: String,
    pub style: Style,
    pub exit: Port,
    pub records: Vec<AgentRecord>,
    /// Time the route was completed (s).
    pub finished_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    /// Every route completed.
    Completed {
        t: f64,
    },
    /// The configured duration elapsed.
    Duration {
        t: f64,
    },
    Collision {
        t: f64,
        a: String,
        b: String,
        distance: f64,
    },
    Localization {
        t: f64,
        message: String,
    },
}

impl Termination {
    pub fn is_collision(&self) -> bool {
        matches!(self, Termination::Collision { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationLog {
    pub scenario: String,
    pub solver: SolverKind,
    pub dt: f64,
    /// Center distance below which two vehicles collide (m).
    pub collision_distance: f64,
    pub agents: Vec<AgentTrack>,
    pub termination: Termination,
}

impl SimulationLog {
    pub fn fallback_used(&self) -> bool {
        self.agents
            .iter()
            .flat_map(|a| &a.records)
            .any(|r| !r.feasible)
    }

    pub fn steps(&self) -> usize {
        self.agents
            .iter()
            .filter_map(|a| a.records.last())
            .map(|r| r.step + 1)
            .max()
            .unwrap_or(0)
    }
}

/// Result of one agent's decision epoch.
struct Epoch {
    outcome: GameOutcome,
    payoff: PayoffBreakdown,
    roles: RoleSummary,
}

fn solve_epoch(
    ctx: &StepContext<'_>,
    ego: usize,
    solver: SolverKind,
    observer: &mut Observer<'_>,
) -> Result<Epoch> {
    let game = ctx.game(ego);
    let outcome = match solver {
        SolverKind::Stackelberg => solve_stackelberg(&game)?,
        SolverKind::GrandCoalition => solve_grand_coalition(&game)?,
    };
    observer(&game, &outcome);
    let payoff = ctx.breakdown(&game, 0, &outcome.choices)?[0];
    let id = |j: Option<usize>| j.map(|j| ctx.agents[j].id.clone());
    let roles = RoleSummary {
        lv: id(ctx.roles[ego].lv),
        nv: ctx.roles[ego].nv.map(id),
    };
    Ok(Epoch {
        outcome,
        payoff,
        roles,
    })
}

/// Applies the first decision of `agent`'s epoch and advances it one step.
fn advance(
    agent: &mut VehicleAgent,
    ctx: &StepContext<'_>,
    i: usize,
    epoch: &Epoch,
    cfg: &ScenarioConfig,
) -> Result<()> {
    let pred = ctx.prediction(i);
    let c = epoch.outcome.choices[0];
    let first = epoch.outcome.sequences[0].first();
    let u = pred.controls[c][0];
    let target = pred.targets[c];
    agent.state = integrate_plant(&agent.state, &u, &agent.params, cfg.horizon.dt)?;
    // A stopped vehicle holds with zero commanded acceleration.
    let ax = if agent.state.vx <= STANDSTILL && u.ax < 0.0 {
        0.0
    } else {
        u.ax
    };
    agent.prev_control = ControlInput::new(ax, agent.prev_control.delta_f + first.d_delta_f);
    agent.applied_steer = u.delta_f;
    let behavior = first.behavior();
    let retarget = match pred.stage {
        Stage::Entering => !agent.plan.committed && behavior.alpha != 0,
        Stage::Passing | Stage::Exiting => behavior.beta != 0,
    };
    if retarget {
        agent.switch_ring(target);
    }
    agent.plan.last_behavior = behavior;
    agent.plan.stage_floor = agent.plan.stage_floor.max(pred.stage);
    let proj = agent.locate(&cfg.geometry)?;
    agent.station = proj.s;
    agent.plan.committed |= agent.past_yield();
    agent.plan.stage_floor = agent.plan.stage_floor.max(agent.geometric_stage());
    Ok(())
}

/// Callback receiving each solved epoch game and its outcome.
pub type Observer<'o> = dyn FnMut(&RoundaboutGame<'_>, &GameOutcome) + 'o;

/// Runs the scenario with the given solver until every route is complete,
/// the duration elapses, or the run fails.
pub fn run(cfg: &ScenarioConfig, solver: SolverKind) -> Result<SimulationLog> {
    run_observed(cfg, solver, &mut |_, _| {})
}

/// Like [`run`], calling `observer` after every epoch solve.
pub fn run_observed(
    cfg: &ScenarioConfig,
    solver: SolverKind,
    observer: &mut Observer<'_>,
) -> Result<SimulationLog> {
    cfg.validate()?;
    let mut agents = cfg.build_agents()?;
    let dt = cfg.horizon.dt;
    let steps = (cfg.duration / dt).round() as usize;
    let mut tracks: Vec<AgentTrack> = agents
        .iter()
        .map(|a| AgentTrack {
            id: a.id.clone(),
            style: a.style,
            exit: a.route.exit,
            records: Vec::new(),
            finished_at: None,
        })
        .collect();
    let mut termination = Termination::Duration {
        t: steps as f64 * dt,
    };

    'steps: for k in 0..steps {
        let t = k as f64 * dt;
        let live: Vec<usize> = (0..agents.len()).filter(|&i| !agents[i].finished).collect();
        if live.is_empty() {
            termination = Termination::Completed { t };
            break;
        }
        let start = Instant::now();
        let ctx = match StepContext::new(cfg, &agents) {
            Ok(ctx) => ctx,
            Err(Error::Localization(message)) => {
                termination = Termination::Localization { t, message };
                break;
            }
            Err(e) => return Err(e),
        };
        let shared = start.elapsed().as_secs_f64() / live.len() as f64;
        let mut epochs = Vec::with_capacity(live.len());
        for &i in &live {
            let started = Instant::now();
            let epoch = solve_epoch(&ctx, i, solver, observer)?;
            epochs.push((i, epoch, shared + started.elapsed().as_secs_f64()));
        }

        let mut next = agents.clone();
        for (i, epoch, time) in &epochs {
            let a = &agents[*i];
            let pred = ctx.prediction(*i);
            let c = epoch.outcome.choices[0];
            let first = epoch.outcome.sequences[0].first();
            match advance(&mut next[*i], &ctx, *i, epoch, cfg) {
                Ok(()) => {}
                Err(Error::Localization(message)) => {
                    termination = Termination::Localization {
                        t: (k + 1) as f64 * dt,
                        message,
                    };
                    break 'steps;
                }
                Err(e) => return Err(e),
            }
            tracks[*i].records.push(AgentRecord {
                step: k,
                t,
                state: a.state,
                control: ControlInput::new(
                    pred.controls[c][0].ax,
                    a.prev_control.delta_f + first.d_delta_f,
                ),
                plant_steer: pred.controls[c][0].delta_f,
                ay: a
                    .params
                    .lateral_acceleration(a.state.vx, pred.controls[c][0].delta_f),
                decision: first,
                stage: pred.stage,
                ring: next[*i].plan.ring,
                roles: epoch.roles.clone(),
                payoff: epoch.payoff,
                feasible: pred.fallback != Some(c),
                solve_time: *time,
            });
        }
        drop(ctx);
        agents = next;

        let t_next = (k + 1) as f64 * dt;
        for i in live.iter().copied() {
            let a = &mut agents[i];
            if a.station >= a.completion_station(cfg.simulation.completion_distance) {
                a.finished = true;
                tracks[i].finished_at = Some(t_next);
            }
        }
        for (n, &i) in live.iter().enumerate() {
            for &j in &live[n + 1..] {
                let d = agents[i].state.distance_to(&agents[j].state);
                if d < cfg.simulation.collision_distance {
                    termination = Termination::Collision {
                        t: t_next,
                        a: agents[i].id.clone(),
                        b: agents[j].id.clone(),
                        distance: d,
                    };
                    break 'steps;
                }
            }
        }
        if agents.iter().all(|a| a.finished) {
            termination = Termination::Completed { t: t_next };
            break;
        }
    }

    Ok(SimulationLog {
        scenario: cfg.name.clone(),
        solver,
        dt,
        collision_distance: cfg.simulation.collision_distance,
        agents: tracks,
        termination,
    })
}
