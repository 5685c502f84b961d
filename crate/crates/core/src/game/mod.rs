//! Per-epoch decision game: candidate generation, the MPC cost and the
//! Stackelberg and grand-coalition solvers.

mod config;
mod decision;
mod model;
mod solver;

pub use config::{GameConfig, MpcWeights, QWeight, Separation};
pub use decision::{
    candidate_set, fallback_sequence, grid_levels, stage_behaviors, DecisionSequence,
    DecisionVector,
};
pub use model::{
    behavior_target, keep_behavior, mpc_cost, plan_alpha, predict_agent, separation_penalty,
    AgentPrediction, RoundaboutGame, StepContext,
};
pub use solver::{
    ranked_candidates, solve_grand_coalition, solve_stackelberg, weighted_cost, Choice, CostModel,
    Diagnostics, GameOutcome,
};
