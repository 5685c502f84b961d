//! Exact solvers over finite candidate sets.
//!
//! Player 0 is the leader (the ego); the others are followers. A player's
//! cost may depend on the choices of any other player, where
//! [`Choice::Default`] stands for the player's default prediction.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::game::decision::DecisionSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Choice {
    Default,
    Candidate(usize),
}

/// A finite game: candidates, feasibility and per-player costs.
pub trait CostModel {
    fn n_players(&self) -> usize;

    fn candidates(&self, player: usize) -> &[DecisionSequence];

    fn feasible(&self, player: usize, candidate: usize) -> bool;

    /// Cost of `player` when every player acts as in `joint`.
    fn cost(&self, player: usize, joint: &[Choice]) -> f64;

    /// Lower bound on the cost of `player` over every completion of `partial`,
    /// where `None` ranges over the feasible candidates of that player.
    fn cost_lower_bound(&self, _player: usize, _partial: &[Option<usize>]) -> f64 {
        f64::NEG_INFINITY
    }

    /// Coalition allocation coefficient.
    fn weight(&self, _player: usize) -> f64 {
        1.0 / self.n_players() as f64
    }

    /// Whether a candidate is the braking fallback injected for a player
    /// without any feasible option.
    fn is_fallback(&self, _player: usize, _candidate: usize) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Cost evaluations performed.
    pub evaluations: usize,
    /// Candidates rejected by the constraint check, over all players.
    pub infeasible: usize,
    pub fallback: bool,
    /// Wall time of the solve (s).
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameOutcome {
    /// Selected candidate index per player.
    pub choices: Vec<usize>,
    pub sequences: Vec<DecisionSequence>,
    /// Cost of each player at the selected joint decision.
    pub costs: Vec<f64>,
    /// Coalition-weighted sum of `costs`.
    pub weighted_cost: f64,
    pub diagnostics: Diagnostics,
}

/// Candidates of `player` in tie-break order: preference, then index.
pub fn ranked_candidates<M: CostModel + ?Sized>(model: &M, player: usize) -> Vec<usize> {
    let cands = model.candidates(player);
    let mut idx: Vec<usize> = (0..cands.len())
        .filter(|&c| model.feasible(player, c))
        .collect();
    idx.sort_by(|&a, &b| cands[a].preference(&cands[b]).then(a.cmp(&b)));
    idx
}

/// Weighted coalition cost of a fully specified joint decision.
pub fn weighted_cost<M: CostModel + ?Sized>(model: &M, joint: &[usize]) -> f64 {
    let choice: Vec<Choice> = joint.iter().map(|&c| Choice::Candidate(c)).collect();
    (0..model.n_players())
        .map(|i| model.weight(i) * model.cost(i, &choice))
        .sum()
}

fn check_inputs<M: CostModel + ?Sized>(model: &M) -> Result<Vec<Vec<usize>>> {
    if model.n_players() == 0 {
        return Err(Error::InvalidInput(
            "a game needs at least one player".into(),
        ));
    }
    let ranked: Vec<Vec<usize>> = (0..model.n_players())
        .map(|i| ranked_candidates(model, i))
        .collect();
    if let Some(i) = ranked.iter().position(Vec::is_empty) {
        return Err(Error::InvalidInput(format!(
            "player {i} has no feasible candidate"
        )));
    }
    Ok(ranked)
}

fn finish<M: CostModel + ?Sized>(
    model: &M,
    choices: Vec<usize>,
    evaluations: usize,
    start: Instant,
) -> GameOutcome {
    let joint: Vec<Choice> = choices.iter().map(|&c| Choice::Candidate(c)).collect();
    let costs: Vec<f64> = (0..model.n_players())
        .map(|i| model.cost(i, &joint))
        .collect();
    let weighted = (0..model.n_players())
        .map(|i| model.weight(i) * costs[i])
        .sum();
    let infeasible = (0..model.n_players())
        .map(|i| {
            (0..model.candidates(i).len())
                .filter(|&c| !model.feasible(i, c))
                .count()
        })
        .sum();
    let fallback = choices
        .iter()
        .enumerate()
        .any(|(i, &c)| model.is_fallback(i, c));
    GameOutcome {
        sequences: choices
            .iter()
            .enumerate()
            .map(|(i, &c)| model.candidates(i)[c].clone())
            .collect(),
        choices,
        costs,
        weighted_cost: weighted,
        diagnostics: Diagnostics {
            evaluations: evaluations + model.n_players(),
            infeasible,
            fallback,
            wall_time: start.elapsed().as_secs_f64(),
        },
    }
}

/// Leader-follower solution with decoupled followers.
///
/// For each leader candidate every follower best-responds with the other
/// followers at their default; the leader minimizes its worst cost over the
/// product of the followers' best-response sets. Followers then play the
/// preferred element of their best-response set.
pub fn solve_stackelberg<M: CostModel + ?Sized>(model: &M) -> Result<GameOutcome> {
    let start = Instant::now();
    let ranked = check_inputs(model)?;
    let n = model.n_players();
    let mut evaluations = 0usize;
    let mut best: Option<(f64, usize, Vec<Vec<usize>>)> = None;

    for &l in &ranked[0] {
        let mut responses: Vec<Vec<usize>> = Vec::with_capacity(n - 1);
        for f in 1..n {
            let mut joint = vec![Choice::Default; n];
            joint[0] = Choice::Candidate(l);
            let mut min = f64::INFINITY;
            let mut set = Vec::new();
            for &c in &ranked[f] {
                joint[f] = Choice::Candidate(c);
                let cost = model.cost(f, &joint);
                evaluations += 1;
                match cost.partial_cmp(&min) {
                    Some(Ordering::Less) => {
                        min = cost;
                        set.clear();
                        set.push(c);
                    }
                    Some(Ordering::Equal) => set.push(c),
                    _ => {}
                }
            }
            if set.is_empty() {
                // every cost is NaN or +inf: fall back to the preferred candidate
                set.push(ranked[f][0]);
            }
            responses.push(set);
        }

        let mut worst = f64::NEG_INFINITY;
        let mut joint = vec![Choice::Default; n];
        joint[0] = Choice::Candidate(l);
        let mut counter = vec![0usize; n - 1];
        loop {
            for f in 1..n {
                joint[f] = Choice::Candidate(responses[f - 1][counter[f - 1]]);
            }
            let cost = model.cost(0, &joint);
            evaluations += 1;
            if cost > worst || cost.is_nan() {
                worst = if cost.is_nan() { f64::INFINITY } else { cost };
            }
            let mut k = 0;
            while k < n - 1 {
                counter[k] += 1;
                if counter[k] < responses[k].len() {
                    break;
                }
                counter[k] = 0;
                k += 1;
            }
            if k == n - 1 {
                break;
            }
        }

        // candidates arrive in preference order, so only strict improvement replaces
        if best.as_ref().is_none_or(|(w, _, _)| worst < *w) {
            best = Some((worst, l, responses));
        }
    }

    let (_, leader, responses) = best.expect("leader has a feasible candidate");
    let mut choices = vec![leader];
    choices.extend(responses.iter().map(|set| set[0]));
    Ok(finish(model, choices, evaluations, start))
}

/// Joint minimization of the weighted cost over the full candidate product
/// by depth-first branch and bound.
///
/// Candidates are explored in preference order per player, so among joint
/// decisions of equal cost the lexicographically preferred one is returned.
pub fn solve_grand_coalition<M: CostModel + ?Sized>(model: &M) -> Result<GameOutcome> {
    let start = Instant::now();
    let ranked = check_inputs(model)?;
    let n = model.n_players();
    let weights: Vec<f64> = (0..n).map(|i| model.weight(i)).collect();

    struct Search<'a, M: ?Sized> {
        model: &'a M,
        ranked: &'a [Vec<usize>],
        weights: &'a [f64],
        partial: Vec<Option<usize>>,
        best: f64,
        best_joint: Option<Vec<usize>>,
        evaluations: usize,
    }

    impl<M: CostModel + ?Sized> Search<'_, M> {
        fn bound(&self) -> f64 {
            (0..self.partial.len())
                .map(|i| self.weights[i] * self.model.cost_lower_bound(i, &self.partial))
                .sum()
        }

        fn prunable(&self, bound: f64) -> bool {
            // a true lower bound may carry rounding; never prune near-ties
            bound > self.best + 1e-12 * self.best.abs()
        }

        fn descend(&mut self, depth: usize) {
            let n = self.partial.len();
            if depth == n {
                let joint: Vec<Choice> = self
                    .partial
                    .iter()
                    .map(|c| Choice::Candidate(c.unwrap()))
                    .collect();
                let mut total = 0.0;
                for i in 0..n {
                    total += self.weights[i] * self.model.cost(i, &joint);
                }
                self.evaluations += n;
                if total < self.best || (self.best_joint.is_none() && !total.is_nan()) {
                    self.best = total;
                    self.best_joint = Some(self.partial.iter().map(|c| c.unwrap()).collect());
                }
                return;
            }
            for &c in &self.ranked[depth] {
                self.partial[depth] = Some(c);
                if depth + 1 < n && self.best.is_finite() && self.prunable(self.bound()) {
                    continue;
                }
                self.descend(depth + 1);
            }
            self.partial[depth] = None;
        }
    }

    let mut search = Search {
        model,
        ranked: &ranked,
        weights: &weights,
        partial: vec![None; n],
        best: f64::INFINITY,
        best_joint: None,
        evaluations: 0,
    };
    search.descend(0);
    let choices = search
        .best_joint
        .unwrap_or_else(|| ranked.iter().map(|r| r[0]).collect());
    Ok(finish(model, choices, search.evaluations, start))
}
