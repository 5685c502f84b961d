//! Explicit-table games and brute-force reference solvers shared by the test targets.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use roundabout_core::game::{Choice, CostModel, DecisionSequence};
use roundabout_core::kinematics::ControlDelta;
use roundabout_core::payoff::Behavior;

/// Explicit cost table over the joint choices, `Default` included.
pub struct TableGame {
    /// Candidates per player, listed in preference order.
    pub cands: Vec<Vec<DecisionSequence>>,
    pub feasible: Vec<Vec<bool>>,
    /// `cost[player][joint index]`, where each choice is `0` for the default
    /// and `c + 1` for candidate `c`.
    pub cost: Vec<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
    pub bound: bool,
}

pub fn sequences(n: usize) -> Vec<DecisionSequence> {
    (0..n)
        .map(|c| {
            DecisionSequence::constant(ControlDelta::new(0.1 * c as f64, 0.0), Behavior::KEEP, 1)
        })
        .collect()
}

impl TableGame {
    pub fn random(rng: &mut ChaCha8Rng, players: usize, max_cands: usize, levels: u32) -> Self {
        let sizes: Vec<usize> = (0..players)
            .map(|_| rng.random_range(1..=max_cands))
            .collect();
        let feasible = sizes
            .iter()
            .map(|&m| {
                let mut f: Vec<bool> = (0..m).map(|_| rng.random_bool(0.85)).collect();
                let keep = rng.random_range(0..m);
                f[keep] = true;
                f
            })
            .collect();
        let joints: usize = sizes.iter().map(|m| m + 1).product();
        let cost = (0..players)
            .map(|_| {
                (0..joints)
                    .map(|_| f64::from(rng.random_range(0..levels)))
                    .collect()
            })
            .collect();
        TableGame {
            cands: sizes.iter().map(|&m| sequences(m)).collect(),
            feasible,
            cost,
            weights: None,
            bound: false,
        }
    }

    pub fn index(&self, joint: &[Choice]) -> usize {
        let mut idx = 0;
        for (i, c) in joint.iter().enumerate() {
            let v = match c {
                Choice::Default => 0,
                Choice::Candidate(c) => c + 1,
            };
            idx = idx * (self.cands[i].len() + 1) + v;
        }
        idx
    }

    pub fn feasible_of(&self, player: usize) -> Vec<usize> {
        (0..self.cands[player].len())
            .filter(|&c| self.feasible[player][c])
            .collect()
    }

    pub fn total(&self, joint: &[usize]) -> f64 {
        let choice: Vec<Choice> = joint.iter().map(|&c| Choice::Candidate(c)).collect();
        (0..self.n_players())
            .map(|i| self.weight(i) * self.cost(i, &choice))
            .sum()
    }
}

impl CostModel for TableGame {
    fn n_players(&self) -> usize {
        self.cands.len()
    }

    fn candidates(&self, player: usize) -> &[DecisionSequence] {
        &self.cands[player]
    }

    fn feasible(&self, player: usize, candidate: usize) -> bool {
        self.feasible[player][candidate]
    }

    fn cost(&self, player: usize, joint: &[Choice]) -> f64 {
        self.cost[player][self.index(joint)]
    }

    fn cost_lower_bound(&self, player: usize, partial: &[Option<usize>]) -> f64 {
        if !self.bound {
            return f64::NEG_INFINITY;
        }
        // exact minimum over the completions of `partial`
        let options: Vec<Vec<usize>> = partial
            .iter()
            .enumerate()
            .map(|(i, p)| p.map_or_else(|| self.feasible_of(i), |c| vec![c]))
            .collect();
        product(&options)
            .iter()
            .map(|j| {
                let choice: Vec<Choice> = j.iter().map(|&c| Choice::Candidate(c)).collect();
                self.cost(player, &choice)
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn weight(&self, player: usize) -> f64 {
        self.weights
            .as_ref()
            .map_or(1.0 / self.n_players() as f64, |w| w[player])
    }
}

/// Lexicographic product, first player outermost.
pub fn product(options: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for opts in options {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                opts.iter().map(move |&c| {
                    let mut v = prefix.clone();
                    v.push(c);
                    v
                })
            })
            .collect();
    }
    out
}

/// Reference Stackelberg solution by full enumeration.
pub fn brute_stackelberg(g: &TableGame) -> Vec<usize> {
    let n = g.n_players();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for l in g.feasible_of(0) {
        let mut responses = Vec::new();
        for f in 1..n {
            let cost_of = |c: usize| {
                let mut joint = vec![Choice::Default; n];
                joint[0] = Choice::Candidate(l);
                joint[f] = Choice::Candidate(c);
                g.cost(f, &joint)
            };
            let feas = g.feasible_of(f);
            let min = feas
                .iter()
                .map(|&c| cost_of(c))
                .fold(f64::INFINITY, f64::min);
            responses.push(
                feas.into_iter()
                    .filter(|&c| cost_of(c) == min)
                    .collect::<Vec<_>>(),
            );
        }
        let worst = product(&responses)
            .iter()
            .map(|r| {
                let mut joint = vec![Choice::Candidate(l)];
                joint.extend(r.iter().map(|&c| Choice::Candidate(c)));
                g.cost(0, &joint)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if best.as_ref().is_none_or(|(w, _)| worst < *w) {
            let mut choice = vec![l];
            choice.extend(responses.iter().map(|r| r[0]));
            best = Some((worst, choice));
        }
    }
    best.unwrap().1
}

/// Reference coalition solution: first joint of minimal weighted cost in
/// lexicographic preference order.
pub fn brute_coalition(g: &TableGame) -> Vec<usize> {
    let options: Vec<Vec<usize>> = (0..g.n_players()).map(|i| g.feasible_of(i)).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for j in product(&options) {
        let t = g.total(&j);
        if best.as_ref().is_none_or(|(b, _)| t < *b) {
            best = Some((t, j));
        }
    }
    best.unwrap().1
}
