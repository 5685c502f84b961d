mod common;

use common::{brute_coalition, brute_stackelberg, product, sequences, TableGame};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use roundabout_core::game::{
    mpc_cost, separation_penalty, solve_grand_coalition, solve_stackelberg, Choice, CostModel,
    StepContext,
};
use roundabout_core::payoff::Stage;
use roundabout_core::scenario::{bundled, load_scenario, ScenarioConfig};
use roundabout_core::Error;

#[test]
fn random_table_games_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..100 {
        let players = rng.random_range(1..=4);
        // few cost levels force ties, exercising the tie-break
        let levels = if k % 2 == 0 { 3 } else { 1000 };
        let mut g = TableGame::random(&mut rng, players, 4, levels);
        g.bound = k % 3 != 0;
        if k % 5 == 0 {
            g.weights = Some(
                (0..players)
                    .map(|_| f64::from(rng.random_range(1..4u32)))
                    .collect(),
            );
        }
        let sg = solve_stackelberg(&g).unwrap();
        assert_eq!(sg.choices, brute_stackelberg(&g), "stackelberg game {k}");
        let gc = solve_grand_coalition(&g).unwrap();
        assert_eq!(gc.choices, brute_coalition(&g), "coalition game {k}");
        assert_eq!(gc.weighted_cost, g.total(&gc.choices));
        for (i, &c) in gc.choices.iter().enumerate() {
            assert!(g.feasible(i, c));
        }
    }
}

#[test]
fn coalition_is_never_worse_than_stackelberg() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let players = rng.random_range(1..=4);
        let g = TableGame::random(&mut rng, players, 4, 50);
        let sg = solve_stackelberg(&g).unwrap();
        let gc = solve_grand_coalition(&g).unwrap();
        assert!(gc.weighted_cost <= g.total(&sg.choices));
    }
}

fn dominant_game(players: usize, cands: usize, winner: &[usize], noise: &[f64]) -> TableGame {
    let sizes = vec![cands; players];
    let joints: usize = sizes.iter().map(|m| m + 1).product();
    let mut g = TableGame {
        cands: sizes.iter().map(|&m| sequences(m)).collect(),
        feasible: sizes.iter().map(|&m| vec![true; m]).collect(),
        cost: vec![vec![0.0; joints]; players],
        weights: None,
        bound: true,
    };
    let mut choice = vec![Choice::Default; players];
    for idx in 0..joints {
        let mut rest = idx;
        for i in (0..players).rev() {
            let v = rest % (cands + 1);
            rest /= cands + 1;
            choice[i] = if v == 0 {
                Choice::Default
            } else {
                Choice::Candidate(v - 1)
            };
        }
        for i in 0..players {
            // own choice dominates: the winner is strictly cheapest whatever the others do
            let own = match choice[i] {
                Choice::Candidate(c) if c == winner[i] => 0.0,
                _ => 10.0,
            };
            g.cost[i][idx] = own + noise[(idx * players + i) % noise.len()];
        }
    }
    g
}

proptest! {
    #[test]
    fn strictly_dominant_choices_are_selected(
        players in 1usize..4,
        cands in 1usize..4,
        seed in 0usize..64,
        noise in proptest::collection::vec(0.0f64..5.0, 1..20),
    ) {
        let winner: Vec<usize> = (0..players).map(|i| (seed >> i) % cands).collect();
        let g = dominant_game(players, cands, &winner, &noise);
        prop_assert_eq!(solve_stackelberg(&g).unwrap().choices, winner.clone());
        prop_assert_eq!(solve_grand_coalition(&g).unwrap().choices, winner);
    }
}

#[test]
fn degenerate_games() {
    // no players
    let g = TableGame {
        cands: vec![],
        feasible: vec![],
        cost: vec![],
        weights: None,
        bound: false,
    };
    assert!(matches!(solve_stackelberg(&g), Err(Error::InvalidInput(_))));
    assert!(matches!(
        solve_grand_coalition(&g),
        Err(Error::InvalidInput(_))
    ));

    // a player without a feasible candidate
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut g = TableGame::random(&mut rng, 2, 3, 5);
    g.feasible[1].iter_mut().for_each(|f| *f = false);
    assert!(matches!(solve_stackelberg(&g), Err(Error::InvalidInput(_))));
    assert!(matches!(
        solve_grand_coalition(&g),
        Err(Error::InvalidInput(_))
    ));

    // all costs equal: the preferred joint decision
    let mut g = TableGame::random(&mut rng, 3, 3, 1);
    g.feasible
        .iter_mut()
        .for_each(|f| f.iter_mut().for_each(|x| *x = true));
    assert_eq!(solve_stackelberg(&g).unwrap().choices, vec![0, 0, 0]);
    assert_eq!(solve_grand_coalition(&g).unwrap().choices, vec![0, 0, 0]);

    // a single player reduces to its own argmin
    let mut g = TableGame::random(&mut rng, 1, 4, 1000);
    g.feasible[0].iter_mut().for_each(|x| *x = true);
    let best = (0..g.cands[0].len())
        .min_by(|&a, &b| {
            g.cost(0, &[Choice::Candidate(a)])
                .total_cmp(&g.cost(0, &[Choice::Candidate(b)]))
        })
        .unwrap();
    assert_eq!(solve_stackelberg(&g).unwrap().choices, vec![best]);
    assert_eq!(solve_grand_coalition(&g).unwrap().choices, vec![best]);

    // infinite costs everywhere still yield the preferred feasible decision
    let mut g = TableGame::random(&mut rng, 2, 3, 1);
    g.cost
        .iter_mut()
        .for_each(|c| c.iter_mut().for_each(|x| *x = f64::INFINITY));
    let first: Vec<usize> = (0..2).map(|i| g.feasible_of(i)[0]).collect();
    assert_eq!(solve_stackelberg(&g).unwrap().choices, first);
    assert_eq!(solve_grand_coalition(&g).unwrap().choices, first);
}

fn load(name: &str) -> ScenarioConfig {
    load_scenario(bundled(name).unwrap()).unwrap()
}

#[test]
fn game_cost_composes_payoff_control_and_separation_terms() {
    let cfg = load("case1_A");
    let agents = cfg.build_agents().unwrap();
    let ctx = StepContext::new(&cfg, &agents).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for ego in 0..agents.len() {
        if ctx.predictions[ego].is_none() {
            continue;
        }
        let game = ctx.game(ego);
        let n = game.n_players();
        let feasible: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                (0..game.candidates(i).len())
                    .filter(|&c| game.feasible(i, c))
                    .collect()
            })
            .collect();
        for _ in 0..20 {
            let joint: Vec<usize> = feasible
                .iter()
                .map(|f| f[rng.random_range(0..f.len())])
                .collect();
            let choice: Vec<Choice> = joint.iter().map(|&c| Choice::Candidate(c)).collect();
            for player in 0..n {
                let i = game.players[player];
                let pred = ctx.prediction(i);
                let c = joint[player];
                let payoff: Vec<f64> = ctx
                    .breakdown(&game, player, &joint)
                    .unwrap()
                    .iter()
                    .map(|b| b.total)
                    .collect();
                let own = &pred.states[c];
                let sep = &cfg.game.separation;
                let dc = cfg.simulation.collision_distance;
                let yielding = pred.stage == Stage::Entering && !agents[i].plan.committed;
                let mut risk = 0.0;
                for (j, a) in agents.iter().enumerate() {
                    let Some(pj) = &ctx.predictions[j] else {
                        continue;
                    };
                    if j == i {
                        continue;
                    }
                    let other = if ctx.roles[i].nv.contains(&Some(j)) {
                        match game.players.iter().position(|&x| x == j) {
                            Some(q) => &pj.states[joint[q]],
                            None => &pj.default_states,
                        }
                    } else if a.state.distance_to(&agents[i].state) < sep.range {
                        &pj.default_states
                    } else {
                        continue;
                    };
                    risk += separation_penalty(own, other, sep, dc, yielding);
                }
                let expected = mpc_cost(
                    &payoff,
                    &pred.candidates[c],
                    &cfg.game.weights,
                    cfg.payoff.epsilon,
                ) + risk;
                let got = game.cost(player, &choice);
                assert!(
                    (got - expected).abs() <= 1e-9 * expected.abs().max(1.0),
                    "agent {} player {player}: {got} vs {expected}",
                    agents[i].id
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 100);
}

#[test]
fn argmin_is_invariant_to_cost_scaling() {
    for name in ["case1_A", "case2_C", "case3"] {
        let cfg = load(name);
        let agents = cfg.build_agents().unwrap();
        for factor in [0.25, 4.0] {
            let mut scaled = cfg.clone();
            scaled.game.weights = cfg.game.weights.scaled(factor);
            scaled.game.separation.weight *= factor;
            let ctx = StepContext::new(&cfg, &agents).unwrap();
            let sctx = StepContext::new(&scaled, &agents).unwrap();
            for ego in (0..agents.len()).filter(|&i| ctx.predictions[i].is_some()) {
                let (g, s) = (ctx.game(ego), sctx.game(ego));
                assert_eq!(
                    solve_stackelberg(&g).unwrap().choices,
                    solve_stackelberg(&s).unwrap().choices,
                    "{name} stackelberg {ego}"
                );
                let (a, b) = (
                    solve_grand_coalition(&g).unwrap(),
                    solve_grand_coalition(&s).unwrap(),
                );
                assert_eq!(a.choices, b.choices, "{name} coalition {ego}");
                assert!(
                    (b.weighted_cost - factor * a.weighted_cost).abs()
                        <= 1e-9 * b.weighted_cost.abs()
                );
            }
        }
    }
}

#[test]
fn scenario_games_match_enumeration() {
    // the branch-and-bound bounds of the real game must never cut the optimum
    let cfg = load("case1_B");
    let agents = cfg.build_agents().unwrap();
    let ctx = StepContext::new(&cfg, &agents).unwrap();
    let mut checked = 0;
    for ego in (0..agents.len()).filter(|&i| ctx.predictions[i].is_some()) {
        let game = ctx.game(ego);
        let n = game.n_players();
        if n > 3 {
            continue;
        }
        let options: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut v: Vec<usize> = (0..game.candidates(i).len())
                    .filter(|&c| game.feasible(i, c))
                    .collect();
                v.sort_by(|&a, &b| {
                    game.candidates(i)[a]
                        .preference(&game.candidates(i)[b])
                        .then(a.cmp(&b))
                });
                v
            })
            .collect();
        let mut best = f64::INFINITY;
        for j in product(&options) {
            let choice: Vec<Choice> = j.iter().map(|&c| Choice::Candidate(c)).collect();
            let t: f64 = (0..n).map(|i| game.weight(i) * game.cost(i, &choice)).sum();
            best = best.min(t);
        }
        let gc = solve_grand_coalition(&game).unwrap();
        assert!(
            gc.weighted_cost <= best * (1.0 + 1e-12),
            "{}: {} vs {best}",
            agents[ego].id,
            gc.weighted_cost
        );
        checked += usize::from(n > 1);
    }
    assert!(checked >= 2, "only {checked} multi-player games checked");
}
