use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

use crate::constraints::ConstraintBounds;
use crate::error::{Error, Result};
use crate::kinematics::ControlDelta;
use crate::payoff::{Behavior, Stage};

/// One step of a decision: control increments plus the discrete maneuver.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DecisionVector {
    pub d_ax: f64,
    pub d_delta_f: f64,
    pub alpha: i8,
    pub beta: i8,
}

impl DecisionVector {
    pub fn new(delta: ControlDelta, behavior: Behavior) -> Self {
        Self {
            d_ax: delta.d_ax,
            d_delta_f: delta.d_delta_f,
            alpha: behavior.alpha,
            beta: behavior.beta,
        }
    }

    pub fn behavior(&self) -> Behavior {
        Behavior {
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    pub fn delta(&self) -> ControlDelta {
        ControlDelta::new(self.d_ax, self.d_delta_f)
    }
}

/// Decisions for the `Nc` steps of an epoch; the maneuver is the same at every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSequence {
    pub steps: Vec<DecisionVector>,
}

impl DecisionSequence {
    /// The same increment and maneuver held for `nc` steps.
    pub fn constant(delta: ControlDelta, behavior: Behavior, nc: usize) -> Self {
        Self {
            steps: vec![DecisionVector::new(delta, behavior); nc],
        }
    }

    pub fn first(&self) -> DecisionVector {
        self.steps[0]
    }

    pub fn behavior(&self) -> Behavior {
        self.steps[0].behavior()
    }

    pub fn deltas(&self) -> Vec<ControlDelta> {
        self.steps.iter().map(DecisionVector::delta).collect()
    }

    /// Orders equally costly sequences: lane keeping first, then smaller
    /// acceleration and steering increments.
    pub fn preference(&self, other: &Self) -> Ordering {
        let (a, b) = (self.first(), other.first());
        (!a.behavior().is_keep())
            .cmp(&!b.behavior().is_keep())
            .then(a.d_ax.abs().total_cmp(&b.d_ax.abs()))
            .then(a.d_delta_f.abs().total_cmp(&b.d_delta_f.abs()))
    }
}

/// Maneuvers available at a stage.
pub fn stage_behaviors(stage: Stage) -> [Behavior; 3] {
    match stage {
        Stage::Entering => [-1, 0, 1].map(Behavior::merge),
        Stage::Passing | Stage::Exiting => [-1, 0, 1].map(Behavior::lane_change),
    }
}

/// `n` evenly spaced levels over `[-max, max]`, with an exact zero when `n` is odd.
pub fn grid_levels(max: f64, n: usize) -> Vec<f64> {
    let m = (n - 1) as f64;
    (0..n).map(|i| max * (2.0 * i as f64 - m) / m).collect()
}

/// Cartesian product of the stage's maneuvers with the increment grid, each
/// increment held over the control horizon.
pub fn candidate_set(
    stage: Stage,
    bounds: &ConstraintBounds,
    grid: usize,
    nc: usize,
) -> Result<Vec<DecisionSequence>> {
    if grid < 2 {
        return Err(Error::Config(format!(
            "grid resolution must be at least 2 per axis, got {grid}"
        )));
    }
    if nc == 0 {
        return Err(Error::Config("control horizon must be at least 1".into()));
    }
    let ax = grid_levels(bounds.dax_max, grid);
    let steer = grid_levels(bounds.ddelta_max.rad(), grid);
    let mut out = Vec::with_capacity(3 * grid * grid);
    for b in stage_behaviors(stage) {
        for &a in &ax {
            for &d in &steer {
                out.push(DecisionSequence::constant(ControlDelta::new(a, d), b, nc));
            }
        }
    }
    Ok(out)
}

/// Braking decision used when a player has no feasible candidate.
pub fn fallback_sequence(
    bounds: &ConstraintBounds,
    behavior: Behavior,
    nc: usize,
) -> DecisionSequence {
    DecisionSequence::constant(ControlDelta::new(-bounds.dax_max, 0.0), behavior, nc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidate_counts() {
        let b = ConstraintBounds::default();
        assert_eq!(candidate_set(Stage::Entering, &b, 5, 2).unwrap().len(), 75);
        assert_eq!(candidate_set(Stage::Passing, &b, 3, 2).unwrap().len(), 27);
        assert!(matches!(
            candidate_set(Stage::Passing, &b, 1, 2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn stage_consistent_behaviors() {
        let b = ConstraintBounds::default();
        for c in candidate_set(Stage::Entering, &b, 3, 2).unwrap() {
            assert!(c.steps.iter().all(|s| s.beta == 0));
        }
        for stage in [Stage::Passing, Stage::Exiting] {
            for c in candidate_set(stage, &b, 3, 2).unwrap() {
                assert!(c.steps.iter().all(|s| s.alpha == 0));
            }
        }
    }

    #[test]
    fn grid_is_symmetric_with_exact_ends() {
        let g = grid_levels(0.1, 5);
        assert_eq!(g, vec![-0.1, -0.05, 0.0, 0.05, 0.1]);
        let g = grid_levels(0.3, 2);
        assert_eq!(g, vec![-0.3, 0.3]);
    }

    #[test]
    fn preference_order() {
        let keep = DecisionSequence::constant(ControlDelta::new(0.1, 0.0), Behavior::KEEP, 2);
        let merge = DecisionSequence::constant(ControlDelta::new(0.0, 0.0), Behavior::merge(1), 2);
        let small = DecisionSequence::constant(ControlDelta::new(0.05, 0.0), Behavior::KEEP, 2);
        assert_eq!(keep.preference(&merge), Ordering::Less);
        assert_eq!(small.preference(&keep), Ordering::Less);
    }
}
