use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSettings {
    /// Center distance below which two vehicles collide (m).
    pub collision_distance: f64,
    /// Travel past the exit port after which an agent leaves the simulation (m).
    pub completion_distance: f64,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            collision_distance: 3.0,
            completion_distance: 20.0,
        }
    }
}

impl SimulationSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.collision_distance > 0.0 && self.completion_distance >= 0.0) {
            return Err(Error::Config(
                "simulation: collision_distance must be positive and completion_distance non-negative".into(),
            ));
        }
        Ok(())
    }
}
