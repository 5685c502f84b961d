use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Payoff-cost weight: one value for every predicted step or one per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QWeight {
    Scalar(f64),
    PerStep(Vec<f64>),
}

impl QWeight {
    pub fn at(&self, p: usize) -> f64 {
        match self {
            QWeight::Scalar(q) => *q,
            QWeight::PerStep(v) => v[p],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcWeights {
    pub q: QWeight,
    pub r_ax: f64,
    pub r_delta: f64,
    pub r_alpha: f64,
    pub r_beta: f64,
    /// Coalition allocation by slot (HV, NV1, NV2, NV3); equal shares when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<[f64; 4]>,
}

impl Default for MpcWeights {
    fn default() -> Self {
        Self {
            q: QWeight::Scalar(1.0),
            r_ax: 0.01,
            r_delta: 0.01,
            r_alpha: 0.01,
            r_beta: 0.01,
            omega: None,
        }
    }
}

impl MpcWeights {
    pub fn validate(&self, np: usize) -> Result<()> {
        let q_ok = match &self.q {
            QWeight::Scalar(q) => *q >= 0.0 && q.is_finite(),
            QWeight::PerStep(v) => v.len() == np && v.iter().all(|q| *q >= 0.0 && q.is_finite()),
        };
        if !q_ok {
            return Err(Error::Config(format!(
                "mpc: q must be a non-negative scalar or a list of {np} non-negative values"
            )));
        }
        if [self.r_ax, self.r_delta, self.r_alpha, self.r_beta]
            .iter()
            .any(|r| !(*r >= 0.0 && r.is_finite()))
        {
            return Err(Error::Config(
                "mpc: r weights must be finite and non-negative".into(),
            ));
        }
        if let Some(w) = self.omega {
            if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::Config("mpc: omega entries must be positive".into()));
            }
        }
        Ok(())
    }

    /// Same weights with `q` and every `r` multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let q = match &self.q {
            QWeight::Scalar(q) => QWeight::Scalar(q * factor),
            QWeight::PerStep(v) => QWeight::PerStep(v.iter().map(|q| q * factor).collect()),
        };
        Self {
            q,
            r_ax: self.r_ax * factor,
            r_delta: self.r_delta * factor,
            r_alpha: self.r_alpha * factor,
            r_beta: self.r_beta * factor,
            omega: self.omega,
        }
    }
}

/// Cost on predicted proximity: `weight * sum_p max(0, d_safe - d_p)^2` with
/// `d_safe = collision distance + margin + headway * closing speed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Separation {
    pub weight: f64,
    /// Extra clearance beyond the collision distance (m).
    pub margin: f64,
    /// Time gap applied to the closing speed (s).
    pub headway: f64,
    /// Vehicles farther than this are ignored (m).
    pub range: f64,
}

impl Default for Separation {
    fn default() -> Self {
        Self {
            weight: 1.0,
            margin: 1.0,
            headway: 1.5,
            range: 40.0,
        }
    }
}

impl Separation {
    pub fn validate(&self) -> Result<()> {
        if [self.weight, self.margin, self.headway, self.range]
            .iter()
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(Error::Config(
                "separation: values must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameConfig {
    /// Grid levels per continuous decision axis.
    pub grid: usize,
    pub weights: MpcWeights,
    pub separation: Separation,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            grid: 5,
            weights: MpcWeights::default(),
            separation: Separation::default(),
        }
    }
}

impl GameConfig {
    pub fn validate(&self, np: usize) -> Result<()> {
        if self.grid < 2 {
            return Err(Error::Config(format!(
                "grid resolution must be at least 2 per axis, got {}",
                self.grid
            )));
        }
        self.weights.validate(np)?;
        self.separation.validate()
    }
}
