//! Style-weighted decision payoff: safety, comfort and efficiency terms and the
//! stage-dependent safety blend over up to three neighbor vehicles.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kinematics::{ControlInput, VehicleParameters, VehicleState};

/// Top-level weights `(ks, kc, ke)` of one driving style.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleWeights {
    pub ks: f64,
    pub kc: f64,
    pub ke: f64,
}

impl StyleWeights {
    pub const fn new(ks: f64, kc: f64, ke: f64) -> Self {
        Self { ks, kc, ke }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Aggressive,
    Normal,
    Conservative,
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Style::Aggressive => "aggressive",
            Style::Normal => "normal",
            Style::Conservative => "conservative",
        })
    }
}

impl FromStr for Style {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aggressive" => Ok(Style::Aggressive),
            "normal" => Ok(Style::Normal),
            "conservative" => Ok(Style::Conservative),
            other => Err(Error::Parse(format!("unknown driving style `{other}`"))),
        }
    }
}

/// Style weight table; the defaults are the published rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StyleTable {
    pub aggressive: StyleWeights,
    pub normal: StyleWeights,
    pub conservative: StyleWeights,
}

impl Default for StyleTable {
    fn default() -> Self {
        Self {
            aggressive: StyleWeights::new(0.4, 0.5, 0.1),
            normal: StyleWeights::new(0.3, 0.3, 0.4),
            conservative: StyleWeights::new(0.1, 0.4, 0.5),
        }
    }
}

impl StyleTable {
    pub fn get(&self, style: Style) -> StyleWeights {
        match style {
            Style::Aggressive => self.aggressive,
            Style::Normal => self.normal,
            Style::Conservative => self.conservative,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("aggressive", self.aggressive),
            ("normal", self.normal),
            ("conservative", self.conservative),
        ] {
            if [w.ks, w.kc, w.ke]
                .iter()
                .any(|v| !(*v >= 0.0 && v.is_finite()))
            {
                return Err(Error::Config(format!(
                    "style weights `{name}` must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }
}

/// Inner weights of the individual payoff terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PayoffWeights {
    pub kv_log: f64,
    pub ks_log: f64,
    pub kv_lat: f64,
    pub ks_lat: f64,
    pub ky_lk: f64,
    pub kphi_lk: f64,
    pub kax: f64,
    pub kay: f64,
    pub ke_inner: f64,
    pub epsilon: f64,
    /// Softening of the comfort denominators; `epsilon` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_comfort: Option<f64>,
    /// Softening of the efficiency denominator; `epsilon` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_efficiency: Option<f64>,
    /// Reference speed of the efficiency term (m/s).
    pub vx_max: f64,
    /// Gap assumed for an absent leader or neighbor (m).
    pub d_far: f64,
}

impl Default for PayoffWeights {
    fn default() -> Self {
        Self {
            kv_log: 1.0,
            ks_log: 0.05,
            kv_lat: 1.0,
            ks_lat: 0.05,
            ky_lk: 0.5,
            kphi_lk: 0.5,
            kax: 1.0,
            kay: 1.0,
            ke_inner: 10.0,
            epsilon: 0.01,
            epsilon_comfort: None,
            epsilon_efficiency: None,
            vx_max: 30.0,
            d_far: 50.0,
        }
    }
}

impl PayoffWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [
            self.kv_log,
            self.ks_log,
            self.kv_lat,
            self.ks_lat,
            self.ky_lk,
            self.kphi_lk,
            self.kax,
            self.kay,
            self.ke_inner,
            self.d_far,
        ];
        if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config(
                "payoff weights must be finite and non-negative".into(),
            ));
        }
        let eps = [
            Some(self.epsilon),
            self.epsilon_comfort,
            self.epsilon_efficiency,
        ];
        if eps.iter().flatten().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::Config(
                "payoff epsilon values must be positive".into(),
            ));
        }
        if !(self.vx_max > 0.0) {
            return Err(Error::Config("payoff vx_max must be positive".into()));
        }
        Ok(())
    }
}

/// Discrete maneuver: merge `alpha` and lane-change `beta`, each in {-1, 0, 1}.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Behavior {
    pub alpha: i8,
    pub beta: i8,
}

impl Behavior {
    pub const KEEP: Behavior = Behavior { alpha: 0, beta: 0 };

    pub fn merge(alpha: i8) -> Self {
        Behavior { alpha, beta: 0 }
    }

    pub fn lane_change(beta: i8) -> Self {
        Behavior { alpha: 0, beta }
    }

    pub fn is_keep(&self) -> bool {
        self.alpha == 0 && self.beta == 0
    }
}

/// Decision stage of a vehicle at the roundabout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Entering,
    Passing,
    Exiting,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Entering => "entering",
            Stage::Passing => "passing",
            Stage::Exiting => "exiting",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PayoffBreakdown {
    pub p_s_log: f64,
    /// Lateral safety after the multi-opponent blend.
    pub p_s_lat: f64,
    pub p_s_lk: f64,
    /// Stage-blended safety payoff.
    pub p_s: f64,
    pub p_c: f64,
    pub p_e: f64,
    pub total: f64,
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Overlapping vehicles count as zero gap.
fn pair_term(kv: f64, ks: f64, dv: f64, gap: f64, eps: f64) -> f64 {
    let gap = gap.max(0.0);
    kv * (dv * dv + eps).powf(sgn(dv)) + ks * gap * gap
}

/// Longitudinal safety with respect to the lead vehicle.
pub fn safety_longitudinal(
    ego: &VehicleState,
    lv: Option<&VehicleState>,
    w: &PayoffWeights,
    lv_len: f64,
) -> f64 {
    match lv {
        Some(lv) => pair_term(
            w.kv_log,
            w.ks_log,
            lv.vx - ego.vx,
            ego.distance_to(lv) - lv_len,
            w.epsilon,
        ),
        None => w.kv_log + w.ks_log * w.d_far * w.d_far,
    }
}

/// Lateral safety with respect to one neighbor vehicle.
pub fn safety_lateral_pair(
    ego: &VehicleState,
    nv: Option<&VehicleState>,
    w: &PayoffWeights,
    lv_len: f64,
) -> f64 {
    match nv {
        Some(nv) => pair_term(
            w.kv_lat,
            w.ks_lat,
            ego.vx - nv.vx,
            ego.distance_to(nv) - lv_len,
            w.epsilon,
        ),
        None => w.kv_lat + w.ks_lat * w.d_far * w.d_far,
    }
}

pub fn safety_lanekeep(dy: f64, dphi: f64, w: &PayoffWeights) -> f64 {
    w.ky_lk / (dy * dy + w.epsilon) + w.kphi_lk / (dphi * dphi + w.epsilon)
}

pub fn comfort(ax: f64, ay: f64, w: &PayoffWeights) -> f64 {
    let eps = w.epsilon_comfort.unwrap_or(w.epsilon);
    w.kax / (ax * ax + eps) + w.kay / (ay * ay + eps)
}

pub fn efficiency(vx: f64, w: &PayoffWeights) -> f64 {
    let d = vx - w.vx_max;
    w.ke_inner / (d * d + w.epsilon_efficiency.unwrap_or(w.epsilon))
}

/// Weights of the NV1, NV2, NV3 lateral terms while entering.
pub fn entering_lateral_coefficients(alpha: i8) -> [f64; 3] {
    let a = f64::from(alpha);
    [0.25 * (a + 1.0).powi(2), 1.0, 0.25 * (a - 1.0).powi(2)]
}

/// Gates `(longitudinal, lateral, lane-keep)` of the safety blend for a
/// maneuver variable in {-1, 0, 1}.
pub fn safety_gates(m: i8) -> [f64; 3] {
    let m2 = f64::from(m).powi(2);
    [1.0 - m2, m2, 1.0 - m2]
}

/// Per-step safety inputs to the blend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyTerms {
    pub p_log: f64,
    /// Pairwise lateral terms against the NV1, NV2, NV3 slots.
    pub p_lat: [f64; 3],
    pub p_lk: f64,
}

/// Blended lateral safety for the stage.
pub fn blended_lateral(stage: Stage, behavior: Behavior, p_lat: &[f64; 3], nv2_alpha: i8) -> f64 {
    match stage {
        Stage::Entering => {
            let c = entering_lateral_coefficients(behavior.alpha);
            c[0] * p_lat[0] + c[1] * p_lat[1] + c[2] * p_lat[2]
        }
        Stage::Passing | Stage::Exiting => {
            let b2 = f64::from(behavior.beta).powi(2);
            let a2 = f64::from(nv2_alpha).powi(2);
            b2 * p_lat[0] + a2 * p_lat[1]
        }
    }
}

/// Stage-dependent safety payoff `Gamma`.
pub fn safety_blend(stage: Stage, behavior: Behavior, terms: &SafetyTerms, nv2_alpha: i8) -> f64 {
    let lat = blended_lateral(stage, behavior, &terms.p_lat, nv2_alpha);
    match stage {
        Stage::Entering => {
            let [g_log, g_lat, g_lk] = safety_gates(behavior.alpha);
            g_log * terms.p_log + g_lat * lat + g_lk * terms.p_lk
        }
        Stage::Passing | Stage::Exiting => {
            let [g_log, _, g_lk] = safety_gates(behavior.beta);
            g_log * terms.p_log + lat + g_lk * terms.p_lk
        }
    }
}

/// Everything about the ego vehicle at one predicted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoStep {
    pub state: VehicleState,
    /// Control driving the vehicle into `state`.
    pub control: ControlInput,
    /// Lateral and heading error with respect to the target lane.
    pub dy: f64,
    pub dphi: f64,
}

/// Opponent states at the same predicted step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OpponentStep<'a> {
    pub lv: Option<&'a VehicleState>,
    pub nv: [Option<&'a VehicleState>; 3],
    pub nv2_alpha: i8,
}

/// Full payoff breakdown at one predicted step.
pub fn step_payoff(
    stage: Stage,
    behavior: Behavior,
    ego: &EgoStep,
    opp: &OpponentStep<'_>,
    style: &StyleWeights,
    w: &PayoffWeights,
    params: &VehicleParameters,
) -> PayoffBreakdown {
    let p_log = safety_longitudinal(&ego.state, opp.lv, w, params.lv);
    let p_lat = [0, 1, 2].map(|i| safety_lateral_pair(&ego.state, opp.nv[i], w, params.lv));
    let p_lk = safety_lanekeep(ego.dy, ego.dphi, w);
    let terms = SafetyTerms { p_log, p_lat, p_lk };
    let p_s = safety_blend(stage, behavior, &terms, opp.nv2_alpha);
    let ay = params.lateral_acceleration(ego.state.vx, ego.control.delta_f);
    let p_c = comfort(ego.control.ax, ay, w);
    let p_e = efficiency(ego.state.vx, w);
    PayoffBreakdown {
        p_s_log: p_log,
        p_s_lat: blended_lateral(stage, behavior, &p_lat, opp.nv2_alpha),
        p_s_lk: p_lk,
        p_s,
        p_c,
        p_e,
        total: style.ks * p_s + style.kc * p_c + style.ke * p_e,
    }
}

/// Predicted trajectories of the opponents over the horizon.
#[derive(Debug, Clone, Copy, Default)]
pub struct OpponentPredictions<'a> {
    pub lv: Option<&'a [VehicleState]>,
    pub nv: [Option<&'a [VehicleState]>; 3],
    pub nv2_alpha: i8,
}

/// Payoff breakdown at every predicted step of the horizon.
pub fn total_payoff(
    stage: Stage,
    behavior: Behavior,
    ego: &[EgoStep],
    opponents: &OpponentPredictions<'_>,
    style: &StyleWeights,
    w: &PayoffWeights,
    params: &VehicleParameters,
) -> Result<Vec<PayoffBreakdown>> {
    let n = ego.len();
    let mismatched = opponents.lv.is_some_and(|t| t.len() != n)
        || opponents.nv.iter().flatten().any(|t| t.len() != n);
    if mismatched {
        return Err(Error::InvalidInput(format!(
            "opponent predictions must cover the same {n} steps as the ego prediction"
        )));
    }
    Ok(ego
        .iter()
        .enumerate()
        .map(|(p, e)| {
            let opp = OpponentStep {
                lv: opponents.lv.map(|t| &t[p]),
                nv: opponents.nv.map(|t| t.map(|t| &t[p])),
                nv2_alpha: opponents.nv2_alpha,
            };
            step_payoff(stage, behavior, e, &opp, style, w, params)
        })
        .collect())
}
