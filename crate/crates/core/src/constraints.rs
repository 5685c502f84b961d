//! The decision constraint set with bounds on tracking errors, accelerations,
//! speed and control increments.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

use crate::error::{Error, Result};
use crate::kinematics::ControlDelta;

/// Slack absorbing rounding when a value sits exactly on a bound.
const BOUND_SLACK: f64 = 1e-12;

/// An angle stored in radians; configs spell it `"2 deg"` or `"0.035 rad"`,
/// and bare numbers are radians.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Angle(pub f64);

impl Angle {
    pub fn deg(v: f64) -> Self {
        Angle(v.to_radians())
    }

    pub fn rad(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} rad", self.0)
    }
}

impl std::str::FromStr for Angle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let (num, unit) = match t.find(|c: char| c.is_ascii_alphabetic()) {
            Some(i) => (t[..i].trim(), t[i..].trim()),
            None => (t, "rad"),
        };
        let v: f64 = num
            .parse()
            .map_err(|_| Error::Parse(format!("bad angle `{s}`")))?;
        match unit {
            "deg" | "degree" | "degrees" => Ok(Angle::deg(v)),
            "rad" | "radian" | "radians" => Ok(Angle(v)),
            other => Err(Error::Parse(format!(
                "unknown angle unit `{other}` in `{s}`"
            ))),
        }
    }
}

impl Serialize for Angle {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Angle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Angle(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintBounds {
    /// Station-tracking error (m).
    pub ds_max: f64,
    /// Lateral lane error (m).
    pub dy_max: f64,
    pub dphi_max: Angle,
    pub ax_max: f64,
    pub ay_max: f64,
    pub vx_max: f64,
    /// Acceleration increment per step (m/s^2).
    pub dax_max: f64,
    /// Steering increment per step.
    pub ddelta_max: Angle,
    pub delta_max: Angle,
    /// Whether the station-tracking bound is enforced.
    pub check_ds: bool,
}

impl Default for ConstraintBounds {
    fn default() -> Self {
        Self {
            ds_max: 0.8,
            dy_max: 0.2,
            dphi_max: Angle::deg(2.0),
            ax_max: 8.0,
            ay_max: 5.0,
            vx_max: 30.0,
            dax_max: 0.1,
            ddelta_max: Angle::deg(0.3),
            delta_max: Angle::deg(30.0),
            check_ds: true,
        }
    }
}

impl ConstraintBounds {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.ds_max,
            self.dy_max,
            self.dphi_max.rad(),
            self.ax_max,
            self.ay_max,
            self.vx_max,
            self.dax_max,
            self.ddelta_max.rad(),
            self.delta_max.rad(),
        ];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(
                "constraint bounds must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// Quantities constrained at one predicted step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConstraintSample {
    pub ds: f64,
    /// Lane errors against the lane in force at this step; `None` while a
    /// maneuver has not yet crossed into its target lane.
    pub lane_error: Option<(f64, f64)>,
    pub ax: f64,
    pub ay: f64,
    pub vx: f64,
    pub delta_f: f64,
    /// Curve speed limit at the predicted station (m/s).
    pub vx_limit: Option<f64>,
}

/// Lane context of a candidate: lane-error bounds never tighten below the error
/// the vehicle already carries when the horizon starts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LaneContext {
    pub dy_allowance: f64,
    pub dphi_allowance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub name: &'static str,
    pub value: f64,
    pub bound: f64,
    /// Index of the predicted step (or of the control step for increments).
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

/// Evaluates every inequality at every step and lists all violations.
pub fn check(
    samples: &[ConstraintSample],
    deltas: &[ControlDelta],
    bounds: &ConstraintBounds,
    lane: &LaneContext,
) -> ConstraintReport {
    let mut violations = Vec::new();
    let mut test = |name: &'static str, value: f64, bound: f64, step: usize| {
        if !(value.abs() <= bound + BOUND_SLACK) {
            violations.push(Violation {
                name,
                value,
                bound,
                step,
            });
        }
    };
    let dy_bound = bounds.dy_max.max(lane.dy_allowance);
    let dphi_bound = bounds.dphi_max.rad().max(lane.dphi_allowance);
    for (p, s) in samples.iter().enumerate() {
        if bounds.check_ds {
            test("ds", s.ds, bounds.ds_max, p);
        }
        if let Some((dy, dphi)) = s.lane_error {
            test("dy", dy, dy_bound, p);
            test("dphi", dphi, dphi_bound, p);
        }
        test("ax", s.ax, bounds.ax_max, p);
        test("ay", s.ay, bounds.ay_max, p);
        test("vx", s.vx, bounds.vx_max, p);
        test("reverse", s.vx.min(0.0), 0.0, p);
        if let Some(limit) = s.vx_limit {
            test("curve_speed", s.vx, limit, p);
        }
        test("delta", s.delta_f, bounds.delta_max.rad(), p);
    }
    for (q, d) in deltas.iter().enumerate() {
        test("dax", d.d_ax, bounds.dax_max, q);
        test("ddelta", d.d_delta_f, bounds.ddelta_max.rad(), q);
    }
    ConstraintReport {
        feasible: violations.is_empty(),
        violations,
    }
}
