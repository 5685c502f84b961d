//! Lane-following steering assist: pure pursuit of a lookahead point on the
//! target lane, evaluated from the vehicle's course rather than its heading.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{wrap_angle, VehicleParameters, VehicleState};
use crate::scenario::geometry::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// Lookahead floor (m).
    pub min_lookahead: f64,
    /// Lookahead growth with speed (s).
    pub lookahead_gain: f64,
    /// Fraction of the lateral-acceleration bound the assist may use.
    pub ay_fraction: f64,
    /// Fraction of the steering bound the assist may use.
    pub steer_fraction: f64,
    /// Fraction of the lateral-acceleration bound used for curve speeds.
    pub curve_ay_fraction: f64,
    /// Deceleration assumed when approaching a curve (m/s^2).
    pub preview_decel: f64,
    /// Distance ahead searched for curves (m).
    pub preview: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            min_lookahead: 6.0,
            lookahead_gain: 1.2,
            ay_fraction: 0.9,
            steer_fraction: 0.9,
            curve_ay_fraction: 0.8,
            preview_decel: 1.0,
            preview: 40.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_lookahead > 0.0
            && self.lookahead_gain >= 0.0
            && (0.0..=1.0).contains(&self.ay_fraction)
            && self.ay_fraction > 0.0
            && (0.0..=1.0).contains(&self.steer_fraction)
            && self.steer_fraction > 0.0
            && (0.0..=1.0).contains(&self.curve_ay_fraction)
            && self.curve_ay_fraction > 0.0
            && self.preview_decel > 0.0
            && self.preview >= 0.0;
        if !ok {
            return Err(Error::Config(
                "tracker: lookahead and preview deceleration must be positive and fractions in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn lookahead(&self, vx: f64) -> f64 {
        self.min_lookahead.max(self.lookahead_gain * vx)
    }
}

/// Highest speed at station `s` of `path` from which every curve within the
/// preview distance can be reached at its lateral-acceleration limit.
pub fn curve_speed_limit(path: &Path, s: f64, ay_max: f64, cfg: &TrackerConfig) -> f64 {
    let ay = cfg.curve_ay_fraction * ay_max;
    let mut limit = f64::INFINITY;
    let mut d = 0.0;
    while d <= cfg.preview {
        let (_, _, k) = path.pose_at(s + d);
        if k != 0.0 {
            limit = limit.min((ay / k.abs() + 2.0 * cfg.preview_decel * d).sqrt());
        }
        d += 1.0;
    }
    limit
}

/// Steering that bends the course toward the lookahead point on `path`.
///
/// `station` is the vehicle's arc-length on `path`; `delta_now` the steering
/// currently applied, which fixes the present sideslip.
#[allow(clippy::too_many_arguments)]
pub fn tracking_steer(
    state: &VehicleState,
    delta_now: f64,
    path: &Path,
    station: f64,
    params: &VehicleParameters,
    ay_max: f64,
    delta_max: f64,
    cfg: &TrackerConfig,
) -> f64 {
    let ld = cfg.lookahead(state.vx);
    let ((tx, ty), _, _) = path.pose_at(station + ld);
    let (dx, dy) = (tx - state.x, ty - state.y);
    let dist = dx.hypot(dy).max(1e-6);
    let course = state.phi + params.sideslip(delta_now);
    let eta = wrap_angle(dy.atan2(dx) - course);
    let kappa = 2.0 * eta.sin() / dist;
    // the reference point moves on a circle of radius lr / sin(beta)
    let mut beta = (kappa * params.lr).clamp(-0.99, 0.99).asin();
    let v2 = state.vx * state.vx;
    if v2 > 1e-9 {
        let b_lim = (cfg.ay_fraction * ay_max * params.lr / v2).atan();
        beta = beta.clamp(-b_lim, b_lim);
    }
    let delta = (beta.tan() * params.wheelbase() / params.lr).atan();
    let lim = cfg.steer_fraction * delta_max;
    delta.clamp(-lim, lim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::geometry::Segment;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn on_straight_centreline_no_steer() {
        let path = Path::new("l", vec![Segment::line((0.0, 0.0), 0.0, 100.0)]);
        let s = VehicleState::new(5.0, 0.0, 10.0, 0.0);
        let d = tracking_steer(
            &s,
            0.0,
            &path,
            10.0,
            &VehicleParameters::default(),
            5.0,
            0.5,
            &TrackerConfig::default(),
        );
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn steers_back_toward_lane() {
        let path = Path::new("l", vec![Segment::line((0.0, 0.0), 0.0, 100.0)]);
        let left = VehicleState::new(5.0, 0.0, 10.0, 1.0);
        let d = tracking_steer(
            &left,
            0.0,
            &path,
            10.0,
            &VehicleParameters::default(),
            5.0,
            0.5,
            &TrackerConfig::default(),
        );
        assert!(d < 0.0);
    }

    #[test]
    fn steady_circle_steer_matches_curvature() {
        let r = 15.0;
        let path = Path::new("ring", vec![Segment::arc((0.0, 0.0), r, 0.0, 6.0)]);
        let params = VehicleParameters::default();
        let beta = (params.lr / r).asin();
        let delta_ss = (beta.tan() * params.wheelbase() / params.lr).atan();
        // on the circle with the course tangent
        let s = VehicleState::new(3.0, FRAC_PI_2 - beta, r, 0.0);
        let d = tracking_steer(
            &s,
            delta_ss,
            &path,
            0.0,
            &params,
            5.0,
            0.5,
            &TrackerConfig::default(),
        );
        assert!((d - delta_ss).abs() < 1e-9, "{d} vs {delta_ss}");
    }

    #[test]
    fn curve_limit_on_and_before_a_circle() {
        let cfg = TrackerConfig::default();
        let path = Path::new(
            "p",
            vec![
                Segment::line((0.0, -20.0), FRAC_PI_2, 20.0),
                Segment::arc((-15.0, 0.0), 15.0, 0.0, 3.0),
            ],
        );
        let on = curve_speed_limit(&path, 25.0, 5.0, &cfg);
        assert!((on - (0.8f64 * 5.0 * 15.0).sqrt()).abs() < 1e-9);
        let before = curve_speed_limit(&path, 0.0, 5.0, &cfg);
        assert!((before - (60.0f64 + 2.0 * 20.0).sqrt()).abs() < 1e-9);
        let straight = Path::new("l", vec![Segment::line((0.0, 0.0), 0.0, 100.0)]);
        assert!(curve_speed_limit(&straight, 0.0, 5.0, &cfg).is_infinite());
    }

    #[test]
    fn lateral_acceleration_is_capped() {
        let path = Path::new("l", vec![Segment::line((0.0, 0.0), 0.0, 100.0)]);
        let params = VehicleParameters::default();
        let s = VehicleState::new(20.0, 0.0, 10.0, 3.0);
        let cfg = TrackerConfig::default();
        let d = tracking_steer(&s, 0.0, &path, 10.0, &params, 5.0, 0.5, &cfg);
        let ay = params.lateral_acceleration(20.0, d).abs();
        assert!(ay <= cfg.ay_fraction * 5.0 + 1e-9, "{ay}");
    }
}
