//! Roundabout layout and arc-length parameterized lane reference paths.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kinematics::wrap_angle;

/// One of the four entrance/exit ports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Port {
    A,
    B,
    C,
    D,
}

impl Port {
    pub const ALL: [Port; 4] = [Port::A, Port::B, Port::C, Port::D];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Port::A => "A",
            Port::B => "B",
            Port::C => "C",
            Port::D => "D",
        };
        f.write_str(s)
    }
}

impl FromStr for Port {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Port::A),
            "B" => Ok(Port::B),
            "C" => Ok(Port::C),
            "D" => Ok(Port::D),
            other => Err(Error::Parse(format!("unknown port `{other}`"))),
        }
    }
}

/// Which of the two lanes of a road: 0 is the inner lane (nearest the median
/// or the central island), 1 the outer lane.
pub type LaneIndex = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoundaboutGeometry {
    /// Centerline radius of the inner round lane (m).
    pub inner_lane_radius: f64,
    /// Centerline radius of the outer round lane (m).
    pub outer_lane_radius: f64,
    pub lane_width: f64,
    /// Lateral centerline offsets of the inner and outer main-road lanes (m).
    pub main_road_lane_offsets: [f64; 2],
    /// Polar angles of the A, B, C, D ports (deg).
    pub port_angles_deg: [f64; 4],
    /// Length of every straight main-road lane (m).
    pub road_length: f64,
    /// Radius of the entry arcs joining main roads to round lanes (m).
    pub connector_radius: f64,
    /// Radius of the exit arcs joining round lanes to main roads (m).
    pub exit_connector_radius: f64,
    /// Arc before the exit connector at which a vehicle counts as exiting (deg).
    pub exit_threshold_deg: f64,
}

impl Default for RoundaboutGeometry {
    fn default() -> Self {
        Self {
            inner_lane_radius: 15.0,
            outer_lane_radius: 19.0,
            lane_width: 3.63,
            main_road_lane_offsets: [2.45, 6.08],
            port_angles_deg: [180.0, 270.0, 0.0, 90.0],
            road_length: 120.0,
            connector_radius: 8.0,
            exit_connector_radius: 15.0,
            exit_threshold_deg: 90.0,
        }
    }
}

impl RoundaboutGeometry {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("geometry: {m}")));
        if !(self.inner_lane_radius > 0.0 && self.inner_lane_radius < self.outer_lane_radius) {
            return bad("need 0 < inner_lane_radius < outer_lane_radius");
        }
        if !(self.lane_width > 0.0) {
            return bad("lane_width must be positive");
        }
        let [o0, o1] = self.main_road_lane_offsets;
        if !(o0 > 0.0 && o1 > o0 && o1 < self.inner_lane_radius) {
            return bad(
                "main-road lane offsets must satisfy 0 < inner < outer < inner_lane_radius",
            );
        }
        if !(self.road_length > self.outer_lane_radius + self.connector_radius) {
            return bad("road_length too short for the layout");
        }
        if !(self.connector_radius > 0.0 && self.exit_connector_radius > 0.0) {
            return bad("connector radii must be positive");
        }
        if !(self.road_length > self.outer_lane_radius + self.exit_connector_radius) {
            return bad("road_length too short for the exit connectors");
        }
        if !(self.exit_threshold_deg >= 0.0) {
            return bad("exit_threshold_deg must be non-negative");
        }
        for i in 0..4 {
            for j in (i + 1)..4 {
                let d =
                    wrap_angle((self.port_angles_deg[i] - self.port_angles_deg[j]).to_radians());
                if d.abs() < 1e-6 {
                    return bad("port angles must be distinct");
                }
            }
        }
        Ok(())
    }

    pub fn ring_radius(&self, lane: LaneIndex) -> f64 {
        if lane == 0 {
            self.inner_lane_radius
        } else {
            self.outer_lane_radius
        }
    }

    pub fn port_angle(&self, port: Port) -> f64 {
        self.port_angles_deg[port.index()].to_radians()
    }

    /// Connector geometry in the canonical frame of a port at polar angle pi,
    /// for a main-road lane at offset `offset` and a round lane of radius `r`.
    /// Returns the connector centre x-coordinate magnitude.
    fn connector_x(&self, offset: f64, r: f64, rho: f64) -> f64 {
        ((r + rho).powi(2) - (offset + rho).powi(2)).sqrt()
    }

    /// Polar angle at which the entry connector from `lane` meets ring `ring`.
    pub fn entry_tangent_angle(&self, port: Port, lane: LaneIndex, ring: LaneIndex) -> f64 {
        let o = self.main_road_lane_offsets[lane];
        let cx = -self.connector_x(o, self.ring_radius(ring), self.connector_radius);
        let cy = -(o + self.connector_radius);
        wrap_angle(cy.atan2(cx) + self.port_angle(port) - PI)
    }

    /// Polar angle at which ring `ring` hands over to the exit connector.
    pub fn exit_tangent_angle(&self, port: Port, ring: LaneIndex) -> f64 {
        let o = self.main_road_lane_offsets[ring];
        let rho = self.exit_connector_radius;
        let cx = -self.connector_x(o, self.ring_radius(ring), rho);
        let cy = o + rho;
        wrap_angle(cy.atan2(cx) + self.port_angle(port) - PI)
    }

    /// Path distance from the start of an entry lane to the yield point, where a
    /// vehicle that keeps its lane must be able to stop short of the round road.
    pub fn yield_station(&self, lane: LaneIndex) -> f64 {
        let o = self.main_road_lane_offsets[lane];
        let clearance = self.outer_lane_radius + 0.5 * self.lane_width;
        let x_clear = (clearance * clearance - o * o).max(0.0).sqrt();
        let x_connector = self.connector_x(o, self.outer_lane_radius, self.connector_radius);
        self.road_length - x_clear.max(x_connector)
    }

    /// Straight inbound lane of `port`.
    pub fn entry_lane(&self, port: Port, lane: LaneIndex) -> Path {
        let o = self.main_road_lane_offsets[lane];
        let frame = Frame::for_port(self.port_angle(port));
        let start = frame.apply((-self.road_length, -o));
        Path::new(
            format!("M{port}_{lane}_in"),
            vec![Segment::line(start, frame.heading(0.0), self.road_length)],
        )
    }

    /// Reference path for a route following round lane `ring` and leaving via
    /// the same-index lane of the exit road.
    ///
    /// Vehicles that start on the round road pass `ring_start_angle`, the polar
    /// angle where their path begins.
    pub fn route_path(&self, route: &Route, ring: LaneIndex) -> Path {
        let r = self.ring_radius(ring);
        let rho = self.connector_radius;
        let mut segments = Vec::new();
        let mut markers = PathMarkers::default();

        let ring_start = match route.entry {
            Some((port, lane)) => {
                let o = self.main_road_lane_offsets[lane];
                let frame = Frame::for_port(self.port_angle(port));
                let cx = -self.connector_x(o, r, rho);
                let line_len = self.road_length + cx;
                segments.push(Segment::line(
                    frame.apply((-self.road_length, -o)),
                    frame.heading(0.0),
                    line_len,
                ));
                markers.entry_line_end = Some(line_len);
                markers.yield_station = Some(self.yield_station(lane).min(line_len));
                let centre = (cx, -(o + rho));
                let end_polar = (-centre.1).atan2(-centre.0);
                segments.push(Segment::arc(
                    frame.apply(centre),
                    rho,
                    frame.polar(FRAC_PI_2),
                    -(FRAC_PI_2 - end_polar),
                ));
                self.entry_tangent_angle(port, lane, ring)
            }
            None => route.ring_start_angle,
        };
        markers.ring_start = segments.iter().map(Segment::length).sum();

        let exit_angle = self.exit_tangent_angle(route.exit, ring);
        let mut sweep = (exit_angle - ring_start).rem_euclid(TAU);
        if sweep < 1e-6 {
            sweep = TAU;
        }
        segments.push(Segment::arc((0.0, 0.0), r, ring_start, sweep));
        markers.ring_end = markers.ring_start + r * sweep;

        let o = self.main_road_lane_offsets[ring];
        let rho = self.exit_connector_radius;
        let frame = Frame::for_port(self.port_angle(route.exit));
        let cx = -self.connector_x(o, r, rho);
        let centre = (cx, o + rho);
        let start_polar = (-centre.1).atan2(-centre.0);
        segments.push(Segment::arc(
            frame.apply(centre),
            rho,
            frame.polar(start_polar),
            -(start_polar + FRAC_PI_2),
        ));
        markers.exit_port = markers.ring_end + segments.last().map(Segment::length).unwrap_or(0.0);
        segments.push(Segment::line(
            frame.apply((cx, o)),
            frame.heading(PI),
            self.road_length + cx,
        ));
        markers.exit_threshold = markers.ring_end - r * self.exit_threshold_deg.to_radians();

        let id = match route.entry {
            Some((p, l)) => format!("{p}{l}_in-R{ring}-{}_out", route.exit),
            None => format!("R{ring}-{}_out", route.exit),
        };
        let mut path = Path::new(id, segments);
        path.markers = markers;
        path
    }
}

/// A vehicle route through the roundabout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Route {
    /// Entrance port and main-road lane; `None` for vehicles already circulating.
    pub entry: Option<(Port, LaneIndex)>,
    pub exit: Port,
    /// Polar angle where the path begins for vehicles with no entry (rad).
    pub ring_start_angle: f64,
}

/// Rigid rotation taking the canonical port-at-pi frame to a port.
#[derive(Debug, Clone, Copy)]
struct Frame {
    rot: f64,
}

impl Frame {
    fn for_port(port_angle: f64) -> Self {
        Frame {
            rot: port_angle - PI,
        }
    }

    fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        let (s, c) = self.rot.sin_cos();
        (c * p.0 - s * p.1, s * p.0 + c * p.1)
    }

    fn heading(&self, h: f64) -> f64 {
        wrap_angle(h + self.rot)
    }

    fn polar(&self, a: f64) -> f64 {
        a + self.rot
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Line {
        start: (f64, f64),
        heading: f64,
        length: f64,
    },
    /// Circular arc; positive `sweep` is counter-clockwise.
    Arc {
        center: (f64, f64),
        radius: f64,
        start_angle: f64,
        sweep: f64,
    },
}

impl Segment {
    pub fn line(start: (f64, f64), heading: f64, length: f64) -> Self {
        Segment::Line {
            start,
            heading,
            length,
        }
    }

    pub fn arc(center: (f64, f64), radius: f64, start_angle: f64, sweep: f64) -> Self {
        Segment::Arc {
            center,
            radius,
            start_angle,
            sweep,
        }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Segment::Line { length, .. } => length,
            Segment::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    /// Point, tangent heading and signed curvature at local arc-length `t`.
    pub fn pose_at(&self, t: f64) -> ((f64, f64), f64, f64) {
        match *self {
            Segment::Line { start, heading, .. } => {
                let (s, c) = heading.sin_cos();
                ((start.0 + c * t, start.1 + s * t), heading, 0.0)
            }
            Segment::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let dir = sweep.signum();
                let a = start_angle + dir * t / radius;
                let (s, c) = a.sin_cos();
                (
                    (center.0 + radius * c, center.1 + radius * s),
                    wrap_angle(a + dir * FRAC_PI_2),
                    dir / radius,
                )
            }
        }
    }

    /// Foot-point local arc-length of `p`, clamped to the segment.
    fn foot(&self, p: (f64, f64)) -> f64 {
        match *self {
            Segment::Line {
                start,
                heading,
                length,
            } => {
                let (s, c) = heading.sin_cos();
                ((p.0 - start.0) * c + (p.1 - start.1) * s).clamp(0.0, length)
            }
            Segment::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let polar = (p.1 - center.1).atan2(p.0 - center.0);
                let span = sweep.abs();
                let u = if sweep >= 0.0 {
                    (polar - start_angle).rem_euclid(TAU)
                } else {
                    (start_angle - polar).rem_euclid(TAU)
                };
                let u = if u <= span {
                    u
                } else if u - span < TAU - u {
                    span
                } else {
                    0.0
                };
                u * radius
            }
        }
    }
}

/// Stations of notable points along a route path.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathMarkers {
    pub entry_line_end: Option<f64>,
    pub yield_station: Option<f64>,
    pub ring_start: f64,
    pub exit_threshold: f64,
    pub ring_end: f64,
    pub exit_port: f64,
}

/// Result of projecting a pose onto a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc-length of the foot point (m).
    pub s: f64,
    /// Signed lateral offset, left of the travel direction positive (m).
    pub dy: f64,
    /// Heading error wrapped to (-pi, pi] (rad); zero when no heading given.
    pub dphi: f64,
    /// Euclidean distance to the foot point (m).
    pub distance: f64,
    /// Centerline tangent heading at the foot point (rad).
    pub tangent: f64,
    /// Signed curvature at the foot point (1/m).
    pub curvature: f64,
}

/// Lane reference: a C1 chain of line and arc segments parameterized by arc-length.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub id: String,
    segments: Vec<Segment>,
    offsets: Vec<f64>,
    pub markers: PathMarkers,
}

impl Path {
    pub fn new(id: impl Into<String>, segments: Vec<Segment>) -> Self {
        let mut offsets = Vec::with_capacity(segments.len());
        let mut acc = 0.0;
        for seg in &segments {
            offsets.push(acc);
            acc += seg.length();
        }
        Path {
            id: id.into(),
            segments,
            offsets,
            markers: PathMarkers::default(),
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn length(&self) -> f64 {
        self.offsets.last().copied().unwrap_or(0.0)
            + self.segments.last().map(Segment::length).unwrap_or(0.0)
    }

    /// Point, heading and curvature at station `s`; extrapolates linearly past the ends.
    pub fn pose_at(&self, s: f64) -> ((f64, f64), f64, f64) {
        if s <= 0.0 {
            let ((x, y), h, _) = self.segments[0].pose_at(0.0);
            return ((x + s * h.cos(), y + s * h.sin()), h, 0.0);
        }
        let idx = self
            .offsets
            .iter()
            .rposition(|&o| o <= s)
            .unwrap_or_default();
        let seg = &self.segments[idx];
        let local = s - self.offsets[idx];
        if local > seg.length() {
            let ((x, y), h, _) = seg.pose_at(seg.length());
            let extra = local - seg.length();
            return ((x + extra * h.cos(), y + extra * h.sin()), h, 0.0);
        }
        seg.pose_at(local)
    }

    fn project_segments(
        &self,
        p: (f64, f64),
        heading: Option<f64>,
        range: std::ops::Range<usize>,
    ) -> Projection {
        let mut best: Option<(f64, usize, f64)> = None;
        for i in range {
            let t = self.segments[i].foot(p);
            let ((fx, fy), _, _) = self.segments[i].pose_at(t);
            let d = (p.0 - fx).hypot(p.1 - fy);
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, i, t));
            }
        }
        let (distance, i, t) = best.expect("path has at least one segment");
        let ((fx, fy), tangent, curvature) = self.segments[i].pose_at(t);
        let dy = -(p.0 - fx) * tangent.sin() + (p.1 - fy) * tangent.cos();
        Projection {
            s: self.offsets[i] + t,
            dy,
            dphi: heading.map_or(0.0, |h| wrap_angle(h - tangent)),
            distance,
            tangent,
            curvature,
        }
    }

    /// Nearest-point projection over the whole path.
    pub fn project(&self, p: (f64, f64), heading: Option<f64>) -> Projection {
        self.project_segments(p, heading, 0..self.segments.len())
    }

    /// Projection restricted to segments overlapping `[hint - back, hint + ahead]`.
    pub fn project_near(
        &self,
        p: (f64, f64),
        heading: Option<f64>,
        hint: f64,
        back: f64,
        ahead: f64,
    ) -> Projection {
        let lo = hint - back;
        let hi = hint + ahead;
        let first = self
            .offsets
            .iter()
            .zip(&self.segments)
            .position(|(&o, seg)| o + seg.length() >= lo)
            .unwrap_or(0);
        let last = self
            .offsets
            .iter()
            .rposition(|&o| o <= hi)
            .unwrap_or(0)
            .max(first);
        self.project_segments(p, heading, first..last + 1)
    }
}

/// Lateral error, heading error and station of a pose relative to a lane,
/// failing when the pose is farther than two lane widths from it.
pub fn reference_pose(
    pose: (f64, f64, f64),
    lane: &Path,
    lane_width: f64,
) -> Result<(f64, f64, f64)> {
    let proj = lane.project((pose.0, pose.1), Some(pose.2));
    if proj.distance > 2.0 * lane_width {
        return Err(Error::Projection {
            x: pose.0,
            y: pose.1,
            distance: proj.distance,
            lane: lane.id.clone(),
        });
    }
    Ok((proj.dy, proj.dphi, proj.s))
}
