//! Scripted truth trajectories.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camgeom::{Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Body (camera) to L-frame.
    pub rotation: Mat3,
}

pub trait Trajectory: Sync {
    fn kinematics(&self, t: f64) -> Kinematics;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("at least three waypoints are needed, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoints {0} and {1} coincide")]
    Coincident(usize, usize),
    #[error("turn radius {radius} does not fit at waypoint {index}")]
    FilletTooLarge { index: usize, radius: f64 },
    #[error("speed and turn radius must be positive")]
    NonPositive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Segment {
    Line { start: [f64; 2], dir: [f64; 2], length: f64 },
    Arc { center: [f64; 2], radius: f64, start_angle: f64, sweep: f64 },
}

impl Segment {
    fn length(&self) -> f64 {
        match *self {
            Segment::Line { length, .. } => length,
            Segment::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    /// Position, unit heading, signed curvature at arc length `s`.
    fn at(&self, s: f64) -> ([f64; 2], [f64; 2], f64) {
        match *self {
            Segment::Line { start, dir, .. } => ([start[0] + s * dir[0], start[1] + s * dir[1]], dir, 0.0),
            Segment::Arc { center, radius, start_angle, sweep } => {
                let sign = sweep.signum();
                let a = start_angle + sign * s / radius;
                let pos = [center[0] + radius * a.cos(), center[1] + radius * a.sin()];
                let dir = [-sign * a.sin(), sign * a.cos()];
                (pos, dir, sign / radius)
            }
        }
    }
}

/// Closed constant-altitude, constant-speed loop through 2-D waypoints, each
/// corner rounded by a circular arc.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointLoop {
    segments: Vec<Segment>,
    length: f64,
    altitude: f64,
    speed: f64,
}

/// Flight path section of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    /// Corner points `[x, y]` in meters, traversed in order and closed.
    pub waypoints: Vec<[f64; 2]>,
    pub turn_radius: f64,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            waypoints: vec![[0.0, 0.0], [30000.0, 0.0], [30000.0, 10000.0], [0.0, 10000.0]],
            turn_radius: 5000.0,
        }
    }
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

impl WaypointLoop {
    pub fn new(waypoints: &[[f64; 2]], turn_radius: f64, altitude: f64, speed: f64) -> Result<Self, PathError> {
        let m = waypoints.len();
        if m < 3 {
            return Err(PathError::TooFewWaypoints(m));
        }
        if !(turn_radius > 0.0 && speed > 0.0) {
            return Err(PathError::NonPositive);
        }
        let unit = |i: usize, j: usize| -> Result<([f64; 2], f64), PathError> {
            let d = sub(waypoints[j], waypoints[i]);
            let l = norm(d);
            if l == 0.0 {
                return Err(PathError::Coincident(i, j));
            }
            Ok(([d[0] / l, d[1] / l], l))
        };
        // corner i: arc between the tangent points of legs (i-1 -> i) and (i -> i+1)
        let mut arcs = Vec::with_capacity(m);
        let mut trims = vec![0.0; m];
        for i in 0..m {
            let (a, _) = unit((i + m - 1) % m, i)?;
            let (b, _) = unit(i, (i + 1) % m)?;
            let turn = (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1]);
            let d = turn_radius * (turn.abs() / 2.0).tan();
            trims[i] = d;
            let w = waypoints[i];
            let t_in = [w[0] - a[0] * d, w[1] - a[1] * d];
            let side = turn.signum();
            let left = [-a[1], a[0]];
            let center = [t_in[0] + side * turn_radius * left[0], t_in[1] + side * turn_radius * left[1]];
            let r0 = sub(t_in, center);
            arcs.push(Segment::Arc { center, radius: turn_radius, start_angle: r0[1].atan2(r0[0]), sweep: turn });
        }
        let mut segments = Vec::with_capacity(2 * m);
        for i in 0..m {
            let j = (i + 1) % m;
            let (dir, len) = unit(i, j)?;
            let length = len - trims[i] - trims[j];
            if length < -1e-9 * len {
                return Err(PathError::FilletTooLarge { index: j, radius: turn_radius });
            }
            let w = waypoints[i];
            let start = [w[0] + dir[0] * trims[i], w[1] + dir[1] * trims[i]];
            if length > 0.0 {
                segments.push(Segment::Line { start, dir, length });
            }
            if arcs[j].length() > 0.0 {
                segments.push(arcs[j]);
            }
        }
        let length = segments.iter().map(Segment::length).sum();
        Ok(Self { segments, length, altitude, speed })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }
}

/// Level nadir-looking camera whose x axis points along `heading`.
pub fn nadir_rotation(heading: [f64; 2]) -> Mat3 {
    Mat3::new(heading[0], heading[1], 0.0, heading[1], -heading[0], 0.0, 0.0, 0.0, -1.0)
}

impl Trajectory for WaypointLoop {
    fn kinematics(&self, t: f64) -> Kinematics {
        let mut s = (self.speed * t).rem_euclid(self.length);
        let mut seg = self.segments[self.segments.len() - 1];
        for candidate in &self.segments {
            let l = candidate.length();
            if s <= l {
                seg = *candidate;
                break;
            }
            s -= l;
        }
        let s = s.min(seg.length());
        let (pos, dir, _) = seg.at(s);
        Kinematics {
            position: Vec3::new(pos[0], pos[1], self.altitude),
            velocity: Vec3::new(dir[0], dir[1], 0.0) * self.speed,
            rotation: nadir_rotation(dir),
        }
    }
}
