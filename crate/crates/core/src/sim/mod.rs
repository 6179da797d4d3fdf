//! Planar unicycle robot with a 270° laser in a world of line segments.

mod driver;
mod world_file;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::msg::{LaserScan, Pose};

pub use driver::{run_driver, Driver, DRIVER_NODE};
pub use world_file::{parse_world_file, WorldFile, WorldFileError};

pub const ROBOT_RADIUS: f64 = 0.25;
pub const RANGE_MAX: f64 = 30.0;
pub const BEAM_COUNT: usize = 271;
pub const ANGLE_MIN: f64 = -135.0 * PI / 180.0;
pub const ANGLE_INCREMENT: f64 = PI / 180.0;
/// Index of the beam pointing straight ahead.
pub const FRONT_BEAM: usize = 135;

type Vec2 = (f64, f64);

const CONTACT_EPS: f64 = 1e-9;

fn sub(a: Vec2, b: Vec2) -> Vec2 {
    (a.0 - b.0, a.1 - b.1)
}

fn dot(a: Vec2, b: Vec2) -> f64 {
    a.0 * b.0 + a.1 * b.1
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Segment {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    fn p(&self) -> Vec2 {
        (self.x1, self.y1)
    }

    fn q(&self) -> Vec2 {
        (self.x2, self.y2)
    }

    pub fn length(&self) -> f64 {
        (self.x2 - self.x1).hypot(self.y2 - self.y1)
    }

    /// Distance from a point to the closest point of the segment.
    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        let e = sub(self.q(), self.p());
        let w = sub((x, y), self.p());
        let s = (dot(w, e) / dot(e, e)).clamp(0.0, 1.0);
        let closest = (self.x1 + s * e.0, self.y1 + s * e.1);
        (x - closest.0).hypot(y - closest.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorldError {
    #[error("segment {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("segment {index} has zero length")]
    Degenerate { index: usize },
    #[error("bounds must be finite with min < max")]
    BadBounds,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct World {
    segments: Vec<Segment>,
    bounds: Option<Bounds>,
    /// Segments plus the bounds rectangle's four edges.
    #[serde(skip)]
    obstacles: Vec<Segment>,
}

impl World {
    pub fn new(segments: Vec<Segment>, bounds: Option<Bounds>) -> Result<Self, WorldError> {
        for (index, s) in segments.iter().enumerate() {
            if ![s.x1, s.y1, s.x2, s.y2].iter().all(|c| c.is_finite()) {
                return Err(WorldError::NonFinite { index });
            }
            if s.length() <= 0.0 {
                return Err(WorldError::Degenerate { index });
            }
        }
        let mut obstacles = segments.clone();
        if let Some(b) = bounds {
            let finite = [b.min_x, b.min_y, b.max_x, b.max_y]
                .iter()
                .all(|c| c.is_finite());
            if !finite || b.min_x >= b.max_x || b.min_y >= b.max_y {
                return Err(WorldError::BadBounds);
            }
            obstacles.extend([
                Segment::new(b.min_x, b.min_y, b.max_x, b.min_y),
                Segment::new(b.max_x, b.min_y, b.max_x, b.max_y),
                Segment::new(b.max_x, b.max_y, b.min_x, b.max_y),
                Segment::new(b.min_x, b.max_y, b.min_x, b.min_y),
            ]);
        }
        Ok(Self {
            segments,
            bounds,
            obstacles,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn bounds(&self) -> Option<Bounds> {
        self.bounds
    }

    /// Every blocking segment, including the bounds edges.
    pub fn obstacles(&self) -> &[Segment] {
        &self.obstacles
    }

    pub fn clearance(&self, x: f64, y: f64) -> f64 {
        self.obstacles
            .iter()
            .map(|s| s.distance_to(x, y))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Normalizes an angle into (−π, π].
pub fn normalize_angle(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t <= -PI {
        t + 2.0 * PI
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
    pub radius: f64,
    pub collided: bool,
}

impl RobotState {
    pub fn at(pose: Pose) -> Self {
        Self {
            x: pose.x,
            y: pose.y,
            theta: normalize_angle(pose.theta),
            v: 0.0,
            omega: 0.0,
            radius: ROBOT_RADIUS,
            collided: false,
        }
    }

    pub fn pose(&self) -> Pose {
        Pose {
            x: self.x,
            y: self.y,
            theta: self.theta,
        }
    }
}

/// Earliest fraction of the move `a -> a + m` at which a disc of radius `r`
/// touches `seg` while approaching it.
fn contact_fraction(seg: &Segment, a: Vec2, m: Vec2, r: f64) -> Option<f64> {
    let end = (a.0 + m.0, a.1 + m.1);
    let d_start = seg.distance_to(a.0, a.1);
    if d_start < r {
        // Already touching: only block motion that digs further in.
        return (seg.distance_to(end.0, end.1) < d_start).then_some(0.0);
    }
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        // Roots a hair below zero mean the disc is already touching.
        if (-CONTACT_EPS..=1.0).contains(&t) {
            let t = t.max(0.0);
            if best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
    };

    // Flat side of the capsule.
    let e = sub(seg.q(), seg.p());
    let len = dot(e, e).sqrt();
    let u = (e.0 / len, e.1 / len);
    let n = (-u.1, u.0);
    let w = sub(a, seg.p());
    let d0 = dot(w, n);
    let dm = dot(m, n);
    if dm != 0.0 {
        let target = if d0 > 0.0 { r } else { -r };
        let t = (target - d0) / dm;
        // Approaching means |d| decreases.
        if d0 * dm < 0.0 {
            let s = dot(w, u) + t * dot(m, u);
            if (0.0..=len).contains(&s) {
                consider(t);
            }
        }
    }

    // Rounded ends.
    for p in [seg.p(), seg.q()] {
        let w = sub(a, p);
        let qa = dot(m, m);
        let qb = 2.0 * dot(w, m);
        let qc = dot(w, w) - r * r;
        if qa == 0.0 || qb >= 0.0 {
            continue;
        }
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            consider((-qb - disc.sqrt()) / (2.0 * qa));
        }
    }
    best
}

/// Advances the robot by one forward-Euler step, stopping it at first contact.
pub fn step(robot: &RobotState, world: &World, dt: f64) -> RobotState {
    let mut next = *robot;
    let m = (
        robot.v * robot.theta.cos() * dt,
        robot.v * robot.theta.sin() * dt,
    );
    let a = (robot.x, robot.y);
    let hit = world
        .obstacles()
        .iter()
        .filter_map(|s| contact_fraction(s, a, m, robot.radius))
        .fold(None, |acc: Option<f64>, t| {
            Some(acc.map_or(t, |b| b.min(t)))
        });
    let frac = match hit {
        Some(t) => {
            next.collided = true;
            t
        }
        None => 1.0,
    };
    next.x = a.0 + frac * m.0;
    next.y = a.1 + frac * m.1;
    next.theta = normalize_angle(robot.theta + robot.omega * dt);
    next
}

/// Distance along the ray from `origin` at `angle` to the nearest segment,
/// capped at the laser's range.
pub fn raycast(world: &World, origin: (f64, f64), angle: f64) -> f64 {
    let d = (angle.cos(), angle.sin());
    world
        .obstacles()
        .iter()
        .filter_map(|s| ray_segment(origin, d, s))
        .fold(RANGE_MAX, f64::min)
}

fn ray_segment(o: Vec2, d: Vec2, seg: &Segment) -> Option<f64> {
    let e = sub(seg.q(), seg.p());
    let w = sub(seg.p(), o);
    let denom = cross(d, e);
    if denom == 0.0 {
        if cross(w, d) != 0.0 {
            return None;
        }
        // Collinear: the nearest endpoint ahead, or zero if the origin lies on it.
        let t1 = dot(w, d);
        let t2 = dot(sub(seg.q(), o), d);
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        return (hi >= 0.0).then_some(lo.max(0.0));
    }
    let t = cross(w, e) / denom;
    let s = cross(w, d) / denom;
    (t >= 0.0 && (0.0..=1.0).contains(&s)).then_some(t)
}

pub fn scan(world: &World, robot: &RobotState) -> LaserScan {
    let ranges = (0..BEAM_COUNT)
        .map(|k| {
            let angle = robot.theta + ANGLE_MIN + k as f64 * ANGLE_INCREMENT;
            raycast(world, (robot.x, robot.y), angle)
        })
        .collect();
    LaserScan {
        angle_min: ANGLE_MIN,
        angle_increment: ANGLE_INCREMENT,
        range_max: RANGE_MAX,
        ranges,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wall(x: f64) -> World {
        World::new(vec![Segment::new(x, -5.0, x, 5.0)], None).unwrap()
    }

    fn moving(x: f64, v: f64) -> RobotState {
        RobotState {
            v,
            ..RobotState::at(Pose {
                x,
                y: 0.0,
                theta: 0.0,
            })
        }
    }

    #[test]
    fn euler_steps() {
        let r = step(&moving(0.0, 0.25), &World::empty(), 0.05);
        assert!((r.x - 0.0125).abs() < 1e-15);
        let spin = RobotState {
            omega: 0.5,
            ..RobotState::at(Pose::default())
        };
        assert!((step(&spin, &World::empty(), 0.05).theta - 0.025).abs() < 1e-15);
    }

    #[test]
    fn contact_clamps_at_radius() {
        let r = step(&moving(1.74, 1.0), &wall(2.0), 0.05);
        assert!(r.collided);
        assert!((2.0 - r.x - 0.25).abs() < 1e-12, "{}", r.x);
        // Collision is sticky and further pushing does not penetrate.
        let r2 = step(&r, &wall(2.0), 0.05);
        assert!(r2.collided && 2.0 - r2.x >= 0.25 - 1e-12);
        // Backing away is allowed.
        let back = RobotState { v: -1.0, ..r2 };
        assert!(step(&back, &wall(2.0), 0.05).x < r2.x);
    }

    #[test]
    fn glancing_endpoint_contact() {
        let world = World::new(vec![Segment::new(1.0, 0.1, 1.0, 5.0)], None).unwrap();
        let r = step(&moving(0.0, 2.0), &world, 1.0);
        assert!(r.collided);
        assert!((world.clearance(r.x, r.y) - 0.25).abs() < 1e-12);
        assert!(r.x < 1.0);
    }

    #[test]
    fn raycast_examples() {
        assert_eq!(raycast(&wall(2.0), (0.0, 0.0), 0.0), 2.0);
        assert_eq!(raycast(&wall(2.0), (0.0, 0.0), PI / 2.0), RANGE_MAX);
        assert_eq!(raycast(&World::empty(), (0.0, 0.0), 1.234), RANGE_MAX);
        assert_eq!(raycast(&wall(40.0), (0.0, 0.0), 0.0), RANGE_MAX);
        let collinear = World::new(vec![Segment::new(1.0, 0.0, 3.0, 0.0)], None).unwrap();
        assert_eq!(raycast(&collinear, (0.0, 0.0), 0.0), 1.0);
    }

    #[test]
    fn scan_examples() {
        let s = scan(&World::empty(), &RobotState::at(Pose::default()));
        assert_eq!(s.ranges.len(), BEAM_COUNT);
        assert!(s.ranges.iter().all(|&r| r == RANGE_MAX));
        let s = scan(&wall(3.0), &RobotState::at(Pose::default()));
        assert!((s.ranges[FRONT_BEAM] - 3.0).abs() < 1e-12);
        assert!(s.beam_angle(FRONT_BEAM).abs() < 1e-12);
    }

    #[test]
    fn bounds_block_and_reflect() {
        let b = Bounds {
            min_x: -1.0,
            min_y: -1.0,
            max_x: 1.0,
            max_y: 1.0,
        };
        let w = World::new(vec![], Some(b)).unwrap();
        assert!((raycast(&w, (0.0, 0.0), 0.0) - 1.0).abs() < 1e-12);
        assert_eq!(
            World::new(vec![], Some(Bounds { max_x: -2.0, ..b })),
            Err(WorldError::BadBounds)
        );
    }

    #[test]
    fn world_validation() {
        assert_eq!(
            World::new(vec![Segment::new(1.0, 1.0, 1.0, 1.0)], None),
            Err(WorldError::Degenerate { index: 0 })
        );
        assert_eq!(
            World::new(vec![Segment::new(0.0, 0.0, f64::NAN, 1.0)], None),
            Err(WorldError::NonFinite { index: 0 })
        );
    }

    #[test]
    fn angle_normalization() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(normalize_angle(0.5), 0.5);
    }
}
