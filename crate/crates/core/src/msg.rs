//! Message records carried on the topics of the robot graph.

use serde::{Deserialize, Serialize};

pub const COMMAND_VELOCITY: &str = "/command_velocity";
pub const POSE: &str = "/pose";
pub const LASER: &str = "/laser";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CmdVel {
    pub linear: f64,
    pub angular: f64,
}

impl CmdVel {
    pub fn is_finite(&self) -> bool {
        self.linear.is_finite() && self.angular.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// One planar laser sweep. Beam `k` points at `angle_min + k * angle_increment`
/// relative to the robot heading; a reading equal to `range_max` means no hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserScan {
    pub angle_min: f64,
    pub angle_increment: f64,
    pub range_max: f64,
    pub ranges: Vec<f64>,
}

impl LaserScan {
    pub fn beam_angle(&self, index: usize) -> f64 {
        self.angle_min + index as f64 * self.angle_increment
    }
}
