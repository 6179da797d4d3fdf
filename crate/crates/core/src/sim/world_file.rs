use serde::Deserialize;

use super::{Bounds, Segment, World, WorldError};
use crate::msg::Pose;

#[derive(Debug, thiserror::Error)]
pub enum WorldFileError {
    #[error("invalid world file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid world: {0}")]
    World(#[from] WorldError),
    #[error("initial robot pose must be finite")]
    NonFinitePose,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    #[serde(default)]
    segments: Vec<Segment>,
    #[serde(default)]
    bounds: Option<Bounds>,
    #[serde(default)]
    robot: Pose,
}

/// A loaded world plus the robot's starting pose.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldFile {
    pub world: World,
    pub initial_pose: Pose,
}

/// Parses the JSON world format:
///
/// ```json
/// {"segments": [{"x1": 3, "y1": -5, "x2": 3, "y2": 5}],
///  "bounds": {"min_x": -10, "min_y": -10, "max_x": 10, "max_y": 10},
///  "robot": {"x": 0, "y": 0, "theta": 0}}
/// ```
///
/// `bounds` and `robot` are optional; the robot defaults to the origin.
pub fn parse_world_file(text: &str) -> Result<WorldFile, WorldFileError> {
    let raw: Raw = serde_json::from_str(text)?;
    let p = raw.robot;
    if !(p.x.is_finite() && p.y.is_finite() && p.theta.is_finite()) {
        return Err(WorldFileError::NonFinitePose);
    }
    Ok(WorldFile {
        world: World::new(raw.segments, raw.bounds)?,
        initial_pose: p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_wall_world() {
        let wf = parse_world_file(include_str!("../../programs/wall_3m.json")).unwrap();
        assert_eq!(wf.world.segments().len(), 1);
        assert_eq!(wf.initial_pose, Pose::default());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            parse_world_file("{"),
            Err(WorldFileError::Json(_))
        ));
        assert!(matches!(
            parse_world_file(r#"{"segments":[{"x1":0,"y1":0,"x2":0,"y2":0}]}"#),
            Err(WorldFileError::World(WorldError::Degenerate { index: 0 }))
        ));
        assert!(matches!(
            parse_world_file(r#"{"walls":[]}"#),
            Err(WorldFileError::Json(_))
        ));
        let empty = parse_world_file("{}").unwrap();
        assert!(empty.world.obstacles().is_empty());
    }
}
