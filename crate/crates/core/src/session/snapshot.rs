use indexmap::IndexMap;
use serde::Serialize;

use crate::bus::GraphSnapshot;
use crate::diag::Diagnostic;
use crate::expr::Value;
use crate::interp::{InstanceStatus, Runtime};
use crate::msg::{LaserScan, Pose};
use crate::sim::{Bounds, Segment};

pub const SCAN_DECIMATION: usize = 5;
pub const SNAPSHOT_DIAGNOSTICS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveStateView {
    pub machine: String,
    pub state: String,
    pub variables: IndexMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MachineView {
    pub machine: String,
    pub status: InstanceStatus,
    /// Deepest first.
    pub active: Vec<ActiveStateView>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorldView {
    pub segments: Vec<Segment>,
    pub bounds: Option<Bounds>,
}

/// Immutable view of a session, pushed to dashboard clients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSnapshot {
    pub tick: u64,
    pub paused: bool,
    pub machines: Vec<MachineView>,
    pub root_variables: IndexMap<String, Value>,
    pub pose: Pose,
    pub collided: bool,
    pub scan: LaserScan,
    pub world: WorldView,
    pub graph: GraphSnapshot,
    pub diagnostics: Vec<Diagnostic>,
    pub source: String,
}

impl SessionSnapshot {
    /// Active state names of every machine, deepest first.
    pub fn active_states(&self) -> Vec<&str> {
        self.machines
            .iter()
            .flat_map(|m| m.active.iter().map(|a| a.state.as_str()))
            .collect()
    }
}

pub fn machine_views(runtime: &Runtime) -> Vec<MachineView> {
    runtime
        .instances()
        .iter()
        .map(|inst| MachineView {
            machine: inst.machine_path(),
            status: inst.status(),
            active: runtime
                .active_configuration(inst)
                .into_iter()
                .map(|a| ActiveStateView {
                    machine: a.machine,
                    state: a.state,
                    variables: a.variables.into_iter().collect(),
                })
                .collect(),
        })
        .collect()
}

/// Keeps every `SCAN_DECIMATION`-th beam, adjusting the angular step.
pub fn decimate(scan: &LaserScan) -> LaserScan {
    LaserScan {
        angle_min: scan.angle_min,
        angle_increment: scan.angle_increment * SCAN_DECIMATION as f64,
        range_max: scan.range_max,
        ranges: scan
            .ranges
            .iter()
            .step_by(SCAN_DECIMATION)
            .copied()
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{self, RobotState, World};

    #[test]
    fn decimated_beams_keep_their_angles() {
        let w = World::new(vec![Segment::new(2.0, -0.3, 2.0, 0.3)], None).unwrap();
        let full = sim::scan(&w, &RobotState::at(Pose::default()));
        let d = decimate(&full);
        assert_eq!(d.ranges.len(), 55);
        for (j, r) in d.ranges.iter().enumerate() {
            assert_eq!(*r, full.ranges[j * SCAN_DECIMATION]);
            assert!((d.beam_angle(j) - full.beam_angle(j * SCAN_DECIMATION)).abs() < 1e-12);
        }
    }
}
