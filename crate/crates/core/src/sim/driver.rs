use std::sync::Arc;

use parking_lot::Mutex;

use super::{scan, step, RobotState, World};
use crate::bus::{Bus, BusError, Lifecycle, Payload, SubscriptionId};
use crate::diag::Diagnostic;
use crate::msg::{CmdVel, Pose, COMMAND_VELOCITY, LASER, POSE};

pub const DRIVER_NODE: &str = "Driver";

#[derive(Debug)]
struct Shared {
    robot: RobotState,
    pending: Option<CmdVel>,
    diagnostics: Vec<Diagnostic>,
}

/// The simulated robot's bus node. Call [`Driver::tick`] once per sim tick.
#[derive(Debug)]
pub struct Driver {
    bus: Bus,
    world: World,
    dt: f64,
    shared: Arc<Mutex<Shared>>,
    subscription: SubscriptionId,
}

/// Creates and starts the `Driver` node on `bus`.
pub fn run_driver(bus: &Bus, world: World, robot: RobotState, dt: f64) -> Result<Driver, BusError> {
    assert!(dt > 0.0, "time step must be positive");
    let shared = Arc::new(Mutex::new(Shared {
        robot,
        pending: None,
        diagnostics: Vec::new(),
    }));
    bus.create_node(DRIVER_NODE)?;
    bus.advertise(DRIVER_NODE, POSE)?;
    bus.advertise(DRIVER_NODE, LASER)?;
    let sink = shared.clone();
    let subscription = bus.subscribe(DRIVER_NODE, COMMAND_VELOCITY, move |d| {
        let mut s = sink.lock();
        match &d.message.payload {
            Payload::CmdVel(cmd) if cmd.is_finite() => s.pending = Some(*cmd),
            other => s.diagnostics.push(Diagnostic::warning(
                DRIVER_NODE,
                format!("ignoring malformed command {other:?}"),
            )),
        }
    })?;
    bus.start(DRIVER_NODE)?;
    Ok(Driver {
        bus: bus.clone(),
        world,
        dt,
        shared,
        subscription,
    })
}

impl Driver {
    /// Applies the latest command, integrates one step, then publishes pose and
    /// laser. Does nothing while the node is not running. Returns whether a
    /// step happened.
    pub fn tick(&self) -> Result<bool, BusError> {
        if self.bus.lifecycle(DRIVER_NODE) != Some(Lifecycle::Running) {
            return Ok(false);
        }
        {
            let mut s = self.shared.lock();
            if let Some(cmd) = s.pending.take() {
                s.robot.v = cmd.linear;
                s.robot.omega = cmd.angular;
            }
            s.robot = step(&s.robot, &self.world, self.dt);
        }
        self.publish_state()?;
        Ok(true)
    }

    /// Publishes the current pose and scan without moving.
    pub fn publish_state(&self) -> Result<(), BusError> {
        let robot = self.robot();
        self.bus
            .publish(DRIVER_NODE, POSE, Payload::Pose(robot.pose()))?;
        self.bus.publish(
            DRIVER_NODE,
            LASER,
            Payload::Laser(scan(&self.world, &robot)),
        )?;
        Ok(())
    }

    pub fn robot(&self) -> RobotState {
        self.shared.lock().robot
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn subscription(&self) -> SubscriptionId {
        self.subscription
    }

    /// Moves the robot back to `pose` and clears the collision flag. The
    /// commanded velocities are kept.
    pub fn reset(&self, pose: Pose) {
        let mut s = self.shared.lock();
        let RobotState {
            v, omega, radius, ..
        } = s.robot;
        s.robot = RobotState {
            v,
            omega,
            radius,
            ..RobotState::at(pose)
        };
    }

    pub fn take_diagnostics(&self) -> Vec<Diagnostic> {
        std::mem::take(&mut self.shared.lock().diagnostics)
    }
}
