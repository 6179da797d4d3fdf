//! The `RobulabBridge` facade that action blocks use to drive the robot.
//!
//! `forward:`, `turn:` and `stop` publish on `/command_velocity`. The
//! `isThere...Obstacle:` predicates read the latest `/laser` delivery and never
//! publish, so they are safe in guards.

use std::f64::consts::FRAC_PI_4;
use std::sync::Arc;

use parking_lot::Mutex;

use crate::bus::{Bus, Lifecycle, Payload};
use crate::diag::Diagnostic;
use crate::expr::{EvalError, EvalMode, HostObject, HostRegistry, Value};
use crate::msg::{CmdVel, LaserScan, Pose, COMMAND_VELOCITY, LASER, POSE};

pub const BRIDGE_CLASS: &str = "RobulabBridge";
pub const BRIDGE_NODE: &str = "RobulabBridge";

const ANGLE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sector {
    /// [−45°, +45°]
    Front,
    /// [0°, +45°]
    FrontLeft,
    /// [−45°, 0°)
    FrontRight,
}

impl Sector {
    pub fn contains(self, angle: f64) -> bool {
        let right = (-FRAC_PI_4 - ANGLE_EPS..-ANGLE_EPS).contains(&angle);
        let left = (-ANGLE_EPS..=FRAC_PI_4 + ANGLE_EPS).contains(&angle);
        match self {
            Sector::Front => left || right,
            Sector::FrontLeft => left,
            Sector::FrontRight => right,
        }
    }
}

/// True iff some beam inside `sector` reads at most `minimum_distance`.
pub fn sector_obstacle(scan: &LaserScan, sector: Sector, minimum_distance: f64) -> bool {
    scan.ranges
        .iter()
        .enumerate()
        .any(|(k, &r)| sector.contains(scan.beam_angle(k)) && r <= minimum_distance)
}

#[derive(Debug, Default)]
struct State {
    latest_scan: Option<LaserScan>,
    latest_pose: Option<Pose>,
    command_count: u64,
    warned_no_scan: bool,
    diagnostics: Vec<Diagnostic>,
}

/// Session-side view of the bridge singleton.
#[derive(Debug, Clone, Default)]
pub struct BridgeHandle {
    state: Arc<Mutex<State>>,
}

impl BridgeHandle {
    pub fn command_count(&self) -> u64 {
        self.state.lock().command_count
    }

    pub fn latest_scan(&self) -> Option<LaserScan> {
        self.state.lock().latest_scan.clone()
    }

    pub fn latest_pose(&self) -> Option<Pose> {
        self.state.lock().latest_pose
    }

    pub fn take_diagnostics(&self) -> Vec<Diagnostic> {
        std::mem::take(&mut self.state.lock().diagnostics)
    }
}

pub struct RobulabBridge {
    bus: Bus,
    state: Arc<Mutex<State>>,
}

impl RobulabBridge {
    /// Creates and starts the bridge node, subscribed to `/laser` and `/pose`.
    pub fn attach(bus: &Bus, handle: &BridgeHandle) -> Self {
        let state = handle.state.clone();
        let setup = || -> Result<(), crate::bus::BusError> {
            bus.create_node(BRIDGE_NODE)?;
            bus.advertise(BRIDGE_NODE, COMMAND_VELOCITY)?;
            let s = state.clone();
            bus.subscribe(BRIDGE_NODE, LASER, move |d| {
                if let Payload::Laser(scan) = &d.message.payload {
                    s.lock().latest_scan = Some(scan.clone());
                }
            })?;
            let s = state.clone();
            bus.subscribe(BRIDGE_NODE, POSE, move |d| {
                if let Payload::Pose(p) = &d.message.payload {
                    s.lock().latest_pose = Some(*p);
                }
            })?;
            bus.start(BRIDGE_NODE)
        };
        if let Err(e) = setup() {
            state.lock().diagnostics.push(Diagnostic::error(
                BRIDGE_CLASS,
                format!("cannot attach: {e}"),
            ));
        }
        Self {
            bus: bus.clone(),
            state,
        }
    }

    fn command(&self, selector: &str, cmd: CmdVel, mode: EvalMode) -> Result<Value, EvalError> {
        if mode == EvalMode::Guard {
            return Err(EvalError::Host(format!(
                "`{selector}` has side effects and cannot be used in a guard"
            )));
        }
        if !cmd.is_finite() {
            return Err(EvalError::NonFinite(selector.to_string()));
        }
        if self.bus.lifecycle(BRIDGE_NODE) != Some(Lifecycle::Running) {
            return Err(EvalError::Host(format!(
                "`{selector}` not sent: bridge node is not running"
            )));
        }
        self.bus
            .publish(BRIDGE_NODE, COMMAND_VELOCITY, Payload::CmdVel(cmd))
            .map_err(|e| EvalError::Host(e.to_string()))?;
        self.state.lock().command_count += 1;
        Ok(Value::Nil)
    }

    fn query(&self, sector: Sector, distance: f64) -> Value {
        let mut s = self.state.lock();
        let hit = match &s.latest_scan {
            Some(scan) => sector_obstacle(scan, sector, distance),
            None => {
                if !s.warned_no_scan {
                    s.warned_no_scan = true;
                    s.diagnostics.push(Diagnostic::warning(
                        BRIDGE_CLASS,
                        "no laser scan received yet; obstacle queries answer false",
                    ));
                }
                false
            }
        };
        Value::Boolean(hit)
    }
}

fn number_arg(selector: &str, args: &[Value], index: usize) -> Result<f64, EvalError> {
    match args.get(index) {
        Some(v) => v.as_number().ok_or(EvalError::TypeMismatch {
            expected: "Number",
            found: v.type_name(),
        }),
        None => Err(EvalError::WrongArity {
            selector: selector.to_string(),
            expected: index + 1,
            found: args.len(),
        }),
    }
}

impl HostObject for RobulabBridge {
    fn class_name(&self) -> &str {
        BRIDGE_CLASS
    }

    fn send(&self, selector: &str, args: &[Value], mode: EvalMode) -> Result<Value, EvalError> {
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(EvalError::WrongArity {
                    selector: selector.to_string(),
                    expected: n,
                    found: args.len(),
                })
            }
        };
        let sector = match selector {
            "forward:" => {
                arity(1)?;
                let linear = number_arg(selector, args, 0)?;
                return self.command(
                    selector,
                    CmdVel {
                        linear,
                        angular: 0.0,
                    },
                    mode,
                );
            }
            "turn:" => {
                arity(1)?;
                let angular = number_arg(selector, args, 0)?;
                return self.command(
                    selector,
                    CmdVel {
                        linear: 0.0,
                        angular,
                    },
                    mode,
                );
            }
            "stop" => {
                arity(0)?;
                return self.command(selector, CmdVel::default(), mode);
            }
            "isThereAnObstacle:" => Sector::Front,
            "isThereALeftObstacle:" => Sector::FrontLeft,
            "isThereARightObstacle:" => Sector::FrontRight,
            _ => {
                return Err(EvalError::UnknownSelector {
                    receiver: BRIDGE_CLASS.to_string(),
                    selector: selector.to_string(),
                })
            }
        };
        arity(1)?;
        let distance = number_arg(selector, args, 0)?;
        Ok(self.query(sector, distance))
    }
}

/// Registers `RobulabBridge` so that `RobulabBridge uniqueInstance` attaches
/// the bridge to `bus` on first use.
pub fn install_bridge(registry: &mut HostRegistry, bus: &Bus) -> BridgeHandle {
    let handle = BridgeHandle::default();
    let (bus, h) = (bus.clone(), handle.clone());
    registry.register(BRIDGE_CLASS, move || {
        Arc::new(RobulabBridge::attach(&bus, &h))
    });
    handle
}
