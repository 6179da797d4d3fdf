use std::f64::consts::PI;

use lrp::bridge::{sector_obstacle, BridgeHandle, RobulabBridge, Sector};
use lrp::bus::{Bus, Payload};
use lrp::expr::{EvalMode, HostObject, Value};
use lrp::msg::{Pose, LASER};
use lrp::sim::{self, RobotState, Segment, World};
use proptest::prelude::*;

fn arb_segment() -> impl Strategy<Value = Segment> {
    (-4.0..4.0f64, -4.0..4.0f64, -4.0..4.0f64, -4.0..4.0f64)
        .prop_filter("non-degenerate", |(a, b, c, d)| (a - c).hypot(b - d) > 0.05)
        .prop_map(|(a, b, c, d)| Segment::new(a, b, c, d))
}

fn arb_scan() -> impl Strategy<Value = lrp::msg::LaserScan> {
    (prop::collection::vec(arb_segment(), 0..6), -PI..PI).prop_map(|(segs, theta)| {
        let w = World::new(segs, None).unwrap();
        sim::scan(
            &w,
            &RobotState::at(Pose {
                x: 0.0,
                y: 0.0,
                theta,
            }),
        )
    })
}

fn bridge_with_scan(scan: &lrp::msg::LaserScan) -> (Bus, BridgeHandle, RobulabBridge) {
    let bus = Bus::new();
    let handle = BridgeHandle::default();
    let bridge = RobulabBridge::attach(&bus, &handle);
    bus.create_node("laser").unwrap();
    bus.start("laser").unwrap();
    bus.publish("laser", LASER, Payload::Laser(scan.clone()))
        .unwrap();
    (bus, handle, bridge)
}

const QUERIES: [&str; 3] = [
    "isThereAnObstacle:",
    "isThereALeftObstacle:",
    "isThereARightObstacle:",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn front_is_left_or_right(scan in arb_scan(), d in 0.0..6.0f64) {
        let front = sector_obstacle(&scan, Sector::Front, d);
        let left = sector_obstacle(&scan, Sector::FrontLeft, d);
        let right = sector_obstacle(&scan, Sector::FrontRight, d);
        prop_assert_eq!(front, left || right);
    }

    #[test]
    fn sectors_are_monotone_in_distance(scan in arb_scan(), a in 0.0..6.0f64, b in 0.0..6.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for sector in [Sector::Front, Sector::FrontLeft, Sector::FrontRight] {
            prop_assert!(!sector_obstacle(&scan, sector, lo) || sector_obstacle(&scan, sector, hi));
        }
    }

    #[test]
    fn left_and_right_partition_the_front(angle in -PI..PI) {
        let l = Sector::FrontLeft.contains(angle);
        let r = Sector::FrontRight.contains(angle);
        prop_assert!(!(l && r));
        prop_assert_eq!(Sector::Front.contains(angle), l || r);
    }

    #[test]
    fn queries_are_pure(scan in arb_scan(), d in 0.0..6.0f64, repeats in 1..8usize) {
        let (bus, handle, bridge) = bridge_with_scan(&scan);
        let before = bus.graph();
        bus.drain_events();
        for mode in [EvalMode::Guard, EvalMode::Action] {
            for q in QUERIES {
                let first = bridge.send(q, &[Value::Number(d)], mode).unwrap();
                prop_assert!(matches!(first, Value::Boolean(_)));
                for _ in 0..repeats {
                    let again = bridge.send(q, &[Value::Number(d)], mode).unwrap();
                    prop_assert_eq!(&again, &first);
                }
            }
        }
        prop_assert_eq!(bus.graph(), before);
        prop_assert!(bus.drain_events().is_empty());
        prop_assert_eq!(handle.command_count(), 0);
        prop_assert!(handle.take_diagnostics().is_empty());
    }

    #[test]
    fn commands_never_run_in_guards(scan in arb_scan(), x in -2.0..2.0f64) {
        let (bus, handle, bridge) = bridge_with_scan(&scan);
        let before = bus.graph();
        prop_assert!(bridge.send("forward:", &[Value::Number(x)], EvalMode::Guard).is_err());
        prop_assert!(bridge.send("turn:", &[Value::Number(x)], EvalMode::Guard).is_err());
        prop_assert!(bridge.send("stop", &[], EvalMode::Guard).is_err());
        prop_assert_eq!(bus.graph(), before);
        prop_assert_eq!(handle.command_count(), 0);
    }
}
