#![no_main]

use libfuzzer_sys::fuzz_target;
use lrp::sim::parse_world_file;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(wf) = parse_world_file(text) {
        let p = wf.initial_pose;
        assert!(p.x.is_finite() && p.y.is_finite() && p.theta.is_finite());
        let _ = lrp::sim::raycast(&wf.world, (p.x, p.y), p.theta);
    }
});
