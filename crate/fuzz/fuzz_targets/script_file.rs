#![no_main]

use libfuzzer_sys::fuzz_target;
use lrp::session::script::parse_script;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(steps) = parse_script(text) {
        assert!(steps.windows(2).all(|w| w[0].tick <= w[1].tick));
    }
});
