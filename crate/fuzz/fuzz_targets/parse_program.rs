#![no_main]

use libfuzzer_sys::fuzz_target;
use lrp::syntax::{parse_program, print_program};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(program) = parse_program(text) {
        // Anything accepted must survive a print/parse round trip unchanged.
        let printed = print_program(&program);
        let again = parse_program(&printed).expect("printed program reparses");
        assert_eq!(print_program(&again), printed);
    }
});
