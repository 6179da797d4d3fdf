#![no_main]

use libfuzzer_sys::fuzz_target;
use lrp::session::protocol::{decode_command, encode_frame, FrameDecoder};

// Feeds the bytes in two chunks to exercise partial reads.
fuzz_target!(|data: &[u8]| {
    let split = data.first().map_or(0, |&b| b as usize % (data.len() + 1));
    let mut decoder = FrameDecoder::new(64 * 1024);
    decoder.push(&data[..split]);
    let mut frames = Vec::new();
    while let Ok(Some(f)) = decoder.next_frame() {
        frames.push(f);
    }
    decoder.push(&data[split..]);
    while let Ok(Some(f)) = decoder.next_frame() {
        frames.push(f);
    }
    for frame in frames {
        if let Ok(cmd) = decode_command(&frame) {
            let bytes = encode_frame(&cmd.to_frame());
            let mut d = FrameDecoder::new(usize::MAX);
            d.push(&bytes);
            let back = d.next_frame().unwrap().unwrap();
            assert_eq!(decode_command(&back).unwrap(), cmd);
        }
    }
});
