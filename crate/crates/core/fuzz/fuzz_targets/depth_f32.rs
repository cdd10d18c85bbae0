#![no_main]
use libfuzzer_sys::fuzz_target;
use panobev::io::depth::{decode_depth_f32, parse_sidecar};

// Input layout: sidecar JSON, a NUL byte, then the raw float payload.
fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|b| *b == 0) else {
        let _ = parse_sidecar(data);
        return;
    };
    if let Ok(side) = parse_sidecar(&data[..split]) {
        let _ = decode_depth_f32(&data[split + 1..], &side);
    }
});
