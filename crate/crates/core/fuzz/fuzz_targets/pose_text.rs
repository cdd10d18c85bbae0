#![no_main]
use libfuzzer_sys::fuzz_target;
use panobev::io::manifest::{format_pose_text, parse_pose_text};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(p) = parse_pose_text(text) {
            assert_eq!(parse_pose_text(&format_pose_text(&p)).expect("formatted pose parses"), p);
        }
    }
});
