#![no_main]
use libfuzzer_sys::fuzz_target;
use panobev::io::config::KeyValueConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(c) = KeyValueConfig::parse(text) {
            let _ = KeyValueConfig::parse(&c.to_text());
        }
    }
});
