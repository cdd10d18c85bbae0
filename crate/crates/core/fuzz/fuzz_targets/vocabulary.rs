#![no_main]
use libfuzzer_sys::fuzz_target;
use panobev::vocab::Vocabulary;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(v) = Vocabulary::parse("fuzz", text) {
            let _ = v.palette();
        }
    }
});
