#![no_main]
use libfuzzer_sys::fuzz_target;
use panobev::io::png::{decode_depth16_png, encode_depth16_png};

fuzz_target!(|data: &[u8]| {
    if let Ok(d) = decode_depth16_png(data) {
        let again = decode_depth16_png(&encode_depth16_png(&d).expect("re-encodes")).expect("decodes");
        assert_eq!(again, d);
    }
});
