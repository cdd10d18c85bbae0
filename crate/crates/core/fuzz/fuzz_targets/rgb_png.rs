#![no_main]
use libfuzzer_sys::fuzz_target;
use panobev::io::png::{decode_rgb_png, encode_rgb_png};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_rgb_png(data) {
        let again = decode_rgb_png(&encode_rgb_png(&img).expect("re-encodes")).expect("decodes");
        assert_eq!(again.to_rgb8(), img.to_rgb8());
    }
});
