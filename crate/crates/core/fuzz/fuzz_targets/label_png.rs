#![no_main]
use libfuzzer_sys::fuzz_target;
use panobev::io::png::{decode_label_png, encode_label_png};
use panobev::vocab::Palette;

fuzz_target!(|data: &[u8]| {
    if let Ok(r) = decode_label_png(data) {
        let again = encode_label_png(&r, &Palette::default()).expect("decoded raster re-encodes");
        assert_eq!(decode_label_png(&again).expect("re-encoded raster decodes"), r);
    }
});
