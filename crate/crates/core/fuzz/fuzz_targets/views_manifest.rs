#![no_main]
use libfuzzer_sys::fuzz_target;
use panobev::io::manifest::ViewsManifest;

fuzz_target!(|data: &[u8]| {
    let _ = ViewsManifest::parse(data);
});
