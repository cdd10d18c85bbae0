#![no_main]
use libfuzzer_sys::fuzz_target;
use panobev::io::manifest::SceneManifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = SceneManifest::parse(data) {
        let _ = m.vocabulary.resolve();
        for f in &m.frames {
            let _ = f.camera_pose();
        }
    }
});
