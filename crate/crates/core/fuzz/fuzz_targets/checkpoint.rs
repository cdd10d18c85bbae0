#![no_main]
use libfuzzer_sys::fuzz_target;
use panobev::io::checkpoint::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = Checkpoint::decode(data) {
        let again = Checkpoint::decode(&ck.encode().expect("re-encodes")).expect("decodes");
        assert_eq!(again.tensors.len(), ck.tensors.len());
    }
});
