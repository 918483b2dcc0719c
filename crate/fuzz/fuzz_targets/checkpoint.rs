#![no_main]

use libfuzzer_sys::fuzz_target;
use lipfield::train::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = Checkpoint::from_bytes(data) {
        let back = Checkpoint::from_bytes(&ck.to_bytes()).expect("re-parse of written checkpoint");
        assert_eq!(back.params.len(), ck.params.len());
    }
});
