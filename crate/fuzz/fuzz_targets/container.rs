#![no_main]

use libfuzzer_sys::fuzz_target;
use lipfield::container::MotionContainer;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = MotionContainer::from_bytes(data) {
        assert_eq!(c.to_bytes(), data);
    }
});
