#![no_main]

use libfuzzer_sys::fuzz_target;
use lipfield::mesh::io::{parse_obj, write_obj};

fuzz_target!(|data: &[u8]| {
    if let Ok(mesh) = parse_obj(data) {
        let again = parse_obj(&write_obj(&mesh)).expect("re-parse of written OBJ");
        assert_eq!(again.faces, mesh.faces);
    }
});
