#![no_main]

use libfuzzer_sys::fuzz_target;
use lipfield::mesh::io::{parse_ply, write_ply, PlyFormat};

fuzz_target!(|data: &[u8]| {
    if let Ok(mesh) = parse_ply(data) {
        let again = parse_ply(&write_ply(&mesh, PlyFormat::BinaryLittleEndian)).expect("re-parse of written PLY");
        assert_eq!(again.faces, mesh.faces);
        assert_eq!(again.vertex_count(), mesh.vertex_count());
    }
});
