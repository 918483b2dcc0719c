#![no_main]

use libfuzzer_sys::fuzz_target;
use lipfield::mesh::TopologyAssets;

fuzz_target!(|data: &[u8]| {
    if let Ok(assets) = TopologyAssets::from_json(data) {
        let _ = assets.spirals();
        let _ = assets.weights();
    }
});
