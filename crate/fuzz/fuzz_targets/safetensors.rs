#![no_main]

use libfuzzer_sys::fuzz_target;
use lipfield::audio::wav2vec2::TensorStore;

fuzz_target!(|data: &[u8]| {
    let _ = TensorStore::from_safetensors(data);
});
