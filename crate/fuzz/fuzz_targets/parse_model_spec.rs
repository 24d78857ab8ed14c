#![no_main]

use libfuzzer_sys::fuzz_target;
use ocd_core::costmodel::{attention_map_storage, merged_storage, Fraction, ModelSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(model) = ModelSpec::from_json(text) else { return };
    // Validated models must not overflow the storage arithmetic.
    let full = attention_map_storage(&model, 50);
    let half = Fraction::new(1, 2).unwrap();
    assert!(merged_storage(&model, 50, half, half) <= full);
});
