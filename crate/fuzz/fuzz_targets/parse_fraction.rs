#![no_main]

use libfuzzer_sys::fuzz_target;
use ocd_core::costmodel::Fraction;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(f) = text.parse::<Fraction>() {
        assert_eq!(f.to_string().parse::<Fraction>().unwrap(), f);
    }
});
