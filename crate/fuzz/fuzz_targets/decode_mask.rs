#![no_main]

use libfuzzer_sys::fuzz_target;
use ocd_core::ForegroundMask;

fuzz_target!(|data: &[u8]| {
    if let Ok(mask) = ForegroundMask::from_bytes(data) {
        let again = ForegroundMask::from_bytes(&mask.to_bytes().expect("decoded mask re-encodes")).unwrap();
        assert_eq!(again, mask);
    }
});
