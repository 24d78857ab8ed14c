#![no_main]

use libfuzzer_sys::fuzz_target;
use ocd_core::TokenGrid;

fuzz_target!(|data: &[u8]| {
    if let Ok(grid) = TokenGrid::from_bytes(data) {
        // Anything that decodes must re-encode to the same bytes.
        let bytes = grid.to_bytes().expect("decoded grid re-encodes");
        assert_eq!(bytes, data);
    }
});
