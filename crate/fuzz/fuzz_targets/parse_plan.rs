#![no_main]

use libfuzzer_sys::fuzz_target;
use ocd_core::tome::{replay, unmerge, MergePlan};
use ocd_core::TokenGrid;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(plan) = MergePlan::from_json(text) else { return };
    if plan.num_tokens() > 1 << 16 {
        return;
    }
    // Replay may reject absurd prior sizes, but whatever it produces must
    // expand back to a full grid.
    let grid = TokenGrid::from_fn(plan.dims, 2, |f, y, x, c| (f + y + x + c) as f64 + 1.0).unwrap();
    if let Ok(merged) = replay(&plan, &grid) {
        unmerge(&merged, &plan).unwrap();
    }
});
