#![no_main]

use libfuzzer_sys::fuzz_target;
use ocd_core::sampler::{make_bg_schedule, make_schedule, SamplerConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = SamplerConfig::from_json(text) else {
        return;
    };
    if cfg.validate().is_ok() && cfg.train_steps <= 100_000 {
        make_schedule(cfg.train_steps, cfg.steps).unwrap();
        make_bg_schedule(cfg.train_steps, cfg.steps, cfg.phi, cfg.gamma).unwrap();
    }
});
