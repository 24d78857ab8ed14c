#![allow(dead_code)]

use ocd_core::tome::{MergeConfig, SearchMode, WindowSpec};
use ocd_core::{Dims, ForegroundMask, TokenGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_grid(rng: &mut impl Rng, dims: Dims, channels: usize) -> TokenGrid {
    TokenGrid::from_fn(dims, channels, |_, _, _, _| rng.random_range(-1.0..1.0)).unwrap()
}

/// Tokens drawn from a few prototypes plus jitter, so matches are uneven and
/// exact ties occur.
pub fn clustered_grid(rng: &mut impl Rng, dims: Dims, channels: usize) -> TokenGrid {
    let protos: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..channels).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut data = Vec::with_capacity(dims.num_tokens() * channels);
    for _ in 0..dims.num_tokens() {
        let p = &protos[rng.random_range(0..protos.len())];
        let jitter = if rng.random_bool(0.3) { 0.0 } else { 0.2 };
        data.extend(p.iter().map(|v| v + jitter * rng.random_range(-1.0..1.0)));
    }
    TokenGrid::new(dims, channels, data).unwrap()
}

pub fn random_mask(rng: &mut impl Rng, dims: Dims, p: f64) -> ForegroundMask {
    ForegroundMask::from_fn(dims, |_, _, _| rng.random_bool(p))
}

pub fn small_dims(rng: &mut impl Rng, max_tokens: usize) -> Dims {
    loop {
        let d = Dims::new(
            rng.random_range(1..=3),
            rng.random_range(1..=5),
            rng.random_range(1..=5),
        )
        .unwrap();
        if d.num_tokens() <= max_tokens && d.num_tokens() >= 2 {
            return d;
        }
    }
}

pub fn random_config(rng: &mut impl Rng) -> MergeConfig {
    MergeConfig {
        r: rng.random_range(0.0..=1.0),
        eta: 1.0,
        window: WindowSpec {
            s_t: rng.random_range(1..=2),
            s_y: rng.random_range(1..=3),
            s_x: rng.random_range(1..=3),
        },
        search_mode: if rng.random_bool(0.5) {
            SearchMode::Wts
        } else {
            SearchMode::Gts
        },
        resample_per_window: rng.random_bool(0.5),
        kv_only: true,
        caps: Vec::new(),
        seed: rng.random(),
    }
}
