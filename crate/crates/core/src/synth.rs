//! Synthetic video latents with a moving square object and its exact mask.
//!
//! Object texture is defined in object coordinates, so it travels with the
//! object; background texture is fixed in frame coordinates. Both are a smooth
//! per-channel wave plus static per-token noise, with optional per-frame noise
//! on top.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::tensor::{Dims, ForegroundMask, TokenGrid};
use crate::tome::{apply_merge, build_plan, unmerge, MergeConfig};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Texture {
    /// Amplitude of the smooth wave.
    pub gradient: f64,
    /// Amplitude of static per-token noise.
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub size: usize,
    /// Top-left corner `(y, x)` in frame 0.
    pub start: (usize, usize),
    /// Per-frame displacement `(vy, vx)`.
    pub velocity: (i64, i64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub dims: Dims,
    pub channels: usize,
    pub object: ObjectSpec,
    pub fg_texture: Texture,
    pub bg_texture: Texture,
    /// Amplitude of noise drawn afresh for every frame and token.
    #[serde(default)]
    pub temporal_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SceneSpec {
    /// A high-contrast scene of the given size with a centred static object.
    pub fn high_contrast(dims: Dims, channels: usize, object_size: usize, seed: u64) -> Self {
        let c = |n: usize| n.saturating_sub(object_size) / 2;
        Self {
            dims,
            channels,
            object: ObjectSpec {
                size: object_size,
                start: (c(dims.height), c(dims.width)),
                velocity: (0, 0),
            },
            fg_texture: Texture {
                gradient: 2.0,
                noise: 0.2,
            },
            // Background detail has to cost something to merge, otherwise
            // protecting the object is free.
            bg_texture: Texture {
                gradient: 1.0,
                noise: 0.4,
            },
            temporal_noise: 0.05,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let s = self.object.size;
        if self.channels == 0 {
            return Err(Error::Config("scene needs at least one channel".into()));
        }
        if s == 0 || s > self.dims.height || s > self.dims.width {
            return Err(Error::Config(format!(
                "object of side {s} does not fit a {}x{} frame",
                self.dims.height, self.dims.width
            )));
        }
        let amps = [
            self.fg_texture.gradient,
            self.fg_texture.noise,
            self.bg_texture.gradient,
            self.bg_texture.noise,
            self.temporal_noise,
        ];
        if amps.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Config("texture amplitudes must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Top-left corner of the object in frame `f`, clamped into the frame.
    pub fn object_origin(&self, f: usize) -> (usize, usize) {
        let place = |start: usize, v: i64, extent: usize| {
            let max = (extent - self.object.size) as i128;
            (start as i128 + v as i128 * f as i128).clamp(0, max) as usize
        };
        (
            place(self.object.start.0, self.object.velocity.0, self.dims.height),
            place(self.object.start.1, self.object.velocity.1, self.dims.width),
        )
    }
}

fn wave(amp: f64, u: f64, v: f64, c: usize, phase: f64) -> f64 {
    let kc = (c + 1) as f64;
    amp * (TAU * (u * kc * 0.5 + v * (1.0 + 0.25 * kc)) + phase).cos()
}

fn normals(rng: &mut impl Rng, n: usize, amp: f64) -> Vec<f64> {
    (0..n).map(|_| amp * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Render the scene. Deterministic in `scene.seed`.
pub fn generate(scene: &SceneSpec) -> Result<(TokenGrid, ForegroundMask)> {
    scene.validate()?;
    let Dims { frames, height, width } = scene.dims;
    let (c, s) = (scene.channels, scene.object.size);
    let bg_noise = normals(
        &mut rng::stream(scene.seed, "scene-bg", 0),
        height * width * c,
        scene.bg_texture.noise,
    );
    let fg_noise = normals(
        &mut rng::stream(scene.seed, "scene-fg", 0),
        s * s * c,
        scene.fg_texture.noise,
    );
    let temporal = normals(
        &mut rng::stream(scene.seed, "scene-temporal", 0),
        scene.dims.num_tokens() * c,
        scene.temporal_noise,
    );
    let origins: Vec<(usize, usize)> = (0..frames).map(|f| scene.object_origin(f)).collect();
    let inside = |f: usize, y: usize, x: usize| {
        let (oy, ox) = origins[f];
        (oy..oy + s).contains(&y) && (ox..ox + s).contains(&x)
    };

    let mask = ForegroundMask::from_fn(scene.dims, inside);
    let grid = TokenGrid::from_fn(scene.dims, c, |f, y, x, ch| {
        let t = scene.dims.index(f, y, x);
        let base = if inside(f, y, x) {
            let (oy, ox) = origins[f];
            let (u, v) = (y - oy, x - ox);
            // Opposite phase to the background keeps the object distinct.
            wave(
                scene.fg_texture.gradient,
                u as f64 / s as f64,
                v as f64 / s as f64,
                ch,
                0.5 * TAU,
            ) + fg_noise[(u * s + v) * c + ch]
        } else {
            wave(
                scene.bg_texture.gradient,
                y as f64 / height as f64,
                x as f64 / width as f64,
                ch,
                0.0,
            ) + bg_noise[(y * width + x) * c + ch]
        };
        base + temporal[t * c + ch]
    })?;
    Ok((grid, mask))
}

/// Standard normal latent from the named substream of `seed`.
pub fn gaussian_latent(dims: Dims, channels: usize, seed: u64, stream: &str) -> Result<TokenGrid> {
    dims.validate()?;
    let n = dims
        .num_tokens()
        .checked_mul(channels)
        .ok_or(Error::Overflow("latent size"))?;
    TokenGrid::new(dims, channels, normals(&mut rng::stream(seed, stream, 0), n, 1.0))
}

/// Mean squared reconstruction error split by a mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReconMetrics {
    pub fg_mse: f64,
    pub bg_mse: f64,
    pub total_mse: f64,
}

/// Per-element MSE between two grids, split by `mask`. A side with no tokens
/// reports 0.
pub fn recon_metrics(original: &TokenGrid, recon: &TokenGrid, mask: &ForegroundMask) -> Result<ReconMetrics> {
    if original.dims() != recon.dims() || original.channels() != recon.channels() || original.dims() != mask.dims() {
        return Err(Error::Shape("reconstruction, original and mask must share dims".into()));
    }
    let (mut fg, mut bg) = (0.0, 0.0);
    for (t, (a, b)) in original.tokens().zip(recon.tokens()).enumerate() {
        let e: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        if mask.is_set(t) {
            fg += e;
        } else {
            bg += e;
        }
    }
    let c = original.channels() as f64;
    let n_fg = mask.count() as f64;
    let n_bg = original.num_tokens() as f64 - n_fg;
    let mean = |sum: f64, n: f64| if n == 0.0 { 0.0 } else { sum / (n * c) };
    Ok(ReconMetrics {
        fg_mse: mean(fg, n_fg),
        bg_mse: mean(bg, n_bg),
        total_mse: mean(fg + bg, n_fg + n_bg),
    })
}

/// Error of `unmerge(apply_merge(grid))` under a plan built from `grid`.
pub fn merge_roundtrip_error(grid: &TokenGrid, mask: &ForegroundMask, cfg: &MergeConfig) -> Result<ReconMetrics> {
    let plan = build_plan(grid, mask, cfg)?;
    let recon = unmerge(&apply_merge(grid, &plan)?, &plan)?;
    recon_metrics(grid, &recon, mask)
}

/// Object size relative to the frame: boxes covering at least (48/64)^2 of
/// the frame are large, at least (32/64)^2 medium, anything smaller small.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeBucket {
    Large,
    Medium,
    Small,
}

impl SizeBucket {
    pub fn of(delta: usize, tokens_per_frame: usize) -> Self {
        // delta / tpf >= (a/64)^2  <=>  4096 * delta >= a^2 * tpf.
        let (d, t) = (4096 * delta as u128, tokens_per_frame as u128);
        if d >= 48 * 48 * t {
            Self::Large
        } else if d >= 32 * 32 * t {
            Self::Medium
        } else {
            Self::Small
        }
    }
}

/// Binary PGM image of one channel of one frame, min-max scaled to 0..=255.
pub fn frame_pgm(grid: &TokenGrid, frame: usize, channel: usize) -> Result<Vec<u8>> {
    let Dims { frames, height, width } = grid.dims();
    if frame >= frames || channel >= grid.channels() {
        return Err(Error::Shape(format!("frame {frame} / channel {channel} out of range")));
    }
    let vals: Vec<f64> = (0..height * width)
        .map(|i| grid.get(frame, i / width, i % width, channel))
        .collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(vals.iter().map(|v| ((v - lo) * scale).round() as u8));
    Ok(out)
}
