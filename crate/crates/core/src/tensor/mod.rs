//! Dense token grids, foreground masks and masked gather/scatter.
//!
//! Tokens are addressed by a single flat index `t = (f * H + y) * W + x`
//! (frame-major, then row-major). Every other module relies on this order
//! for sampling destinations, recording merge plans and replaying them.

mod bbox;
mod codec;
mod mask;

pub use bbox::{mask_to_padded_box, BoundingBox, Crop, CropMode, FrameBoxes};
pub use mask::ForegroundMask;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Spatio-temporal extent of a token field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub fn new(frames: usize, height: usize, width: usize) -> Result<Self> {
        let dims = Self { frames, height, width };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Shape(format!(
                "dimensions must be positive, got {}x{}x{}",
                self.frames, self.height, self.width
            )));
        }
        self.frames
            .checked_mul(self.height)
            .and_then(|n| n.checked_mul(self.width))
            .ok_or(Error::Overflow("token count"))?;
        Ok(())
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.height * self.width
    }

    pub fn num_tokens(&self) -> usize {
        self.frames * self.height * self.width
    }

    #[inline]
    pub fn index(&self, f: usize, y: usize, x: usize) -> usize {
        (f * self.height + y) * self.width + x
    }

    /// Inverse of [`Dims::index`]: `(frame, y, x)`.
    #[inline]
    pub fn coords(&self, t: usize) -> (usize, usize, usize) {
        let x = t % self.width;
        let rest = t / self.width;
        (rest / self.height, rest % self.height, x)
    }

    #[inline]
    pub fn frame_of(&self, t: usize) -> usize {
        t / self.tokens_per_frame()
    }
}

/// A dense `F x H x W x C` field of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    dims: Dims,
    channels: usize,
    data: Vec<f64>,
}

impl TokenGrid {
    pub fn new(dims: Dims, channels: usize, data: Vec<f64>) -> Result<Self> {
        dims.validate()?;
        if channels == 0 {
            return Err(Error::Shape("channel count must be positive".into()));
        }
        let expected = dims
            .num_tokens()
            .checked_mul(channels)
            .ok_or(Error::Overflow("grid length"))?;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "expected {expected} values for {}x{}x{}x{channels}, got {}",
                dims.frames,
                dims.height,
                dims.width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite value at offset {i}")));
        }
        Ok(Self { dims, channels, data })
    }

    pub fn zeros(dims: Dims, channels: usize) -> Result<Self> {
        let len = dims
            .num_tokens()
            .checked_mul(channels)
            .ok_or(Error::Overflow("grid length"))?;
        Self::new(dims, channels, vec![0.0; len])
    }

    /// Build a grid from a function of `(frame, y, x, channel)`.
    pub fn from_fn(dims: Dims, channels: usize, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Result<Self> {
        dims.validate()?;
        let mut data = Vec::with_capacity(dims.num_tokens() * channels);
        for fr in 0..dims.frames {
            for y in 0..dims.height {
                for x in 0..dims.width {
                    for c in 0..channels {
                        data.push(f(fr, y, x, c));
                    }
                }
            }
        }
        Self::new(dims, channels, data)
    }

    /// Wrap a flat token list as a `1 x 1 x n` grid.
    pub fn from_tokens(channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || !data.len().is_multiple_of(channels) {
            return Err(Error::Shape(format!(
                "{} values do not divide into tokens of {channels} channels",
                data.len()
            )));
        }
        let n = data.len() / channels;
        Self::new(Dims::new(1, 1, n)?, channels, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_tokens(&self) -> usize {
        self.dims.num_tokens()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn token(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    pub fn tokens(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.channels)
    }

    pub fn get(&self, f: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.dims.index(f, y, x) * self.channels + c]
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &TokenGrid) -> Result<f64> {
        if self.dims != other.dims || self.channels != other.channels {
            return Err(Error::Shape("grids differ in shape".into()));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Tokens pulled out of a grid together with their origin indices.
#[derive(Debug, Clone, PartialEq)]
pub struct GatheredTokens {
    origin: Dims,
    channels: usize,
    index: Vec<usize>,
    data: Vec<f64>,
}

impl GatheredTokens {
    pub fn new(origin: Dims, channels: usize, index: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        origin.validate()?;
        if channels == 0 || data.len() != index.len() * channels {
            return Err(Error::Shape(format!(
                "{} values for {} tokens of {channels} channels",
                data.len(),
                index.len()
            )));
        }
        let n = origin.num_tokens();
        if let Some(&bad) = index.iter().find(|&&t| t >= n) {
            return Err(Error::Shape(format!("index {bad} outside {n} tokens")));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite value at offset {i}")));
        }
        Ok(Self {
            origin,
            channels,
            index,
            data,
        })
    }

    pub fn origin(&self) -> Dims {
        self.origin
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn index_map(&self) -> &[usize] {
        &self.index
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn token(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    /// Reorder tokens by a permutation of positions. The set is unchanged.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(Error::Shape("permutation length mismatch".into()));
        }
        let mut seen = vec![false; self.len()];
        let mut index = Vec::with_capacity(self.len());
        let mut data = Vec::with_capacity(self.data.len());
        for &p in order {
            if p >= self.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Shape("not a permutation".into()));
            }
            index.push(self.index[p]);
            data.extend_from_slice(self.token(p));
        }
        Ok(Self {
            origin: self.origin,
            channels: self.channels,
            index,
            data,
        })
    }
}

/// Collect the tokens selected by `mask`, in ascending flat order.
pub fn gather(grid: &TokenGrid, mask: &ForegroundMask) -> Result<GatheredTokens> {
    if grid.dims() != mask.dims() {
        return Err(Error::Shape(format!(
            "grid {:?} vs mask {:?}",
            grid.dims(),
            mask.dims()
        )));
    }
    let c = grid.channels();
    let count = mask.count();
    let mut index = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * c);
    for (t, tok) in grid.tokens().enumerate() {
        if mask.is_set(t) {
            index.push(t);
            data.extend_from_slice(tok);
        }
    }
    Ok(GatheredTokens {
        origin: grid.dims(),
        channels: c,
        index,
        data,
    })
}

/// Write two disjoint token sets back into one grid.
///
/// The union of the two index maps must cover every token exactly once;
/// the order inside each map is irrelevant.
pub fn scatter(fg: &GatheredTokens, bg: &GatheredTokens) -> Result<TokenGrid> {
    if fg.origin != bg.origin {
        return Err(Error::Shape(format!(
            "origin dims differ: {:?} vs {:?}",
            fg.origin, bg.origin
        )));
    }
    if fg.channels != bg.channels {
        return Err(Error::Shape(format!(
            "channel counts differ: {} vs {}",
            fg.channels, bg.channels
        )));
    }
    let dims = fg.origin;
    let c = fg.channels;
    let n = dims.num_tokens();
    if fg.len() + bg.len() != n {
        return Err(Error::Partition(format!(
            "{} + {} tokens for a grid of {n}",
            fg.len(),
            bg.len()
        )));
    }
    let mut filled = vec![false; n];
    let mut data = vec![0.0; n * c];
    for part in [fg, bg] {
        for (i, &t) in part.index.iter().enumerate() {
            if std::mem::replace(&mut filled[t], true) {
                return Err(Error::Partition(format!("token {t} appears twice")));
            }
            data[t * c..(t + 1) * c].copy_from_slice(part.token(i));
        }
    }
    // Counts match and nothing overlapped, so every slot is filled.
    debug_assert!(filled.iter().all(|&b| b));
    TokenGrid::new(dims, c, data)
}
