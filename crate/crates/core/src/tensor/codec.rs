//! Flat binary encodings.
//!
//! Grid: `F H W C` as little-endian `u32`, then `F*H*W*C` little-endian `f32`
//! values in flat order. Values are narrowed to `f32` on write.
//!
//! Mask: `F H W` as little-endian `u32`, then `ceil(F*H*W / 8)` bytes of
//! packed bits, least significant bit first. Unused trailing bits must be zero.

use super::{Dims, ForegroundMask, TokenGrid};
use crate::{Error, Result};

fn read_u32s<const N: usize>(bytes: &[u8]) -> Result<([usize; N], &[u8])> {
    if bytes.len() < 4 * N {
        return Err(Error::Format(format!(
            "header needs {} bytes, got {}",
            4 * N,
            bytes.len()
        )));
    }
    let (head, rest) = bytes.split_at(4 * N);
    let mut out = [0usize; N];
    for (slot, chunk) in out.iter_mut().zip(head.chunks_exact(4)) {
        let v = u32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
        *slot = usize::try_from(v).map_err(|_| Error::Overflow("header field"))?;
    }
    Ok((out, rest))
}

fn header_u32(v: usize) -> Result<[u8; 4]> {
    u32::try_from(v)
        .map(u32::to_le_bytes)
        .map_err(|_| Error::Overflow("header field"))
}

impl TokenGrid {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let d = self.dims();
        let mut out = Vec::with_capacity(16 + self.data().len() * 4);
        for v in [d.frames, d.height, d.width, self.channels()] {
            out.extend_from_slice(&header_u32(v)?);
        }
        for &v in self.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let ([frames, height, width, channels], body) = read_u32s::<4>(bytes)?;
        let dims = Dims::new(frames, height, width)?;
        if channels == 0 {
            return Err(Error::Format("channel count must be positive".into()));
        }
        let len = dims
            .num_tokens()
            .checked_mul(channels)
            .and_then(|n| n.checked_mul(4))
            .ok_or(Error::Overflow("grid length"))?;
        if body.len() != len {
            return Err(Error::Format(format!(
                "expected {len} payload bytes, got {}",
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("chunk of 4"))))
            .collect();
        TokenGrid::new(dims, channels, data)
    }
}

impl ForegroundMask {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let d = self.dims();
        let mut out = Vec::with_capacity(12 + d.num_tokens().div_ceil(8));
        for v in [d.frames, d.height, d.width] {
            out.extend_from_slice(&header_u32(v)?);
        }
        for chunk in self.bits().chunks(8) {
            let byte = chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << i));
            out.push(byte);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let ([frames, height, width], body) = read_u32s::<3>(bytes)?;
        let dims = Dims::new(frames, height, width)?;
        let n = dims.num_tokens();
        if body.len() != n.div_ceil(8) {
            return Err(Error::Format(format!(
                "expected {} packed bytes, got {}",
                n.div_ceil(8),
                body.len()
            )));
        }
        let used = n % 8;
        if used != 0 && body[body.len() - 1] >> used != 0 {
            return Err(Error::Format("nonzero padding bits".into()));
        }
        let bits = (0..n).map(|t| body[t / 8] >> (t % 8) & 1 == 1).collect();
        ForegroundMask::new(dims, bits)
    }
}
