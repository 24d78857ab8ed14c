use super::Dims;
use crate::{Error, Result};

/// One foreground bit per token, in the same flat order as [`super::TokenGrid`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForegroundMask {
    dims: Dims,
    bits: Vec<bool>,
}

impl ForegroundMask {
    pub fn new(dims: Dims, bits: Vec<bool>) -> Result<Self> {
        dims.validate()?;
        if bits.len() != dims.num_tokens() {
            return Err(Error::Shape(format!(
                "mask has {} bits for {} tokens",
                bits.len(),
                dims.num_tokens()
            )));
        }
        Ok(Self { dims, bits })
    }

    pub fn filled(dims: Dims, value: bool) -> Self {
        Self {
            dims,
            bits: vec![value; dims.num_tokens()],
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(dims.num_tokens());
        for fr in 0..dims.frames {
            for y in 0..dims.height {
                for x in 0..dims.width {
                    bits.push(f(fr, y, x));
                }
            }
        }
        Self { dims, bits }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn is_set(&self, t: usize) -> bool {
        self.bits[t]
    }

    pub fn get(&self, f: usize, y: usize, x: usize) -> bool {
        self.bits[self.dims.index(f, y, x)]
    }

    pub fn set(&mut self, f: usize, y: usize, x: usize, value: bool) {
        let t = self.dims.index(f, y, x);
        self.bits[t] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn complement(&self) -> Self {
        Self {
            dims: self.dims,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Shrink each `k x k` spatial block to one bit, set if any source bit is set.
    ///
    /// Partial blocks at the right and bottom edges count as blocks.
    pub fn downsample(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("downsample factor must be positive".into()));
        }
        let dims = Dims::new(
            self.dims.frames,
            self.dims.height.div_ceil(k),
            self.dims.width.div_ceil(k),
        )?;
        let mut out = Self::filled(dims, false);
        for f in 0..self.dims.frames {
            for y in 0..self.dims.height {
                for x in 0..self.dims.width {
                    if self.get(f, y, x) {
                        out.set(f, y / k, x / k, true);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Expand each bit into a `k x k` block, cropped to `target`.
    pub fn upsample(&self, k: usize, target: Dims) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("upsample factor must be positive".into()));
        }
        if target.frames != self.dims.frames
            || target.height.div_ceil(k) != self.dims.height
            || target.width.div_ceil(k) != self.dims.width
        {
            return Err(Error::Shape(format!(
                "{:?} is not a x{k} upsampling of {:?}",
                target, self.dims
            )));
        }
        Ok(Self::from_fn(target, |f, y, x| self.get(f, y / k, x / k)))
    }

    /// True if every bit set in `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.dims == other.dims && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}
