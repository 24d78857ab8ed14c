use serde::{Deserialize, Serialize};

use super::{Dims, ForegroundMask};
use crate::{Error, Result};

/// Half-open token rectangle `[y0, y1) x [x0, x1)` inside one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub y0: usize,
    pub y1: usize,
    pub x0: usize,
    pub x1: usize,
}

impl BoundingBox {
    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn area(&self) -> usize {
        self.height() * self.width()
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.y0..self.y1).contains(&y) && (self.x0..self.x1).contains(&x)
    }

    fn union(&self, other: &Self) -> Self {
        Self {
            y0: self.y0.min(other.y0),
            y1: self.y1.max(other.y1),
            x0: self.x0.min(other.x0),
            x1: self.x1.max(other.x1),
        }
    }
}

/// Padded per-frame boxes of a mask plus their union.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameBoxes {
    dims: Dims,
    /// `None` for frames with no foreground.
    pub per_frame: Vec<Option<BoundingBox>>,
    pub union: BoundingBox,
}

/// Whether the foreground crop is one box shared by all frames or one box per frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropMode {
    #[default]
    Union,
    PerFrame,
}

/// Tightest box around each frame's foreground, grown by `pad` and clamped
/// to the frame.
pub fn mask_to_padded_box(mask: &ForegroundMask, pad: usize) -> Result<FrameBoxes> {
    let dims = mask.dims();
    let mut per_frame = vec![None; dims.frames];
    for (f, slot) in per_frame.iter_mut().enumerate() {
        let mut bbox: Option<BoundingBox> = None;
        for y in 0..dims.height {
            for x in 0..dims.width {
                if mask.get(f, y, x) {
                    let tight = BoundingBox {
                        y0: y,
                        y1: y + 1,
                        x0: x,
                        x1: x + 1,
                    };
                    bbox = Some(bbox.map_or(tight, |b| b.union(&tight)));
                }
            }
        }
        *slot = bbox.map(|b| BoundingBox {
            y0: b.y0.saturating_sub(pad),
            y1: (b.y1 + pad).min(dims.height),
            x0: b.x0.saturating_sub(pad),
            x1: (b.x1 + pad).min(dims.width),
        });
    }
    let union = per_frame
        .iter()
        .flatten()
        .copied()
        .reduce(|a, b| a.union(&b))
        .ok_or(Error::EmptyForeground)?;
    Ok(FrameBoxes { dims, per_frame, union })
}

impl FrameBoxes {
    /// Build a dense crop: every frame contributes a window of the same size.
    ///
    /// In per-frame mode each frame's box is grown around its centre to the
    /// largest box size and shifted back inside the frame; frames without
    /// foreground reuse the union box position.
    pub fn crop(&self, mode: CropMode) -> Crop {
        let boxes = match mode {
            CropMode::Union => vec![self.union; self.dims.frames],
            CropMode::PerFrame => {
                let h = self.per_frame.iter().flatten().map(BoundingBox::height).max();
                let w = self.per_frame.iter().flatten().map(BoundingBox::width).max();
                let (h, w) = (h.unwrap_or(0), w.unwrap_or(0));
                self.per_frame
                    .iter()
                    .map(|b| {
                        let b = b.unwrap_or(self.union);
                        let y0 = b.y0.saturating_sub((h - b.height().min(h)) / 2);
                        let x0 = b.x0.saturating_sub((w - b.width().min(w)) / 2);
                        let y0 = y0.min(self.dims.height - h);
                        let x0 = x0.min(self.dims.width - w);
                        BoundingBox {
                            y0,
                            y1: y0 + h,
                            x0,
                            x1: x0 + w,
                        }
                    })
                    .collect()
            }
        };
        Crop {
            origin: self.dims,
            boxes,
        }
    }
}

/// Equal-sized rectangular windows, one per frame, forming an `F x h x w` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Crop {
    origin: Dims,
    boxes: Vec<BoundingBox>,
}

impl Crop {
    pub fn boxes(&self) -> &[BoundingBox] {
        &self.boxes
    }

    pub fn origin(&self) -> Dims {
        self.origin
    }

    pub fn dims(&self) -> Dims {
        Dims {
            frames: self.origin.frames,
            height: self.boxes[0].height(),
            width: self.boxes[0].width(),
        }
    }

    pub fn num_tokens(&self) -> usize {
        self.dims().num_tokens()
    }

    /// Origin flat indices of the crop tokens, in crop order (ascending).
    pub fn index_map(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.num_tokens());
        for (f, b) in self.boxes.iter().enumerate() {
            for y in b.y0..b.y1 {
                for x in b.x0..b.x1 {
                    out.push(self.origin.index(f, y, x));
                }
            }
        }
        out
    }

    pub fn mask(&self) -> ForegroundMask {
        ForegroundMask::from_fn(self.origin, |f, y, x| self.boxes[f].contains(y, x))
    }
}
