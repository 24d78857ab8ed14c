//! Object-centric token merging and object-centric diffusion sampling.
//!
//! The crate is organised around a small dense token core ([`tensor`]) that
//! the other modules share:
//!
//! * [`tome`] merges similar tokens inside spatio-temporal volumes, with a
//!   foreground-aware similarity that keeps object tokens unmerged.
//! * [`sampler`] runs deterministic diffusion sampling, either over the full
//!   latent or split into a foreground crop and a faster background schedule
//!   that are blended late in the trajectory.
//! * [`costmodel`] turns layer descriptions into exact FLOP, attention-map
//!   storage and token-step counts.
//! * [`synth`] generates synthetic video latents with ground-truth masks and
//!   measures merge reconstruction error.

pub mod costmodel;
mod error;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod synth;
pub mod tensor;
pub mod tome;

pub use error::{Error, Result};
pub use tensor::{BoundingBox, CropMode, Dims, ForegroundMask, GatheredTokens, TokenGrid};
