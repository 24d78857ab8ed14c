//! Object-centric spatio-temporal token merging.
//!
//! Tokens are split into destinations (one sampled per spatio-temporal cell)
//! and sources (everything else). Each source finds its most similar
//! destination, the best-matching fraction `r` of sources is averaged into
//! their destinations, and the rest stay unmerged. Source similarities inside
//! the foreground are scaled by `eta`, so objects keep their tokens while the
//! background absorbs the merges.
//!
//! The resulting [`MergePlan`] is plain data: it can be serialized, replayed
//! on a second token set (inversion and generation share one plan) and used
//! to unmerge.

mod dst;
mod merge;
mod plan;
mod similarity;

pub use dst::sample_dst;
pub use merge::{apply_merge, merge_attention_inputs, replay, unmerge, AttentionInputs, MergedTokens, QueryTokens};
pub use plan::{build_plan, cap_rate, MergePlan};
pub use similarity::{eta_sim, sim};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Where a source token looks for its destination.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SearchMode {
    /// Temporally-windowed: destinations from the source's own temporal window.
    #[default]
    Wts,
    /// Temporally-global: destinations from every frame.
    Gts,
}

/// Destination sampling grid: one destination per `s_t x s_y x s_x` cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowSpec {
    pub s_t: usize,
    pub s_y: usize,
    pub s_x: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { s_t: 1, s_y: 2, s_x: 2 }
    }
}

/// Minimum number of tokens a frame must keep at one attention resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MergeCap {
    pub height: usize,
    pub width: usize,
    pub min_tokens: usize,
}

impl MergeCap {
    /// 4 tokens per frame at 8x8 and 16 at 16x16.
    pub fn low_resolution_defaults() -> Vec<MergeCap> {
        vec![
            MergeCap {
                height: 8,
                width: 8,
                min_tokens: 4,
            },
            MergeCap {
                height: 16,
                width: 16,
                min_tokens: 16,
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeConfig {
    /// Fraction of source tokens to merge.
    pub r: f64,
    /// Similarity weight applied to foreground sources; 1 disables protection.
    pub eta: f64,
    pub window: WindowSpec,
    pub search_mode: SearchMode,
    /// Draw fresh destination offsets for every temporal window.
    pub resample_per_window: bool,
    /// Merge keys and values only, leaving queries at full length.
    pub kv_only: bool,
    pub caps: Vec<MergeCap>,
    pub seed: u64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            r: 0.5,
            eta: 1.0,
            window: WindowSpec::default(),
            search_mode: SearchMode::Wts,
            resample_per_window: true,
            kv_only: true,
            caps: Vec::new(),
            seed: 0,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.r) {
            return Err(Error::Config(format!("merge rate {} outside [0, 1]", self.r)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::Config(format!("eta {} outside [0, 1]", self.eta)));
        }
        let w = &self.window;
        if w.s_t == 0 || w.s_y == 0 || w.s_x == 0 {
            return Err(Error::Config("window strides must be positive".into()));
        }
        if self.caps.iter().any(|c| c.min_tokens == 0) {
            return Err(Error::Config("merge caps must be at least 1".into()));
        }
        Ok(())
    }
}
