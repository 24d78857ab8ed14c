use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::similarity::{dot, prepare, sim_from_parts, weight};
use super::{sample_dst, MergeCap, MergeConfig, SearchMode};
use crate::tensor::{Dims, ForegroundMask, TokenGrid};
use crate::{Error, Result};

/// A recorded partition of tokens into destinations, unmerged sources and
/// merged sources.
///
/// `merges` holds `(source index, destination position)` pairs where the
/// position indexes into `dst`. `sizes` are the destination weights before
/// merging (1 for a freshly built plan).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergePlan {
    pub dims: Dims,
    pub dst: Vec<usize>,
    pub unm: Vec<usize>,
    pub merges: Vec<(usize, usize)>,
    pub sizes: Vec<u64>,
    pub seed: u64,
}

impl MergePlan {
    pub fn num_tokens(&self) -> usize {
        self.dims.num_tokens()
    }

    /// Tokens left after merging: unmerged sources plus destinations.
    pub fn num_merged_tokens(&self) -> usize {
        self.unm.len() + self.dst.len()
    }

    /// Check the partition and index invariants.
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let n = self.num_tokens();
        let strictly_ascending = |v: &[usize]| v.windows(2).all(|w| w[0] < w[1]);
        if !strictly_ascending(&self.dst) || !strictly_ascending(&self.unm) {
            return Err(Error::Format("dst and unm must be strictly ascending".into()));
        }
        if self.dst.is_empty() {
            return Err(Error::Format("plan has no destinations".into()));
        }
        if self.sizes.len() != self.dst.len() || self.sizes.contains(&0) {
            return Err(Error::Format("one positive size per destination required".into()));
        }
        let total = self.dst.len() + self.unm.len() + self.merges.len();
        if total != n {
            return Err(Error::Partition(format!("{total} entries for {n} tokens")));
        }
        let mut seen = vec![false; n];
        let srcs = self.merges.iter().map(|&(s, _)| s);
        for t in self.dst.iter().copied().chain(self.unm.iter().copied()).chain(srcs) {
            if t >= n {
                return Err(Error::Partition(format!("index {t} outside {n} tokens")));
            }
            if std::mem::replace(&mut seen[t], true) {
                return Err(Error::Partition(format!("token {t} listed twice")));
            }
        }
        if let Some(&(s, p)) = self.merges.iter().find(|&&(_, p)| p >= self.dst.len()) {
            return Err(Error::Format(format!("merge of {s} targets missing destination {p}")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    /// Parse and validate a plan.
    pub fn from_json(text: &str) -> Result<Self> {
        let plan: MergePlan = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }
}

/// Largest merge rate that still leaves the configured minimum number of
/// tokens per frame at this resolution. Uncapped resolutions pass `r` through.
pub fn cap_rate(r: f64, tokens_per_frame: usize, resolution: (usize, usize), caps: &[MergeCap]) -> f64 {
    match caps.iter().find(|c| (c.height, c.width) == resolution) {
        None => r,
        Some(cap) if cap.min_tokens >= tokens_per_frame => 0.0,
        Some(cap) => {
            let ceiling = (tokens_per_frame - cap.min_tokens) as f64 / tokens_per_frame as f64;
            r.min(ceiling)
        }
    }
}

struct Pool {
    positions: Vec<usize>,
    data: Vec<f64>,
    n2: Vec<f64>,
}

/// Build a merge plan for `tokens`.
///
/// Every source is matched to its most similar destination (within its
/// temporal window for WTS, anywhere for GTS). Then `floor(r_eff * |src|)`
/// sources with the highest match scores are merged. Ties go to the lower
/// source index, and within a source to the lower destination index.
pub fn build_plan(tokens: &TokenGrid, mask: &ForegroundMask, cfg: &MergeConfig) -> Result<MergePlan> {
    cfg.validate()?;
    let dims = tokens.dims();
    if mask.dims() != dims {
        return Err(Error::Shape(format!("tokens {dims:?} vs mask {:?}", mask.dims())));
    }
    let n = dims.num_tokens();
    let c = tokens.channels();
    let mut unit = Vec::with_capacity(tokens.data().len());
    let mut norms = Vec::with_capacity(n);
    for (index, tok) in tokens.tokens().enumerate() {
        let (scaled, n2) = prepare(tok).ok_or(Error::DegenerateToken { index })?;
        unit.extend_from_slice(&scaled);
        norms.push(n2);
    }
    let token = |t: usize| &unit[t * c..(t + 1) * c];

    let dst = sample_dst(dims, cfg.window, cfg.resample_per_window, cfg.seed);
    let mut is_dst = vec![false; n];
    for &t in &dst {
        is_dst[t] = true;
    }
    let src: Vec<usize> = (0..n).filter(|&t| !is_dst[t]).collect();

    let tpf = dims.tokens_per_frame();
    let r_eff = cap_rate(cfg.r, tpf, (dims.height, dims.width), &cfg.caps);
    let target = ((r_eff * src.len() as f64).floor() as usize).min(src.len());

    let mut plan = MergePlan {
        dims,
        dst,
        unm: Vec::new(),
        merges: Vec::new(),
        sizes: Vec::new(),
        seed: cfg.seed,
    };
    plan.sizes = vec![1; plan.dst.len()];
    if target == 0 {
        plan.unm = src;
        return Ok(plan);
    }

    // Candidate destinations per temporal window, gathered contiguously.
    let s_t = cfg.window.s_t.clamp(1, dims.frames);
    let window_of = |t: usize| dims.frame_of(t) / s_t;
    let gather = |positions: Vec<usize>| {
        let mut data = Vec::with_capacity(positions.len() * c);
        let mut n2 = Vec::with_capacity(positions.len());
        for &pos in &positions {
            let d = plan.dst[pos];
            data.extend_from_slice(token(d));
            n2.push(norms[d]);
        }
        Pool { positions, data, n2 }
    };
    let pools: Vec<Pool> = match cfg.search_mode {
        SearchMode::Wts => {
            let mut by_window = vec![Vec::new(); dims.frames.div_ceil(s_t)];
            for (pos, &t) in plan.dst.iter().enumerate() {
                by_window[window_of(t)].push(pos);
            }
            by_window.into_iter().map(gather).collect()
        }
        SearchMode::Gts => vec![gather((0..plan.dst.len()).collect())],
    };

    let best: Vec<(f64, usize)> = src
        .par_iter()
        .map(|&s| {
            let pool = match cfg.search_mode {
                SearchMode::Wts => &pools[window_of(s)],
                SearchMode::Gts => &pools[0],
            };
            let w = weight(mask.is_set(s), cfg.eta);
            let (a, na2) = (token(s), norms[s]);
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for (i, (b, &nb2)) in pool.data.chunks_exact(c).zip(&pool.n2).enumerate() {
                let score = w * sim_from_parts(dot(a, b), na2, nb2);
                if score > best.0 {
                    best = (score, i);
                }
            }
            (best.0, pool.positions[best.1])
        })
        .collect();

    let mut order: Vec<usize> = (0..src.len()).collect();
    order.sort_by(|&i, &j| match best[j].0.total_cmp(&best[i].0) {
        Ordering::Equal => src[i].cmp(&src[j]),
        other => other,
    });

    // A capped resolution also bounds each frame's merges individually.
    let capped = cfg
        .caps
        .iter()
        .find(|c| (c.height, c.width) == (dims.height, dims.width));
    let mut budget: Vec<usize> = match capped {
        Some(c) => vec![tpf.saturating_sub(c.min_tokens); dims.frames],
        None => vec![usize::MAX; dims.frames],
    };

    let mut merged = vec![false; src.len()];
    let mut count = 0;
    for &i in &order {
        if count == target {
            break;
        }
        let f = dims.frame_of(src[i]);
        if budget[f] == 0 {
            continue;
        }
        budget[f] -= 1;
        merged[i] = true;
        count += 1;
    }
    debug_assert_eq!(count, target, "frame budgets cover the capped rate");

    for (i, &s) in src.iter().enumerate() {
        if merged[i] {
            plan.merges.push((s, best[i].1));
        } else {
            plan.unm.push(s);
        }
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tome::WindowSpec;

    fn line_grid(values: &[[f64; 2]], frames: usize) -> TokenGrid {
        let w = values.len() / frames;
        let data = values.iter().flatten().copied().collect();
        TokenGrid::new(Dims::new(frames, 1, w).unwrap(), 2, data).unwrap()
    }

    #[test]
    fn zero_rate_merges_nothing() {
        let g = line_grid(&[[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.2, 1.0]], 1);
        let m = ForegroundMask::filled(g.dims(), false);
        let cfg = MergeConfig {
            r: 0.0,
            window: WindowSpec { s_t: 1, s_y: 1, s_x: 2 },
            ..Default::default()
        };
        let plan = build_plan(&g, &m, &cfg).unwrap();
        assert!(plan.merges.is_empty());
        assert_eq!(plan.unm.len() + plan.dst.len(), 4);
        plan.validate().unwrap();
    }

    #[test]
    fn degenerate_token_rejected() {
        let g = line_grid(&[[1.0, 0.0], [0.0, 0.0]], 1);
        let m = ForegroundMask::filled(g.dims(), false);
        assert_eq!(
            build_plan(&g, &m, &MergeConfig::default()),
            Err(Error::DegenerateToken { index: 1 })
        );
    }

    #[test]
    fn cap_rate_cases() {
        let caps = MergeCap::low_resolution_defaults();
        let r = cap_rate(0.99, 64, (8, 8), &caps);
        assert!(64.0 - (r * 64.0).floor() >= 4.0);
        assert_eq!(cap_rate(0.7, 4096, (64, 64), &caps), 0.7);
        assert_eq!(
            cap_rate(
                0.7,
                4,
                (2, 2),
                &[MergeCap {
                    height: 2,
                    width: 2,
                    min_tokens: 4
                }]
            ),
            0.0
        );
        assert_eq!(cap_rate(0.2, 256, (16, 16), &caps), 0.2);
    }

    #[test]
    fn plan_json_roundtrip_and_validation() {
        let plan = MergePlan {
            dims: Dims::new(1, 2, 2).unwrap(),
            dst: vec![0, 3],
            unm: vec![2],
            merges: vec![(1, 1)],
            sizes: vec![1, 1],
            seed: 4,
        };
        let json = plan.to_json();
        assert!(json.contains("\"merges\":[[1,1]]"));
        assert_eq!(MergePlan::from_json(&json).unwrap(), plan);

        let mut bad = plan.clone();
        bad.merges = vec![(1, 2)];
        assert!(bad.validate().is_err());
        let mut bad = plan.clone();
        bad.unm = vec![0];
        assert!(matches!(bad.validate(), Err(Error::Partition(_))));
        let mut bad = plan;
        bad.sizes = vec![1];
        assert!(bad.validate().is_err());
        assert!(MergePlan::from_json("{}").is_err());
    }
}
