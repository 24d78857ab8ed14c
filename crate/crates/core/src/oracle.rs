//! Brute-force reference implementations used by the test suites.
//!
//! Nothing here shares code paths with the production matcher beyond the
//! public similarity function and destination sampler: every source/destination
//! pair is scored explicitly and the merged set is chosen by repeated
//! selection of the current maximum.

use crate::tensor::{ForegroundMask, TokenGrid};
use crate::tome::{cap_rate, sample_dst, sim, MergeConfig, SearchMode};
use crate::Result;

/// Merge decisions found by exhaustive search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OraclePlan {
    pub dst: Vec<usize>,
    /// `(source, destination token index)`, ascending by source.
    pub merges: Vec<(usize, usize)>,
    pub unm: Vec<usize>,
}

/// Best `(score, destination token)` for one source by scanning every
/// allowed destination.
pub fn best_match(
    tokens: &TokenGrid,
    mask: &ForegroundMask,
    cfg: &MergeConfig,
    dst: &[usize],
    src: usize,
) -> Result<(f64, usize)> {
    let dims = tokens.dims();
    let s_t = cfg.window.s_t.clamp(1, dims.frames);
    let (sf, _, _) = dims.coords(src);
    let mut best: Option<(f64, usize)> = None;
    for &d in dst {
        let (df, _, _) = dims.coords(d);
        if cfg.search_mode == SearchMode::Wts && df / s_t != sf / s_t {
            continue;
        }
        let raw = sim(tokens.token(src), tokens.token(d))?;
        let score = if mask.is_set(src) { cfg.eta * raw } else { raw };
        best = match best {
            Some((b, bd)) if b > score || (b == score && bd < d) => Some((b, bd)),
            _ => Some((score, d)),
        };
    }
    Ok(best.expect("every window holds a destination"))
}

pub fn brute_force_plan(tokens: &TokenGrid, mask: &ForegroundMask, cfg: &MergeConfig) -> Result<OraclePlan> {
    let dims = tokens.dims();
    let dst = sample_dst(dims, cfg.window, cfg.resample_per_window, cfg.seed);
    let src: Vec<usize> = (0..dims.num_tokens()).filter(|t| !dst.contains(t)).collect();
    let mut scored = Vec::with_capacity(src.len());
    for &s in &src {
        scored.push((s, best_match(tokens, mask, cfg, &dst, s)?));
    }

    let tpf = dims.tokens_per_frame();
    let r_eff = cap_rate(cfg.r, tpf, (dims.height, dims.width), &cfg.caps);
    let k = (r_eff * src.len() as f64).floor() as usize;
    let cap = cfg
        .caps
        .iter()
        .find(|c| c.height == dims.height && c.width == dims.width)
        .map(|c| c.min_tokens);
    let mut frame_merges = vec![0usize; dims.frames];

    let mut taken = vec![false; scored.len()];
    let mut merges = Vec::new();
    while merges.len() < k {
        let mut pick: Option<usize> = None;
        for (i, &(s, (score, _))) in scored.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let f = dims.frame_of(s);
            if let Some(c) = cap {
                if tpf - frame_merges[f] <= c {
                    continue;
                }
            }
            let better = match pick {
                None => true,
                Some(p) => {
                    let (ps, (pscore, _)) = scored[p];
                    score > pscore || (score == pscore && s < ps)
                }
            };
            if better {
                pick = Some(i);
            }
        }
        let Some(i) = pick else { break };
        taken[i] = true;
        let (s, (_, d)) = scored[i];
        frame_merges[dims.frame_of(s)] += 1;
        merges.push((s, d));
    }
    merges.sort_unstable();
    let unm = scored
        .iter()
        .zip(&taken)
        .filter(|(_, &t)| !t)
        .map(|(&(s, _), _)| s)
        .collect();
    Ok(OraclePlan { dst, merges, unm })
}
