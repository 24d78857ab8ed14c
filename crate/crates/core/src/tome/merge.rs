use super::{build_plan, MergeConfig, MergePlan};
use crate::tensor::{ForegroundMask, TokenGrid};
use crate::{Error, Result};

/// Tokens after merging: unmerged sources (ascending) followed by
/// destinations in plan order.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedTokens {
    channels: usize,
    data: Vec<f64>,
    /// Destination weights after merging, parallel to `plan.dst`.
    pub dst_sizes: Vec<u64>,
    num_unm: usize,
}

impl MergedTokens {
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn token(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    /// Weight of output token `i`: 1 for unmerged sources, the merged count
    /// for destinations.
    pub fn size(&self, i: usize) -> u64 {
        if i < self.num_unm {
            1
        } else {
            self.dst_sizes[i - self.num_unm]
        }
    }
}

fn check_count(tokens: &TokenGrid, plan: &MergePlan) -> Result<()> {
    plan.validate()?;
    if tokens.num_tokens() != plan.num_tokens() {
        return Err(Error::Shape(format!(
            "plan covers {} tokens, input has {}",
            plan.num_tokens(),
            tokens.num_tokens()
        )));
    }
    Ok(())
}

/// Average merged sources into their destinations.
///
/// Each destination becomes the size-weighted mean of its previous value and
/// every source merged into it. Destinations that receive nothing are copied
/// unchanged.
pub fn apply_merge(tokens: &TokenGrid, plan: &MergePlan) -> Result<MergedTokens> {
    check_count(tokens, plan)?;
    let c = tokens.channels();
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); plan.dst.len()];
    let mut merges = plan.merges.clone();
    merges.sort_unstable();
    for &(s, pos) in &merges {
        incoming
            .get_mut(pos)
            .ok_or_else(|| Error::Shape(format!("destination position {pos} out of range")))?
            .push(s);
    }

    let mut data = Vec::with_capacity((plan.unm.len() + plan.dst.len()) * c);
    for &u in &plan.unm {
        data.extend_from_slice(tokens.token(u));
    }
    let mut dst_sizes = Vec::with_capacity(plan.dst.len());
    let mut acc = vec![0.0; c];
    for (pos, &d) in plan.dst.iter().enumerate() {
        let size = plan.sizes[pos];
        let srcs = &incoming[pos];
        if srcs.is_empty() {
            data.extend_from_slice(tokens.token(d));
            dst_sizes.push(size);
            continue;
        }
        let w = size as f64;
        for (a, v) in acc.iter_mut().zip(tokens.token(d)) {
            *a = w * v;
        }
        for &s in srcs {
            for (a, v) in acc.iter_mut().zip(tokens.token(s)) {
                *a += v;
            }
        }
        let new_size = size
            .checked_add(srcs.len() as u64)
            .ok_or(Error::Overflow("destination size"))?;
        let denom = new_size as f64;
        data.extend(acc.iter().map(|a| a / denom));
        dst_sizes.push(new_size);
    }
    Ok(MergedTokens {
        channels: c,
        data,
        dst_sizes,
        num_unm: plan.unm.len(),
    })
}

/// Apply a recorded plan to a different token set with the same token count.
///
/// No similarities are recomputed, so outputs of inversion and generation
/// line up position by position.
pub fn replay(plan: &MergePlan, tokens: &TokenGrid) -> Result<MergedTokens> {
    apply_merge(tokens, plan)
}

/// Expand merged tokens back to the full grid. Merged sources take their
/// destination's value.
pub fn unmerge(merged: &MergedTokens, plan: &MergePlan) -> Result<TokenGrid> {
    if merged.len() != plan.num_merged_tokens() {
        return Err(Error::Shape(format!(
            "{} merged tokens for a plan expecting {}",
            merged.len(),
            plan.num_merged_tokens()
        )));
    }
    let c = merged.channels;
    let n = plan.num_tokens();
    let mut data = vec![0.0; n * c];
    let mut put = |t: usize, value: &[f64]| data[t * c..(t + 1) * c].copy_from_slice(value);
    for (i, &u) in plan.unm.iter().enumerate() {
        put(u, merged.token(i));
    }
    let base = plan.unm.len();
    for (pos, &d) in plan.dst.iter().enumerate() {
        put(d, merged.token(base + pos));
    }
    for &(s, pos) in &plan.merges {
        put(s, merged.token(base + pos));
    }
    TokenGrid::new(plan.dims, c, data)
}

/// Queries after merging: untouched in KV-only mode.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryTokens {
    Full(TokenGrid),
    Merged(MergedTokens),
}

impl QueryTokens {
    pub fn len(&self) -> usize {
        match self {
            QueryTokens::Full(g) => g.num_tokens(),
            QueryTokens::Merged(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionInputs {
    pub q: QueryTokens,
    pub k: MergedTokens,
    pub v: MergedTokens,
    pub plan: MergePlan,
}

/// Merge attention inputs with one plan computed on the keys.
///
/// Keys and values always share the plan. Queries are merged with the same
/// plan unless `cfg.kv_only` is set; callers merging queries must unmerge the
/// attention output.
pub fn merge_attention_inputs(
    q: &TokenGrid,
    k: &TokenGrid,
    v: &TokenGrid,
    mask: &ForegroundMask,
    cfg: &MergeConfig,
) -> Result<AttentionInputs> {
    if q.num_tokens() != k.num_tokens() || k.num_tokens() != v.num_tokens() {
        return Err(Error::Shape(format!(
            "q/k/v token counts {}/{}/{}",
            q.num_tokens(),
            k.num_tokens(),
            v.num_tokens()
        )));
    }
    let plan = build_plan(k, mask, cfg)?;
    let k_m = apply_merge(k, &plan)?;
    let v_m = replay(&plan, v)?;
    let q_m = if cfg.kv_only {
        QueryTokens::Full(q.clone())
    } else {
        QueryTokens::Merged(replay(&plan, q)?)
    };
    Ok(AttentionInputs {
        q: q_m,
        k: k_m,
        v: v_m,
        plan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dims;

    fn scalar_grid(values: &[f64]) -> TokenGrid {
        TokenGrid::new(Dims::new(1, 1, values.len()).unwrap(), 1, values.to_vec()).unwrap()
    }

    fn plan(n: usize, dst: Vec<usize>, unm: Vec<usize>, merges: Vec<(usize, usize)>) -> MergePlan {
        let sizes = vec![1; dst.len()];
        MergePlan {
            dims: Dims::new(1, 1, n).unwrap(),
            dst,
            unm,
            merges,
            sizes,
            seed: 0,
        }
    }

    #[test]
    fn two_point_average() {
        let g = scalar_grid(&[2.0, 4.0]);
        let p = plan(2, vec![0], vec![], vec![(1, 0)]);
        let m = apply_merge(&g, &p).unwrap();
        assert_eq!(m.data(), &[3.0]);
        assert_eq!(m.dst_sizes, vec![2]);
    }

    #[test]
    fn three_sources_into_one() {
        let g = scalar_grid(&[0.0, 1.0, 2.0, 3.0]);
        let p = plan(4, vec![0], vec![], vec![(1, 0), (2, 0), (3, 0)]);
        let m = apply_merge(&g, &p).unwrap();
        assert_eq!(m.data(), &[1.5]);
        assert_eq!(m.dst_sizes, vec![4]);
    }

    #[test]
    fn prior_sizes_weight_destinations() {
        let g = scalar_grid(&[2.0, 5.0]);
        let mut p = plan(2, vec![0], vec![], vec![(1, 0)]);
        p.sizes = vec![3];
        let m = apply_merge(&g, &p).unwrap();
        assert_eq!(m.data(), &[(3.0 * 2.0 + 5.0) / 4.0]);
        assert_eq!(m.size(0), 4);
    }

    #[test]
    fn size_overflow_is_an_error() {
        let mut p = plan(2, vec![0], vec![], vec![(1, 0)]);
        p.sizes = vec![u64::MAX];
        assert_eq!(
            apply_merge(&scalar_grid(&[1.0, 2.0]), &p),
            Err(Error::Overflow("destination size"))
        );
    }

    #[test]
    fn output_order_is_unm_then_dst() {
        let g = scalar_grid(&[10.0, 11.0, 12.0, 13.0, 14.0]);
        let p = plan(5, vec![1, 4], vec![0, 3], vec![(2, 0)]);
        let m = apply_merge(&g, &p).unwrap();
        assert_eq!(m.data(), &[10.0, 13.0, 11.5, 14.0]);
        let back = unmerge(&m, &p).unwrap();
        assert_eq!(back.data(), &[10.0, 11.5, 11.5, 13.0, 14.0]);
    }

    #[test]
    fn identical_values_reconstruct_exactly() {
        let g = scalar_grid(&[7.25, 7.25, 1.0]);
        let p = plan(3, vec![0], vec![2], vec![(1, 0)]);
        let back = unmerge(&apply_merge(&g, &p).unwrap(), &p).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn count_mismatches() {
        let p = plan(3, vec![0], vec![1, 2], vec![]);
        assert!(matches!(
            apply_merge(&scalar_grid(&[1.0, 2.0]), &p),
            Err(Error::Shape(_))
        ));
        let m = apply_merge(&scalar_grid(&[1.0, 2.0, 3.0]), &p).unwrap();
        let other = plan(3, vec![0], vec![1], vec![(2, 0)]);
        assert!(matches!(unmerge(&m, &other), Err(Error::Shape(_))));
    }
}
