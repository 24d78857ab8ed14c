//! Reconstruction error of token merging on synthetic scenes, swept over
//! merge rate, foreground weight, temporal window and search mode.

use anyhow::{Context, Result};
use ocd_core::rng::derive_seed;
use ocd_core::synth::{frame_pgm, generate, merge_roundtrip_error, ReconMetrics, SceneSpec, SizeBucket};
use ocd_core::tensor::mask_to_padded_box;
use ocd_core::tome::{build_plan, MergeConfig, SearchMode};
use ocd_core::{ForegroundMask, TokenGrid};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{
    finish, mean, median, parse_config, write_dump, Check, Command, CsvRow, Format, Provenance, RunOptions, RunOutcome,
};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeBenchConfig {
    #[serde(default)]
    pub seed: u64,
    /// Scene template; each replicate draws its own scene seed.
    pub scene: SceneSpec,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Settings shared by every cell.
    #[serde(default)]
    pub merge: MergeConfig,
    #[serde(default)]
    pub sweep: Sweep,
}

fn default_replicates() -> usize {
    5
}

/// Swept values. A missing list means "the base config's value"; an empty
/// list means no cells at all.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub r: Option<Vec<f64>>,
    pub eta: Option<Vec<f64>>,
    pub s_t: Option<Vec<usize>>,
    pub search_mode: Option<Vec<SearchMode>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellRow {
    pub r: f64,
    pub eta: f64,
    pub s_t: usize,
    pub search_mode: SearchMode,
    pub replicates: usize,
    pub tokens: usize,
    pub merged_tokens: usize,
    pub fg_tokens: usize,
    pub size_bucket: SizeBucket,
    pub fg_mse_median: f64,
    pub bg_mse_median: f64,
    pub total_mse_median: f64,
    pub fg_mse_mean: f64,
    pub bg_mse_mean: f64,
    pub total_mse_mean: f64,
    pub per_replicate: Vec<ReconMetrics>,
}

#[derive(Debug, Default, Serialize)]
pub struct FlatCell {
    config_sha256: String,
    seed: u64,
    version: String,
    r: f64,
    eta: f64,
    s_t: usize,
    search_mode: String,
    replicates: usize,
    tokens: usize,
    merged_tokens: usize,
    fg_tokens: usize,
    size_bucket: String,
    fg_mse_median: f64,
    bg_mse_median: f64,
    total_mse_median: f64,
    fg_mse_mean: f64,
    bg_mse_mean: f64,
    total_mse_mean: f64,
}

fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

impl CsvRow for CellRow {
    type Flat = FlatCell;

    fn flat(&self, p: &Provenance) -> FlatCell {
        FlatCell {
            config_sha256: p.config_sha256.clone(),
            seed: p.seed,
            version: p.version.to_owned(),
            r: self.r,
            eta: self.eta,
            s_t: self.s_t,
            search_mode: label(&self.search_mode),
            replicates: self.replicates,
            tokens: self.tokens,
            merged_tokens: self.merged_tokens,
            fg_tokens: self.fg_tokens,
            size_bucket: label(&self.size_bucket),
            fg_mse_median: self.fg_mse_median,
            bg_mse_median: self.bg_mse_median,
            total_mse_median: self.total_mse_median,
            fg_mse_mean: self.fg_mse_mean,
            bg_mse_mean: self.bg_mse_mean,
            total_mse_mean: self.total_mse_mean,
        }
    }
}

fn cells(cfg: &MergeBenchConfig) -> Vec<MergeConfig> {
    let base = &cfg.merge;
    let s = &cfg.sweep;
    let rs = s.r.clone().unwrap_or_else(|| vec![base.r]);
    let etas = s.eta.clone().unwrap_or_else(|| vec![base.eta]);
    let sts = s.s_t.clone().unwrap_or_else(|| vec![base.window.s_t]);
    let modes = s.search_mode.clone().unwrap_or_else(|| vec![base.search_mode]);
    let mut out = Vec::new();
    for &r in &rs {
        for &s_t in &sts {
            for &mode in &modes {
                for &eta in &etas {
                    let mut c = base.clone();
                    c.r = r;
                    c.eta = eta;
                    c.window.s_t = s_t;
                    c.search_mode = mode;
                    out.push(c);
                }
            }
        }
    }
    out
}

struct Replicate {
    grid: TokenGrid,
    mask: ForegroundMask,
    merge_seed: u64,
}

/// Median foreground error must not rise as `eta` falls, within each group of
/// cells that differ only in `eta`.
fn protection_checks(rows: &[CellRow]) -> Vec<Check> {
    let mut checks = Vec::new();
    let mut groups: Vec<Vec<&CellRow>> = Vec::new();
    for row in rows {
        match groups.iter_mut().find(|g| {
            let h = g[0];
            h.r == row.r && h.s_t == row.s_t && h.search_mode == row.search_mode
        }) {
            Some(g) => g.push(row),
            None => groups.push(vec![row]),
        }
    }
    for mut g in groups.into_iter().filter(|g| g.len() > 1) {
        g.sort_by(|a, b| b.eta.total_cmp(&a.eta));
        let ok = g.windows(2).all(|w| w[1].fg_mse_median <= w[0].fg_mse_median);
        let trail: Vec<String> = g
            .iter()
            .map(|c| format!("eta {}: {:.6}", c.eta, c.fg_mse_median))
            .collect();
        checks.push(Check::new(
            format!(
                "fg_protection r={} s_t={} {}",
                g[0].r,
                g[0].s_t,
                label(&g[0].search_mode)
            ),
            ok,
            trail.join(", "),
        ));
    }
    checks
}

pub fn run(config: &str, format: Format, opts: &RunOptions) -> Result<RunOutcome> {
    let cfg: MergeBenchConfig = parse_config(config, "merge-bench")?;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let cells = cells(&cfg);
    for c in &cells {
        c.validate().context("invalid merge settings")?;
    }
    cfg.scene.validate().context("invalid scene")?;
    if cfg.replicates == 0 {
        anyhow::bail!("replicates must be at least 1");
    }

    let replicates: Vec<Replicate> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|i| {
            let scene = SceneSpec {
                seed: derive_seed(seed, "scene", i),
                ..cfg.scene.clone()
            };
            let (grid, mask) = generate(&scene)?;
            Ok(Replicate {
                grid,
                mask,
                merge_seed: derive_seed(seed, "dst", i),
            })
        })
        .collect::<ocd_core::Result<_>>()?;

    if let (Some(dir), Some(first)) = (&opts.dump_dir, replicates.first()) {
        write_dump(dir, "scene0.grid", &first.grid.to_bytes()?)?;
        write_dump(dir, "scene0.mask", &first.mask.to_bytes()?)?;
        write_dump(dir, "scene0_frame0.pgm", &frame_pgm(&first.grid, 0, 0)?)?;
    }

    let n_rep = replicates.len();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..n_rep).map(move |r| (c, r))).collect();
    let results: Vec<ReconMetrics> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let rep = &replicates[r];
            let merge = MergeConfig {
                seed: rep.merge_seed,
                ..cells[c].clone()
            };
            merge_roundtrip_error(&rep.grid, &rep.mask, &merge)
        })
        .collect::<ocd_core::Result<_>>()?;

    let dims = cfg.scene.dims;
    let first = &replicates[0];
    let fg_tokens = first.mask.count();
    let frame_delta = mask_to_padded_box(&first.mask, 0).map_or(0, |b| b.union.area());
    let mut rows = Vec::with_capacity(cells.len());
    for (c, cell) in cells.iter().enumerate() {
        let per: Vec<ReconMetrics> = results[c * n_rep..(c + 1) * n_rep].to_vec();
        let pick = |f: fn(&ReconMetrics) -> f64| per.iter().map(f).collect::<Vec<f64>>();
        let (fg, bg, total) = (pick(|m| m.fg_mse), pick(|m| m.bg_mse), pick(|m| m.total_mse));
        let plan = build_plan(
            &first.grid,
            &first.mask,
            &MergeConfig {
                seed: first.merge_seed,
                ..cell.clone()
            },
        )?;
        rows.push(CellRow {
            r: cell.r,
            eta: cell.eta,
            s_t: cell.window.s_t,
            search_mode: cell.search_mode,
            replicates: n_rep,
            tokens: dims.num_tokens(),
            merged_tokens: plan.num_merged_tokens(),
            fg_tokens,
            size_bucket: SizeBucket::of(frame_delta, dims.tokens_per_frame()),
            fg_mse_median: median(&fg),
            bg_mse_median: median(&bg),
            total_mse_median: median(&total),
            fg_mse_mean: mean(&fg),
            bg_mse_mean: mean(&bg),
            total_mse_mean: mean(&total),
            per_replicate: per,
        });
    }

    let finite = rows
        .iter()
        .flat_map(|r| &r.per_replicate)
        .all(|m| m.fg_mse.is_finite() && m.bg_mse.is_finite() && m.total_mse.is_finite());
    let mut checks = vec![Check::new("metrics_finite", finite, "every replicate error is finite")];
    checks.extend(protection_checks(&rows));
    finish::<_, ()>(Command::MergeBench, config, seed, checks, rows, None, format)
}
