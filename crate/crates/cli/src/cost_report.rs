//! Attention-map storage and token-step savings for a model description.

use anyhow::{Context, Result};
use ocd_core::costmodel::{
    attention_map_storage, oc_sampling_report, storage_row, ModelSpec, SamplingReport, StorageCase, StorageRow,
};
use ocd_core::sampler::SamplerConfig;
use serde::{Deserialize, Serialize};

use crate::{finish, parse_config, Check, Command, CsvRow, Format, Provenance, RunOptions, RunOutcome};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    /// Path to a model file, relative to the config.
    Path(String),
    Inline(ModelSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostReportConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSource,
    #[serde(default)]
    pub cases: Vec<StorageCase>,
    /// Cases are listed from most to least expensive.
    #[serde(default = "yes")]
    pub expect_decreasing: bool,
    #[serde(default)]
    pub sampling: Vec<SamplingCase>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingCase {
    pub name: String,
    #[serde(default)]
    pub sampler: SamplerConfig,
    pub delta: u64,
    pub total: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SamplingRow {
    pub name: String,
    pub sampler: SamplerConfig,
    pub report: SamplingReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct Extra {
    pub model: String,
    pub sampling: Vec<SamplingRow>,
}

#[derive(Debug, Default, Serialize)]
pub struct FlatStorage {
    config_sha256: String,
    seed: u64,
    version: String,
    name: String,
    steps: u64,
    kv_keep: String,
    q_keep: String,
    object_centric: bool,
    bytes: u128,
    gigabytes: f64,
    flops_per_full_step: u128,
}

impl CsvRow for StorageRow {
    type Flat = FlatStorage;

    fn flat(&self, p: &Provenance) -> FlatStorage {
        FlatStorage {
            config_sha256: p.config_sha256.clone(),
            seed: p.seed,
            version: p.version.to_owned(),
            name: self.name.clone(),
            steps: self.steps,
            kv_keep: self.kv_keep.to_string(),
            q_keep: self.q_keep.to_string(),
            object_centric: self.object_centric,
            bytes: self.bytes,
            gigabytes: self.gigabytes,
            flops_per_full_step: self.flops_per_full_step,
        }
    }
}

fn load_model(source: &ModelSource, opts: &RunOptions) -> Result<ModelSpec> {
    match source {
        ModelSource::Inline(m) => {
            m.validate().context("invalid inline model")?;
            Ok(m.clone())
        }
        ModelSource::Path(p) => {
            let path = opts.config_dir.join(p);
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading model {}", path.display()))?;
            ModelSpec::from_json(&text).with_context(|| format!("invalid model {}", path.display()))
        }
    }
}

pub fn run(config: &str, format: Format, opts: &RunOptions) -> Result<RunOutcome> {
    let cfg: CostReportConfig = parse_config(config, "cost-report")?;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let model = load_model(&cfg.model, opts)?;

    let rows: Vec<StorageRow> = cfg
        .cases
        .iter()
        .map(|c| storage_row(&model, c).with_context(|| format!("case '{}'", c.name)))
        .collect::<Result<_>>()?;
    let sampling: Vec<SamplingRow> = cfg
        .sampling
        .iter()
        .map(|c| {
            let report =
                oc_sampling_report(&c.sampler, c.delta, c.total).with_context(|| format!("sampling '{}'", c.name))?;
            Ok(SamplingRow {
                name: c.name.clone(),
                sampler: c.sampler.clone(),
                report,
            })
        })
        .collect::<Result<_>>()?;

    let (s20, s50) = (attention_map_storage(&model, 20), attention_map_storage(&model, 50));
    let mut checks = vec![Check::new(
        "storage_linear_in_steps",
        s20 * 5 == s50 * 2,
        format!("{s20} B at 20 steps, {s50} B at 50 steps"),
    )];
    if model.layers.is_empty() {
        checks.push(Check::new(
            "empty_model_stores_nothing",
            rows.iter().all(|r| r.bytes == 0),
            "a model without attention layers stores no attention maps",
        ));
    } else if cfg.expect_decreasing && rows.len() > 1 {
        let ok = rows.windows(2).all(|w| w[0].bytes > w[1].bytes);
        let trail: Vec<String> = rows
            .iter()
            .map(|r| format!("{} {:.2} GB", r.name, r.gigabytes))
            .collect();
        checks.push(Check::new("strictly_decreasing", ok, trail.join(" > ")));
    }

    let extra = Extra {
        model: model.name.clone(),
        sampling,
    };
    finish(Command::CostReport, config, seed, checks, rows, Some(extra), format)
}
