//! Standard versus object-centric sampling with the exact delta-oracle
//! denoiser: recovery error, equivalence flags and work counts per run.

use anyhow::{Context, Result};
use ocd_core::sampler::{
    count_token_steps, make_bg_schedule, make_schedule, object_centric_sample, standard_sample, CountingDenoiser,
    DeltaOracleDenoiser, NoiseSchedule, OcRunReport, SamplerConfig,
};
use ocd_core::synth::{gaussian_latent, ObjectSpec, SceneSpec, Texture};
use ocd_core::{Dims, ForegroundMask, TokenGrid};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{finish, parse_config, write_dump, Check, Command, CsvRow, Format, Provenance, RunOptions, RunOutcome};

const RECOVERY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMode {
    /// A skipped background holds its initial noise.
    #[default]
    Noise,
    /// A skipped background holds the clean latent noised to the blend step,
    /// as an inversion would produce.
    Inverted,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleDemoConfig {
    #[serde(default)]
    pub seed: u64,
    pub dims: Dims,
    pub channels: usize,
    /// The foreground is a (possibly moving) square.
    pub object: ObjectSpec,
    #[serde(default = "default_runs")]
    pub runs: Vec<SamplerConfig>,
    #[serde(default)]
    pub background: BackgroundMode,
}

fn default_runs() -> Vec<SamplerConfig> {
    vec![SamplerConfig::default()]
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRow {
    pub run: usize,
    pub config: SamplerConfig,
    pub schedule: Vec<usize>,
    pub bg_schedule: Vec<usize>,
    pub report: OcRunReport,
    pub standard_token_steps: u64,
    pub instrumented_token_steps: u64,
    pub standard_error: f64,
    pub object_centric_error: f64,
    pub identical_to_standard: bool,
}

#[derive(Debug, Default, Serialize)]
pub struct FlatRun {
    config_sha256: String,
    seed: u64,
    version: String,
    run: usize,
    train_steps: usize,
    steps: usize,
    gamma: f64,
    phi: String,
    t_blend: usize,
    fg_tokens: usize,
    bg_tokens: usize,
    fg_steps: usize,
    bg_steps: usize,
    blend_steps: usize,
    bg_final_t: String,
    bg_mismatch: usize,
    fg_token_steps: u64,
    bg_token_steps: u64,
    blend_token_steps: u64,
    total_token_steps: u64,
    standard_token_steps: u64,
    standard_error: f64,
    object_centric_error: f64,
    identical_to_standard: bool,
}

impl CsvRow for RunRow {
    type Flat = FlatRun;

    fn flat(&self, p: &Provenance) -> FlatRun {
        let r = &self.report;
        FlatRun {
            config_sha256: p.config_sha256.clone(),
            seed: p.seed,
            version: p.version.to_owned(),
            run: self.run,
            train_steps: self.config.train_steps,
            steps: self.config.steps,
            gamma: self.config.gamma,
            phi: if self.config.skips_background() {
                "inf".into()
            } else {
                self.config.phi.to_string()
            },
            t_blend: r.t_blend,
            fg_tokens: r.fg_tokens,
            bg_tokens: r.bg_tokens,
            fg_steps: r.fg_steps,
            bg_steps: r.bg_steps,
            blend_steps: r.blend_steps,
            bg_final_t: r.bg_final_t.map(|t| t.to_string()).unwrap_or_default(),
            bg_mismatch: r.bg_mismatch,
            fg_token_steps: r.token_steps.fg,
            bg_token_steps: r.token_steps.bg,
            blend_token_steps: r.token_steps.blend,
            total_token_steps: r.token_steps.total(),
            standard_token_steps: self.standard_token_steps,
            standard_error: self.standard_error,
            object_centric_error: self.object_centric_error,
            identical_to_standard: self.identical_to_standard,
        }
    }
}

fn object_mask(cfg: &SampleDemoConfig) -> Result<ForegroundMask> {
    let flat = Texture {
        gradient: 0.0,
        noise: 0.0,
    };
    let scene = SceneSpec {
        dims: cfg.dims,
        channels: 1,
        object: cfg.object,
        fg_texture: flat,
        bg_texture: flat,
        temporal_noise: 0.0,
        seed: 0,
    };
    scene.validate().context("invalid object")?;
    let origins: Vec<(usize, usize)> = (0..cfg.dims.frames).map(|f| scene.object_origin(f)).collect();
    let s = cfg.object.size;
    Ok(ForegroundMask::from_fn(cfg.dims, |f, y, x| {
        let (oy, ox) = origins[f];
        (oy..oy + s).contains(&y) && (ox..ox + s).contains(&x)
    }))
}

struct Outputs {
    row: RunRow,
    standard: TokenGrid,
    object_centric: TokenGrid,
}

fn one_run(
    run: usize,
    sampler: &SamplerConfig,
    mu: &TokenGrid,
    z_t: &TokenGrid,
    mask: &ForegroundMask,
    mode: BackgroundMode,
) -> Result<Outputs> {
    sampler.validate().with_context(|| format!("run {run}"))?;
    let schedule = NoiseSchedule::linear(sampler.train_steps)?;
    let den = DeltaOracleDenoiser::new(mu.clone(), schedule.clone());
    let counter = CountingDenoiser::new(&den);
    let standard = standard_sample(&den, &schedule, z_t, sampler)?;

    let held = match mode {
        BackgroundMode::Noise => None,
        BackgroundMode::Inverted => {
            let steps = make_schedule(sampler.train_steps, sampler.steps)?;
            let t_b = ocd_core::sampler::blend_start(&steps, sampler.train_steps, sampler.gamma);
            let ab = schedule.alpha_bar(t_b)?;
            let data = mu
                .data()
                .iter()
                .zip(z_t.data())
                .map(|(m, e)| ab.sqrt() * m + (1.0 - ab).sqrt() * e)
                .collect();
            Some(TokenGrid::new(mu.dims(), mu.channels(), data)?)
        }
    };
    let oc = object_centric_sample(&counter, &schedule, z_t, mask, sampler, held.as_ref())
        .with_context(|| format!("run {run}"))?;
    let counted = count_token_steps(sampler, mask)?;
    if counted != oc.report.token_steps {
        anyhow::bail!("run {run}: counted steps {counted:?} differ from the run report");
    }

    let row = RunRow {
        run,
        config: sampler.clone(),
        schedule: make_schedule(sampler.train_steps, sampler.steps)?,
        bg_schedule: make_bg_schedule(sampler.train_steps, sampler.steps, sampler.phi, sampler.gamma)?,
        standard_token_steps: (z_t.num_tokens() * sampler.steps) as u64,
        instrumented_token_steps: counter.token_steps(),
        standard_error: standard.max_abs_diff(mu)?,
        object_centric_error: oc.z0.max_abs_diff(mu)?,
        identical_to_standard: oc.z0 == standard,
        report: oc.report,
    };
    Ok(Outputs {
        row,
        standard,
        object_centric: oc.z0,
    })
}

fn run_checks(row: &RunRow) -> Vec<Check> {
    let name = |what: &str| format!("run{}_{what}", row.run);
    let mut checks = vec![
        Check::new(
            name("standard_recovery"),
            row.standard_error < RECOVERY_TOLERANCE,
            format!("sup error {:e}", row.standard_error),
        ),
        Check::new(
            name("object_centric_recovery"),
            row.object_centric_error < RECOVERY_TOLERANCE,
            format!("sup error {:e}", row.object_centric_error),
        ),
        Check::new(
            name("instrumented_steps"),
            row.instrumented_token_steps == row.report.token_steps.total(),
            format!(
                "{} denoised tokens vs {} reported",
                row.instrumented_token_steps,
                row.report.token_steps.total()
            ),
        ),
    ];
    if row.config.phi == 1.0 || row.config.gamma == 1.0 {
        checks.push(Check::new(
            name("matches_standard"),
            row.identical_to_standard,
            "phi = 1 or gamma = 1 must reproduce standard sampling exactly",
        ));
    }
    checks
}

pub fn run(config: &str, format: Format, opts: &RunOptions) -> Result<RunOutcome> {
    let cfg: SampleDemoConfig = parse_config(config, "sample-demo")?;
    let seed = opts.seed.unwrap_or(cfg.seed);
    cfg.dims.validate()?;
    if cfg.channels == 0 {
        anyhow::bail!("channels must be at least 1");
    }
    let mask = object_mask(&cfg)?;
    let mu = gaussian_latent(cfg.dims, cfg.channels, seed, "mu")?;
    let z_t = gaussian_latent(cfg.dims, cfg.channels, seed, "noise")?;

    let outputs: Vec<Outputs> = cfg
        .runs
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let s = SamplerConfig { seed, ..s.clone() };
            one_run(i, &s, &mu, &z_t, &mask, cfg.background)
        })
        .collect::<Result<_>>()?;

    if let Some(dir) = &opts.dump_dir {
        write_dump(dir, "mask.mask", &mask.to_bytes()?)?;
        write_dump(dir, "mu.grid", &mu.to_bytes()?)?;
        write_dump(dir, "z_T.grid", &z_t.to_bytes()?)?;
        for o in &outputs {
            write_dump(dir, &format!("run{}_standard.grid", o.row.run), &o.standard.to_bytes()?)?;
            write_dump(
                dir,
                &format!("run{}_object_centric.grid", o.row.run),
                &o.object_centric.to_bytes()?,
            )?;
        }
    }

    let rows: Vec<RunRow> = outputs.into_iter().map(|o| o.row).collect();
    let checks = rows.iter().flat_map(run_checks).collect();
    finish::<_, ()>(Command::SampleDemo, config, seed, checks, rows, None, format)
}
