use serde::Serialize;

use super::{Denoiser, NoiseSchedule, PhasePlan, SamplerConfig, Step};
use crate::tensor::{gather, mask_to_padded_box, scatter, Crop, Dims, ForegroundMask, GatheredTokens, TokenGrid};
use crate::{Error, Result};

/// One deterministic DDIM step from `t` to `t_next`.
pub fn ddim_step<D: Denoiser + ?Sized>(
    denoiser: &D,
    schedule: &NoiseSchedule,
    z: &TokenGrid,
    origin: &[usize],
    t: usize,
    t_next: usize,
) -> Result<TokenGrid> {
    if t_next >= t {
        return Err(Error::Schedule(format!("step {t} -> {t_next} does not descend")));
    }
    let eps = denoiser.predict(z, origin, t)?;
    if eps.dims() != z.dims() || eps.channels() != z.channels() {
        return Err(Error::Shape(format!(
            "denoiser returned {:?}x{} for input {:?}x{}",
            eps.dims(),
            eps.channels(),
            z.dims(),
            z.channels()
        )));
    }
    let ab = schedule.alpha_bar(t)?;
    let ab_next = schedule.alpha_bar(t_next)?;
    let (sa, s1a) = (ab.sqrt(), (1.0 - ab).sqrt());
    let (sn, s1n) = (ab_next.sqrt(), (1.0 - ab_next).sqrt());
    let data = z
        .data()
        .iter()
        .zip(eps.data())
        .map(|(&zv, &e)| {
            let x0 = (zv - s1a * e) / sa;
            sn * x0 + s1n * e
        })
        .collect();
    TokenGrid::new(z.dims(), z.channels(), data)
}

fn run_steps<D: Denoiser + ?Sized>(
    denoiser: &D,
    schedule: &NoiseSchedule,
    mut z: TokenGrid,
    origin: &[usize],
    steps: &[Step],
) -> Result<TokenGrid> {
    for &(t, t_next) in steps {
        z = ddim_step(denoiser, schedule, &z, origin, t, t_next)?;
    }
    Ok(z)
}

fn check_schedule(schedule: &NoiseSchedule, cfg: &SamplerConfig) -> Result<()> {
    cfg.validate()?;
    if schedule.train_steps() != cfg.train_steps {
        return Err(Error::Config(format!(
            "noise schedule has {} training steps, config says {}",
            schedule.train_steps(),
            cfg.train_steps
        )));
    }
    Ok(())
}

/// Plain DDIM sampling of the whole latent over `N` steps.
pub fn standard_sample<D: Denoiser + ?Sized>(
    denoiser: &D,
    schedule: &NoiseSchedule,
    z_t: &TokenGrid,
    cfg: &SamplerConfig,
) -> Result<TokenGrid> {
    check_schedule(schedule, cfg)?;
    let plan = PhasePlan::new(cfg)?;
    let steps: Vec<Step> = plan.foreground.iter().chain(&plan.blend).copied().collect();
    let origin: Vec<usize> = (0..z_t.num_tokens()).collect();
    run_steps(denoiser, schedule, z_t.clone(), &origin, &steps)
}

/// Denoiser invocations per phase, weighted by the tokens in each call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TokenSteps {
    pub fg: u64,
    pub bg: u64,
    pub blend: u64,
}

impl TokenSteps {
    pub fn total(&self) -> u64 {
        self.fg + self.bg + self.blend
    }
}

/// Where the background tokens at the blend step came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundSource {
    /// Denoised at the coarse rate.
    Sampled,
    /// Held at the provided background latent.
    Provided,
    /// Held at the initial noise.
    Initial,
    /// The crop covers every token.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OcRunReport {
    pub t_blend: usize,
    pub fg_tokens: usize,
    pub bg_tokens: usize,
    pub fg_steps: usize,
    pub bg_steps: usize,
    pub blend_steps: usize,
    /// Timestep the background actually reached; `None` when not sampled.
    pub bg_final_t: Option<usize>,
    /// `t_blend - bg_final_t`: the background overshoots the blend step
    /// when the coarse stride does not land on it, and is used as-is.
    pub bg_mismatch: usize,
    pub background: BackgroundSource,
    pub token_steps: TokenSteps,
}

#[derive(Debug, Clone)]
pub struct OcOutcome {
    pub z0: TokenGrid,
    pub report: OcRunReport,
}

/// The foreground crop for `mask`, or `None` for an empty mask.
fn foreground_crop(mask: &ForegroundMask, cfg: &SamplerConfig) -> Result<Option<Crop>> {
    match mask_to_padded_box(mask, cfg.crop_pad) {
        Ok(boxes) => Ok(Some(boxes.crop(cfg.crop_mode))),
        Err(Error::EmptyForeground) => Ok(None),
        Err(e) => Err(e),
    }
}

struct Split {
    fg_dims: Option<Dims>,
    fg_mask: ForegroundMask,
    fg_tokens: usize,
    bg_tokens: usize,
}

fn split(mask: &ForegroundMask, cfg: &SamplerConfig) -> Result<Split> {
    let crop = foreground_crop(mask, cfg)?;
    let dims = mask.dims();
    let fg_mask = crop
        .as_ref()
        .map_or_else(|| ForegroundMask::filled(dims, false), Crop::mask);
    let fg_tokens = fg_mask.count();
    Ok(Split {
        fg_dims: crop.as_ref().map(Crop::dims),
        fg_mask,
        fg_tokens,
        bg_tokens: dims.num_tokens() - fg_tokens,
    })
}

fn token_steps(plan: &PhasePlan, split: &Split, skip: bool) -> TokenSteps {
    let n = (split.fg_tokens + split.bg_tokens) as u64;
    TokenSteps {
        fg: split.fg_tokens as u64 * plan.foreground.len() as u64,
        bg: if skip {
            0
        } else {
            split.bg_tokens as u64 * plan.background.len() as u64
        },
        blend: n * plan.blend.len() as u64,
    }
}

fn check_skip(plan: &PhasePlan, split: &Split, cfg: &SamplerConfig) -> Result<()> {
    if plan.splits() && cfg.skips_background() && plan.blend.is_empty() && split.bg_tokens > 0 {
        return Err(Error::Config(format!(
            "gamma = {} with a skipped background never denoises {} background tokens",
            cfg.gamma, split.bg_tokens
        )));
    }
    Ok(())
}

/// Token-weighted denoiser calls an object-centric run would make, without
/// running it.
pub fn count_token_steps(cfg: &SamplerConfig, mask: &ForegroundMask) -> Result<TokenSteps> {
    let plan = PhasePlan::new(cfg)?;
    if !plan.splits() {
        let n = mask.dims().num_tokens() as u64;
        return Ok(TokenSteps {
            blend: n * plan.blend.len() as u64,
            ..TokenSteps::default()
        });
    }
    let split = split(mask, cfg)?;
    check_skip(&plan, &split, cfg)?;
    Ok(token_steps(&plan, &split, cfg.skips_background()))
}

fn to_grid(tokens: &GatheredTokens, dims: Dims) -> Result<TokenGrid> {
    TokenGrid::new(dims, tokens.channels(), tokens.data().to_vec())
}

fn from_grid(grid: TokenGrid, like: &GatheredTokens) -> Result<GatheredTokens> {
    GatheredTokens::new(
        like.origin(),
        like.channels(),
        like.index_map().to_vec(),
        grid.into_data(),
    )
}

/// Denoise `part` (shaped as `dims` for the denoiser) over `steps`.
fn run_part<D: Denoiser + ?Sized>(
    denoiser: &D,
    schedule: &NoiseSchedule,
    part: &GatheredTokens,
    dims: Dims,
    steps: &[Step],
) -> Result<GatheredTokens> {
    if part.is_empty() || steps.is_empty() {
        return Ok(part.clone());
    }
    let z = run_steps(denoiser, schedule, to_grid(part, dims)?, part.index_map(), steps)?;
    from_grid(z, part)
}

/// Object-centric sampling.
///
/// The padded box around `mask` is denoised from `T` to the blend step at the
/// normal stride while the rest of the latent is denoised at `phi` times the
/// stride. The two phases run concurrently. With an infinite `phi` the
/// background holds `background` (for example an inverted latent) or, when
/// none is given, its initial noise. Both parts are scattered back at the
/// blend step and denoised jointly to 0.
pub fn object_centric_sample<D: Denoiser + ?Sized>(
    denoiser: &D,
    schedule: &NoiseSchedule,
    z_t: &TokenGrid,
    mask: &ForegroundMask,
    cfg: &SamplerConfig,
    background: Option<&TokenGrid>,
) -> Result<OcOutcome> {
    check_schedule(schedule, cfg)?;
    if mask.dims() != z_t.dims() {
        return Err(Error::Shape(format!(
            "mask {:?} vs latent {:?}",
            mask.dims(),
            z_t.dims()
        )));
    }
    if let Some(bg) = background {
        if bg.dims() != z_t.dims() || bg.channels() != z_t.channels() {
            return Err(Error::Shape(format!(
                "background {:?}x{} vs latent {:?}x{}",
                bg.dims(),
                bg.channels(),
                z_t.dims(),
                z_t.channels()
            )));
        }
    }
    let plan = PhasePlan::new(cfg)?;
    let n = z_t.num_tokens();

    if !plan.splits() {
        let z0 = standard_sample(denoiser, schedule, z_t, cfg)?;
        let report = OcRunReport {
            t_blend: plan.t_blend,
            fg_tokens: 0,
            bg_tokens: 0,
            fg_steps: 0,
            bg_steps: 0,
            blend_steps: plan.blend.len(),
            bg_final_t: None,
            bg_mismatch: 0,
            background: BackgroundSource::Empty,
            token_steps: TokenSteps {
                blend: n as u64 * plan.blend.len() as u64,
                ..TokenSteps::default()
            },
        };
        return Ok(OcOutcome { z0, report });
    }

    let split = split(mask, cfg)?;
    check_skip(&plan, &split, cfg)?;
    let skip = cfg.skips_background();

    let fg = gather(z_t, &split.fg_mask)?;
    let bg_mask = split.fg_mask.complement();
    let bg = match background {
        Some(held) if skip => gather(held, &bg_mask)?,
        _ => gather(z_t, &bg_mask)?,
    };
    let bg_dims = Dims::new(1, 1, bg.len().max(1))?;
    let bg_steps: &[Step] = if skip { &[] } else { &plan.background };

    let (fg_out, bg_out) = rayon::join(
        || match split.fg_dims {
            Some(dims) => run_part(denoiser, schedule, &fg, dims, &plan.foreground),
            None => Ok(fg.clone()),
        },
        || run_part(denoiser, schedule, &bg, bg_dims, bg_steps),
    );
    let joined = scatter(&fg_out?, &bg_out?)?;
    let origin: Vec<usize> = (0..n).collect();
    let z0 = run_steps(denoiser, schedule, joined, &origin, &plan.blend)?;

    let source = match (split.bg_tokens, skip, background) {
        (0, _, _) => BackgroundSource::Empty,
        (_, false, _) => BackgroundSource::Sampled,
        (_, true, Some(_)) => BackgroundSource::Provided,
        (_, true, None) => BackgroundSource::Initial,
    };
    let bg_final_t = match source {
        BackgroundSource::Sampled => plan.background_end(),
        _ => None,
    };
    let report = OcRunReport {
        t_blend: plan.t_blend,
        fg_tokens: split.fg_tokens,
        bg_tokens: split.bg_tokens,
        fg_steps: if split.fg_tokens > 0 { plan.foreground.len() } else { 0 },
        bg_steps: if source == BackgroundSource::Sampled {
            bg_steps.len()
        } else {
            0
        },
        blend_steps: plan.blend.len(),
        bg_final_t,
        bg_mismatch: bg_final_t.map_or(0, |t| plan.t_blend - t),
        background: source,
        token_steps: token_steps(&plan, &split, skip),
    };
    Ok(OcOutcome { z0, report })
}
