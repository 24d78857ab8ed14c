use super::SamplerConfig;
use crate::{Error, Result};

/// Linear beta schedule over `T` training steps and its cumulative products.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    /// `alpha_bar[t]` for `t` in `0..=T`; `alpha_bar[0] == 1`.
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub const BETA_START: f64 = 1e-4;
    pub const BETA_END: f64 = 2e-2;

    pub fn linear(train_steps: usize) -> Result<Self> {
        Self::linear_range(train_steps, Self::BETA_START, Self::BETA_END)
    }

    pub fn linear_range(train_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if train_steps == 0 {
            return Err(Error::Config("training steps must be positive".into()));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Config(format!(
                "beta range [{beta_start}, {beta_end}] must satisfy 0 < start <= end < 1"
            )));
        }
        let span = (train_steps - 1).max(1) as f64;
        let betas: Vec<f64> = (0..train_steps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / span)
            .collect();
        let mut alpha_bar = Vec::with_capacity(train_steps + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        Ok(Self { betas, alpha_bar })
    }

    pub fn train_steps(&self) -> usize {
        self.betas.len()
    }

    /// `beta_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bar
            .get(t)
            .copied()
            .ok_or_else(|| Error::Schedule(format!("t = {t} beyond T = {}", self.train_steps())))
    }
}

fn round_div(num: u128, den: u128) -> u128 {
    (2 * num + den) / (2 * den)
}

/// Inference timesteps `[T, T - dT, ..., dT]` with `dT = T / N`.
///
/// When `N` does not divide `T`, step `i` sits at `T - round(i * T / N)`.
pub fn make_schedule(train_steps: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > train_steps {
        return Err(Error::Config(format!(
            "inference steps N = {steps} must be in 1..=T (T = {train_steps})"
        )));
    }
    let (t, n) = (train_steps as u128, steps as u128);
    Ok((0..n).map(|i| (t - round_div(i * t, n)) as usize).collect())
}

/// Step where foreground and background are merged: `gamma * T` snapped down
/// to the nearest inference timestep (or 0).
pub fn blend_start(schedule: &[usize], train_steps: usize, gamma: f64) -> usize {
    let limit = gamma * train_steps as f64;
    schedule.iter().copied().find(|&t| t as f64 <= limit).unwrap_or(0)
}

/// Background timestep `j` at stride `phi * dT`.
fn bg_timestep(train_steps: usize, steps: usize, phi: f64, j: usize) -> usize {
    // Any rate >= N already jumps past 0 in one stride.
    let phi = phi.min(steps as f64);
    let offset = if phi.fract() == 0.0 {
        round_div(j as u128 * phi as u128 * train_steps as u128, steps as u128)
    } else {
        (j as f64 * phi * train_steps as f64 / steps as f64).round() as u128
    };
    (train_steps as u128).saturating_sub(offset) as usize
}

/// Background inference timesteps: from `T` down to (but excluding) the blend
/// step at stride `phi * dT`. An infinite `phi` skips the background.
pub fn make_bg_schedule(train_steps: usize, steps: usize, phi: f64, gamma: f64) -> Result<Vec<usize>> {
    if phi.is_nan() || phi < 1.0 {
        return Err(Error::Config(format!("background rate phi = {phi} must be >= 1")));
    }
    let schedule = make_schedule(train_steps, steps)?;
    if phi.is_infinite() {
        return Ok(Vec::new());
    }
    let t_blend = blend_start(&schedule, train_steps, gamma);
    Ok((0..)
        .map(|j| bg_timestep(train_steps, steps, phi, j))
        .take_while(|&t| t > t_blend && t > 0)
        .collect())
}

/// One denoiser invocation: from `t` to `t_next`.
pub type Step = (usize, usize);

/// The three phases of an object-centric sampling run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhasePlan {
    pub t_blend: usize,
    pub foreground: Vec<Step>,
    pub background: Vec<Step>,
    pub blend: Vec<Step>,
}

impl PhasePlan {
    pub fn new(cfg: &SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        let schedule = make_schedule(cfg.train_steps, cfg.steps)?;
        let t_blend = blend_start(&schedule, cfg.train_steps, cfg.gamma);
        let pairs = |ts: &[usize]| -> Vec<Step> {
            ts.iter()
                .enumerate()
                .map(|(i, &t)| (t, ts.get(i + 1).copied().unwrap_or(0)))
                .collect()
        };
        let all = pairs(&schedule);
        let (foreground, blend): (Vec<Step>, Vec<Step>) = all.into_iter().partition(|&(t, _)| t > t_blend);

        let bg_ts = make_bg_schedule(cfg.train_steps, cfg.steps, cfg.phi, cfg.gamma)?;
        let background = bg_ts
            .iter()
            .enumerate()
            .map(|(j, &t)| (t, bg_timestep(cfg.train_steps, cfg.steps, cfg.phi, j + 1)))
            .collect();
        Ok(Self {
            t_blend,
            foreground,
            background,
            blend,
        })
    }

    /// Where the background phase ends; `None` when it is skipped.
    pub fn background_end(&self) -> Option<usize> {
        self.background.last().map(|&(_, next)| next)
    }

    /// Whether the run splits at all (`gamma < 1`).
    pub fn splits(&self) -> bool {
        !self.foreground.is_empty()
    }
}
