//! Attention FLOP, attention-map storage and sampling-work estimates.
//!
//! Everything is counted in exact integers. Merge fractions are rationals and
//! the kept token counts are rounded up per layer, so a fraction of 1 leaves
//! every figure untouched and fractions that divide the token counts scale the
//! totals exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::sampler::{blend_start, make_bg_schedule, make_schedule, SamplerConfig, TokenSteps};
use crate::{Error, Result};

/// One attention layer type of the denoiser and how often it runs per pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionLayerSpec {
    #[serde(default)]
    pub name: String,
    pub tokens_per_frame: u64,
    /// 1 for per-frame self-attention, 2 for sparse-causal, `F` for dense.
    pub frames_attended: u64,
    pub heads: u64,
    pub head_dim: u64,
    pub occurrences: u64,
    /// Fixed key/value length (text tokens for cross-attention). Such layers
    /// ignore the key/value merge fraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_tokens: Option<u64>,
}

impl AttentionLayerSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("tokens_per_frame", self.tokens_per_frame),
            ("frames_attended", self.frames_attended),
            ("heads", self.heads),
            ("head_dim", self.head_dim),
            ("occurrences", self.occurrences),
            ("context_tokens", self.context_tokens.unwrap_or(1)),
        ];
        match counts.iter().find(|(_, v)| *v == 0) {
            Some((field, _)) => Err(Error::Config(format!("layer '{}': {field} must be >= 1", self.name))),
            None => Ok(()),
        }
    }

    fn mergeable_kv(&self) -> bool {
        self.context_tokens.is_none()
    }
}

fn default_bytes() -> u64 {
    2
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub name: String,
    pub layers: Vec<AttentionLayerSpec>,
    pub frames: u64,
    #[serde(default = "default_bytes")]
    pub bytes_per_element: u64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.bytes_per_element == 0 {
            return Err(Error::Config("frames and bytes_per_element must be >= 1".into()));
        }
        self.layers.iter().try_for_each(AttentionLayerSpec::validate)?;
        self.full_step_cost()
            .filter(|&(bytes, flops)| bytes.max(flops) <= u64::MAX as u128)
            .map(|_| ())
            .ok_or(Error::Overflow("per-step attention cost"))
    }

    /// Unmerged per-step bytes and FLOPs, or `None` on overflow. Merging and
    /// cropping only shrink these, so bounding them bounds every estimate.
    fn full_step_cost(&self) -> Option<(u128, u128)> {
        let mut total = (0u128, 0u128);
        for l in &self.layers {
            let n_q = l.tokens_per_frame.checked_mul(self.frames)? as u128;
            let n_kv = match l.context_tokens {
                Some(ctx) => ctx,
                None => l.tokens_per_frame.checked_mul(l.frames_attended)?,
            } as u128;
            let maps = (l.occurrences as u128)
                .checked_mul(l.heads as u128)?
                .checked_mul(n_q)?
                .checked_mul(n_kv)?;
            let bytes = maps.checked_mul(self.bytes_per_element as u128)?;
            let flops = maps.checked_mul(4)?.checked_mul(l.head_dim as u128)?;
            total = (total.0.checked_add(bytes)?, total.1.checked_add(flops)?);
        }
        Some(total)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// A rational in `(0, 1]`, written `"n/d"` or `"1"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Fraction {
    num: u64,
    den: u64,
}

impl Fraction {
    pub const ONE: Self = Self { num: 1, den: 1 };

    pub fn new(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 || num > den {
            return Err(Error::Config(format!("fraction {num}/{den} outside (0, 1]")));
        }
        Ok(Self { num, den })
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    /// `ceil(n * self)`.
    pub fn keep(&self, n: u64) -> u128 {
        (n as u128 * self.num as u128).div_ceil(self.den as u128)
    }
}

impl FromStr for Fraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("bad fraction '{s}'"));
        let (n, d) = match s.trim().split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        Self::new(n.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl TryFrom<String> for Fraction {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Fraction> for String {
    fn from(f: Fraction) -> Self {
        f.to_string()
    }
}

/// Multiply-adds of `softmax(QK^T)V` counted as 2 FLOPs each:
/// `4 * heads * n_q * n_kv * head_dim`.
pub fn attention_flops(layer: &AttentionLayerSpec, n_q: u64, n_kv: u64) -> u128 {
    4 * layer.heads as u128 * n_q as u128 * n_kv as u128 * layer.head_dim as u128
}

/// Spatial scale of the processed region: `num / den` of each frame.
#[derive(Debug, Clone, Copy)]
struct Region {
    num: u64,
    den: u64,
}

const FULL: Region = Region { num: 1, den: 1 };

struct LayerTokens {
    n_q: u128,
    n_kv: u128,
}

fn layer_tokens(
    model: &ModelSpec,
    layer: &AttentionLayerSpec,
    region: Region,
    kv: Fraction,
    q: Fraction,
) -> LayerTokens {
    let tpf = (layer.tokens_per_frame as u128 * region.num as u128).div_ceil(region.den as u128) as u64;
    if tpf == 0 {
        return LayerTokens { n_q: 0, n_kv: 0 };
    }
    let n_q = q.keep(tpf * model.frames);
    let n_kv = match layer.context_tokens {
        Some(ctx) => ctx as u128,
        None => kv.keep(tpf * layer.frames_attended),
    };
    LayerTokens { n_q, n_kv }
}

fn per_step(model: &ModelSpec, region: Region, kv: Fraction, q: Fraction) -> (u128, u128) {
    let mut bytes = 0u128;
    let mut flops = 0u128;
    for layer in &model.layers {
        let kv = if layer.mergeable_kv() { kv } else { Fraction::ONE };
        let LayerTokens { n_q, n_kv } = layer_tokens(model, layer, region, kv, q);
        let occ = layer.occurrences as u128;
        bytes += occ * layer.heads as u128 * n_q * n_kv * model.bytes_per_element as u128;
        flops += occ * 4 * layer.heads as u128 * n_q * n_kv * layer.head_dim as u128;
    }
    (bytes, flops)
}

/// Bytes of attention maps stored over `steps` denoising steps.
pub fn attention_map_storage(model: &ModelSpec, steps: u64) -> u128 {
    merged_storage(model, steps, Fraction::ONE, Fraction::ONE)
}

/// Storage with key/value and query token counts reduced by merging.
pub fn merged_storage(model: &ModelSpec, steps: u64, kv_keep: Fraction, q_keep: Fraction) -> u128 {
    per_step(model, FULL, kv_keep, q_keep).0 * steps as u128
}

pub fn attention_flops_per_step(model: &ModelSpec, kv_keep: Fraction, q_keep: Fraction) -> u128 {
    per_step(model, FULL, kv_keep, q_keep).1
}

/// Phase lengths of an object-centric run, counted from the schedules alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PhaseSteps {
    pub t_blend: usize,
    pub fg: u64,
    pub bg: u64,
    pub blend: u64,
}

pub fn phase_steps(cfg: &SamplerConfig) -> Result<PhaseSteps> {
    cfg.validate()?;
    let schedule = make_schedule(cfg.train_steps, cfg.steps)?;
    let t_blend = blend_start(&schedule, cfg.train_steps, cfg.gamma);
    let fg = schedule.iter().filter(|&&t| t > t_blend).count() as u64;
    let bg = if fg == 0 {
        0
    } else {
        make_bg_schedule(cfg.train_steps, cfg.steps, cfg.phi, cfg.gamma)?.len() as u64
    };
    Ok(PhaseSteps {
        t_blend,
        fg,
        bg,
        blend: cfg.steps as u64 - fg,
    })
}

/// An exact ratio plus its float value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ratio {
    pub num: u128,
    pub den: u128,
    pub value: f64,
}

impl Ratio {
    fn new(num: u128, den: u128) -> Self {
        Self {
            num,
            den,
            value: if den == 0 { 0.0 } else { num as f64 / den as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingReport {
    pub delta: u64,
    pub total: u64,
    pub phases: PhaseSteps,
    pub token_steps: TokenSteps,
    pub baseline_token_steps: u64,
    /// Token-steps relative to standard sampling.
    pub fraction: Ratio,
    /// `gamma + (1-gamma) d + (1-gamma) (1-d) / phi` with `d = delta / total`.
    pub nominal_fraction: f64,
    /// Same accounting with work quadratic in the tokens per call.
    pub quadratic_fraction: Ratio,
    pub nominal_quadratic_fraction: f64,
}

/// Sampling work of an object-centric run with a `delta`-token foreground
/// crop in a `total`-token latent.
pub fn oc_sampling_report(cfg: &SamplerConfig, delta: u64, total: u64) -> Result<SamplingReport> {
    if total == 0 || delta > total {
        return Err(Error::Config(format!("delta {delta} must be in 0..=total ({total})")));
    }
    let phases = phase_steps(cfg)?;
    let rest = total - delta;
    let skip = cfg.skips_background();
    if phases.fg > 0 && skip && phases.blend == 0 && rest > 0 {
        return Err(Error::Config(format!(
            "gamma = {} with a skipped background never denoises {rest} background tokens",
            cfg.gamma
        )));
    }
    let split = phases.fg > 0;
    let overflow = || Error::Overflow("token steps");
    let mul = |a: u64, b: u64| a.checked_mul(b).ok_or_else(overflow);
    let token_steps = TokenSteps {
        fg: if split { mul(delta, phases.fg)? } else { 0 },
        bg: if split { mul(rest, phases.bg)? } else { 0 },
        blend: mul(total, phases.blend)?,
    };
    token_steps
        .fg
        .checked_add(token_steps.bg)
        .and_then(|v| v.checked_add(token_steps.blend))
        .ok_or_else(overflow)?;
    let n = cfg.steps as u64;
    let baseline = mul(total, n)?;
    // Squares of u64 counts times step counts: checked in u128.
    let sq = |x: u64, k: u64| {
        (x as u128)
            .checked_mul(x as u128)
            .and_then(|v| v.checked_mul(k as u128))
    };
    let quad = |x: u64, k: u64| sq(x, k).ok_or_else(overflow);
    let quad_num = if split {
        quad(delta, phases.fg)?
            .checked_add(quad(rest, phases.bg)?)
            .ok_or_else(overflow)?
    } else {
        0
    }
    .checked_add(quad(total, phases.blend)?)
    .ok_or_else(overflow)?;
    let quad_den = quad(total, n)?;

    let g = cfg.gamma;
    let frac = delta as f64 / total as f64;
    let rest_frac = 1.0 - frac;
    let inv_phi = if skip { 0.0 } else { 1.0 / cfg.phi };
    Ok(SamplingReport {
        delta,
        total,
        phases,
        token_steps,
        baseline_token_steps: baseline,
        fraction: Ratio::new(token_steps.total() as u128, baseline as u128),
        nominal_fraction: g + (1.0 - g) * frac + (1.0 - g) * rest_frac * inv_phi,
        quadratic_fraction: Ratio::new(quad_num, quad_den),
        nominal_quadratic_fraction: g + (1.0 - g) * frac * frac + (1.0 - g) * rest_frac * rest_frac * inv_phi,
    })
}

/// Attention-map storage of an object-centric run: the foreground crop during
/// the split phase, the background at its own step count, the full latent
/// while blending.
pub fn oc_storage(
    model: &ModelSpec,
    cfg: &SamplerConfig,
    delta: u64,
    total: u64,
    kv_keep: Fraction,
    q_keep: Fraction,
) -> Result<u128> {
    let report = oc_sampling_report(cfg, delta, total)?;
    let p = report.phases;
    let fg = per_step(model, Region { num: delta, den: total }, kv_keep, q_keep).0;
    let bg = per_step(
        model,
        Region {
            num: total - delta,
            den: total,
        },
        kv_keep,
        q_keep,
    )
    .0;
    let full = per_step(model, FULL, kv_keep, q_keep).0;
    let terms = if p.fg > 0 {
        [(fg, p.fg), (bg, p.bg), (full, p.blend)]
    } else {
        [(0, 0), (0, 0), (full, p.blend)]
    };
    terms
        .iter()
        .try_fold(0u128, |acc, &(bytes, steps)| {
            acc.checked_add(bytes.checked_mul(steps as u128)?)
        })
        .ok_or(Error::Overflow("object-centric storage"))
}

/// One storage figure of a cost report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageCase {
    pub name: String,
    pub steps: u64,
    #[serde(default = "one")]
    pub kv_keep: Fraction,
    #[serde(default = "one")]
    pub q_keep: Fraction,
    /// Object-centric sampling with a `delta`-token crop of `total` tokens.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_centric: Option<OcCase>,
}

fn one() -> Fraction {
    Fraction::ONE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcCase {
    pub gamma: f64,
    #[serde(with = "crate::sampler::phi_serde")]
    pub phi: f64,
    pub delta: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StorageRow {
    pub name: String,
    pub steps: u64,
    pub kv_keep: Fraction,
    pub q_keep: Fraction,
    pub object_centric: bool,
    pub bytes: u128,
    /// Decimal gigabytes.
    pub gigabytes: f64,
    pub flops_per_full_step: u128,
}

pub fn storage_row(model: &ModelSpec, case: &StorageCase) -> Result<StorageRow> {
    if case.steps == 0 {
        return Err(Error::Config(format!("case '{}': steps must be >= 1", case.name)));
    }
    let bytes = match &case.object_centric {
        None => merged_storage(model, case.steps, case.kv_keep, case.q_keep),
        Some(oc) => {
            let cfg = SamplerConfig {
                steps: usize::try_from(case.steps).map_err(|_| Error::Overflow("steps"))?,
                gamma: oc.gamma,
                phi: oc.phi,
                ..SamplerConfig::default()
            };
            oc_storage(model, &cfg, oc.delta, oc.total, case.kv_keep, case.q_keep)?
        }
    };
    Ok(StorageRow {
        name: case.name.clone(),
        steps: case.steps,
        kv_keep: case.kv_keep,
        q_keep: case.q_keep,
        object_centric: case.object_centric.is_some(),
        bytes,
        gigabytes: bytes as f64 / 1e9,
        flops_per_full_step: attention_flops_per_step(model, case.kv_keep, case.q_keep),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(tpf: u64, fa: u64, ctx: Option<u64>) -> AttentionLayerSpec {
        AttentionLayerSpec {
            name: String::new(),
            tokens_per_frame: tpf,
            frames_attended: fa,
            heads: 8,
            head_dim: 40,
            occurrences: 1,
            context_tokens: ctx,
        }
    }

    fn model(layers: Vec<AttentionLayerSpec>) -> ModelSpec {
        ModelSpec {
            name: String::new(),
            layers,
            frames: 8,
            bytes_per_element: 2,
        }
    }

    #[test]
    fn flops_scale() {
        let l = layer(64, 1, None);
        assert_eq!(attention_flops(&l, 10, 20), 2 * attention_flops(&l, 10, 10));
        assert_eq!(attention_flops(&l, 20, 20), 4 * attention_flops(&l, 10, 10));
        assert_eq!(attention_flops(&l, 1, 1), 4 * 8 * 40);
    }

    #[test]
    fn storage_formula() {
        let m = model(vec![layer(64, 2, None)]);
        // 8 heads * (64*8) * (64*2) * 2 bytes.
        assert_eq!(attention_map_storage(&m, 1), 8 * 512 * 128 * 2);
        assert_eq!(attention_map_storage(&m, 20) * 5, attention_map_storage(&m, 50) * 2);
        assert_eq!(attention_map_storage(&model(vec![]), 50), 0);
        let kv = Fraction::new(1, 16).unwrap();
        assert_eq!(
            merged_storage(&m, 3, kv, Fraction::ONE) * 16,
            attention_map_storage(&m, 3)
        );
        assert_eq!(
            merged_storage(&m, 3, Fraction::ONE, Fraction::ONE),
            attention_map_storage(&m, 3)
        );
    }

    #[test]
    fn context_layers_ignore_kv_fraction() {
        let m = model(vec![layer(64, 1, Some(77))]);
        let kv = Fraction::new(1, 8).unwrap();
        assert_eq!(merged_storage(&m, 1, kv, Fraction::ONE), attention_map_storage(&m, 1));
    }

    #[test]
    fn fraction_parsing() {
        assert_eq!("1/8".parse::<Fraction>().unwrap(), Fraction::new(1, 8).unwrap());
        assert_eq!("1".parse::<Fraction>().unwrap(), Fraction::ONE);
        for bad in ["0/3", "3/2", "x", "1/0", "", "-1/2"] {
            assert!(bad.parse::<Fraction>().is_err(), "{bad}");
        }
        let f: Fraction = serde_json::from_str(r#""2/3""#).unwrap();
        assert_eq!(serde_json::to_string(&f).unwrap(), r#""2/3""#);
        assert_eq!(f.keep(10), 7);
    }

    #[test]
    fn sampling_fractions() {
        let cfg = SamplerConfig::default();
        let r = oc_sampling_report(&cfg, 0, 4096).unwrap();
        assert_eq!(r.fraction.value, 0.25);
        let r = oc_sampling_report(&cfg, 1024, 4096).unwrap();
        assert_eq!(r.nominal_fraction, 0.4375);
        assert_eq!(r.fraction.value, 0.4375);
        let one = SamplerConfig {
            phi: 1.0,
            ..cfg.clone()
        };
        assert_eq!(oc_sampling_report(&one, 4096, 4096).unwrap().fraction.value, 1.0);
        assert!(oc_sampling_report(&cfg, 5, 4).is_err());
        let never = SamplerConfig { gamma: 0.0, ..cfg };
        assert!(oc_sampling_report(&never, 10, 40).is_err());
        assert!(oc_sampling_report(&never, 40, 40).is_ok());
    }

    #[test]
    fn model_json() {
        let m = ModelSpec::from_json(
            r#"{"frames":8,"layers":[{"tokens_per_frame":64,"frames_attended":2,"heads":8,"head_dim":40,"occurrences":1}]}"#,
        )
        .unwrap();
        assert_eq!(m.bytes_per_element, 2);
        assert!(ModelSpec::from_json(r#"{"frames":0,"layers":[]}"#).is_err());
        assert!(ModelSpec::from_json(
            r#"{"frames":8,"layers":[{"tokens_per_frame":64,"frames_attended":2,"heads":0,"head_dim":40,"occurrences":1}]}"#
        )
        .is_err());
        let huge = r#"{"frames":8,"layers":[{"tokens_per_frame":4294967296,"frames_attended":2,"heads":8,"head_dim":40,"occurrences":1}]}"#;
        assert_eq!(
            ModelSpec::from_json(huge),
            Err(Error::Overflow("per-step attention cost"))
        );
    }

    #[test]
    fn huge_counts_are_errors() {
        let cfg = SamplerConfig::default();
        assert!(matches!(
            oc_sampling_report(&cfg, u64::MAX / 2, u64::MAX),
            Err(Error::Overflow(_))
        ));
        assert!(oc_sampling_report(&cfg, 1 << 20, 1 << 30).is_ok());
    }
}
