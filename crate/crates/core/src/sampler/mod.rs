//! Deterministic diffusion sampling, standard and object-centric.
//!
//! Object-centric sampling denoises a rectangular crop around the foreground
//! at the normal step rate, the background at a `phi` times coarser rate (or
//! not at all), scatters both back together at the blend step `gamma * T`,
//! and finishes the trajectory on the full latent.

mod denoiser;
mod engine;
mod schedule;

pub use denoiser::{CountingDenoiser, DeltaOracleDenoiser, Denoiser};
pub use engine::{
    count_token_steps, ddim_step, object_centric_sample, standard_sample, BackgroundSource, OcOutcome, OcRunReport,
    TokenSteps,
};
pub use schedule::{blend_start, make_bg_schedule, make_schedule, NoiseSchedule, PhasePlan, Step};

use serde::{Deserialize, Serialize};

use crate::tensor::CropMode;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Training steps `T`.
    #[serde(rename = "T")]
    pub train_steps: usize,
    /// Inference steps `N`.
    #[serde(rename = "N")]
    pub steps: usize,
    /// Fraction of the trajectory spent denoising the full latent.
    pub gamma: f64,
    /// Background step-rate divisor. Infinite skips the background phase;
    /// written as `"inf"` in JSON.
    #[serde(with = "phi_serde")]
    pub phi: f64,
    pub seed: u64,
    /// Tokens of padding around the foreground box.
    pub crop_pad: usize,
    pub crop_mode: CropMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            train_steps: 1000,
            steps: 20,
            gamma: 0.25,
            phi: f64::INFINITY,
            seed: 0,
            crop_pad: 0,
            crop_mode: CropMode::Union,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.steps > self.train_steps {
            return Err(Error::Config(format!(
                "inference steps N = {} must be in 1..=T (T = {})",
                self.steps, self.train_steps
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma = {} outside [0, 1]", self.gamma)));
        }
        if self.phi.is_nan() || self.phi < 1.0 {
            return Err(Error::Config(format!("phi = {} must be >= 1", self.phi)));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn skips_background(&self) -> bool {
        self.phi.is_infinite()
    }
}

pub(crate) mod phi_serde {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(phi: &f64, s: S) -> Result<S::Ok, S::Error> {
        if phi.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*phi)
        }
    }

    struct PhiVisitor;

    impl Visitor<'_> for PhiVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a number or \"inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" | "infinity" | "skip" => Ok(f64::INFINITY),
                other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
            }
        }

        fn visit_unit<E: de::Error>(self) -> Result<f64, E> {
            Ok(f64::INFINITY)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(PhiVisitor)
    }
}
