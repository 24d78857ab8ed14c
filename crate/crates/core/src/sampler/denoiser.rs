use std::sync::Mutex;

use super::NoiseSchedule;
use crate::tensor::TokenGrid;
use crate::{Error, Result};

/// Noise predictor used by the sampling loops.
///
/// `z` holds the tokens being denoised (the full latent, a foreground crop or
/// the flattened background), and `origin[i]` is the flat index of token `i`
/// in the full latent. The output must have the shape of `z`.
pub trait Denoiser: Sync {
    fn predict(&self, z: &TokenGrid, origin: &[usize], t: usize) -> Result<TokenGrid>;
}

/// Exact noise prediction for data concentrated on a single latent `mu`.
///
/// Returns `(z - sqrt(ab_t) mu) / sqrt(1 - ab_t)`, so every DDIM step
/// recovers `mu` as its clean estimate. Acts on each token independently.
#[derive(Debug, Clone)]
pub struct DeltaOracleDenoiser {
    mu: TokenGrid,
    schedule: NoiseSchedule,
}

impl DeltaOracleDenoiser {
    pub fn new(mu: TokenGrid, schedule: NoiseSchedule) -> Self {
        Self { mu, schedule }
    }

    pub fn mu(&self) -> &TokenGrid {
        &self.mu
    }
}

impl Denoiser for DeltaOracleDenoiser {
    fn predict(&self, z: &TokenGrid, origin: &[usize], t: usize) -> Result<TokenGrid> {
        if t == 0 {
            return Err(Error::Schedule("noise prediction at t = 0".into()));
        }
        if origin.len() != z.num_tokens() || z.channels() != self.mu.channels() {
            return Err(Error::Shape(format!(
                "{} tokens with {} origins, {} channels vs {}",
                z.num_tokens(),
                origin.len(),
                z.channels(),
                self.mu.channels()
            )));
        }
        let n = self.mu.num_tokens();
        if let Some(&bad) = origin.iter().find(|&&o| o >= n) {
            return Err(Error::Shape(format!("origin {bad} outside {n} tokens")));
        }
        let ab = self.schedule.alpha_bar(t)?;
        let (sa, s1a) = (ab.sqrt(), (1.0 - ab).sqrt());
        let mut out = Vec::with_capacity(z.data().len());
        for (tok, &o) in z.tokens().zip(origin) {
            out.extend(tok.iter().zip(self.mu.token(o)).map(|(zv, mv)| (zv - sa * mv) / s1a));
        }
        TokenGrid::new(z.dims(), z.channels(), out)
    }
}

/// Wraps a denoiser and records `(t, token count)` for every call.
#[derive(Debug)]
pub struct CountingDenoiser<'a, D> {
    inner: &'a D,
    calls: Mutex<Vec<(usize, usize)>>,
}

impl<'a, D: Denoiser> CountingDenoiser<'a, D> {
    pub fn new(inner: &'a D) -> Self {
        Self {
            inner,
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Calls sorted by `(t, tokens)`; concurrent phases make arrival order
    /// meaningless.
    pub fn calls(&self) -> Vec<(usize, usize)> {
        let mut calls = self.calls.lock().expect("counter lock").clone();
        calls.sort_unstable();
        calls
    }

    pub fn token_steps(&self) -> u64 {
        self.calls
            .lock()
            .expect("counter lock")
            .iter()
            .map(|&(_, n)| n as u64)
            .sum()
    }
}

impl<D: Denoiser> Denoiser for CountingDenoiser<'_, D> {
    fn predict(&self, z: &TokenGrid, origin: &[usize], t: usize) -> Result<TokenGrid> {
        self.calls.lock().expect("counter lock").push((t, z.num_tokens()));
        self.inner.predict(z, origin, t)
    }
}
