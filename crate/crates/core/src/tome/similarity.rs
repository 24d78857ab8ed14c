use crate::{Error, Result};

pub(crate) fn squared_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Returns the token, rescaled to unit max-abs when its squared norm would
/// leave `[1e-150, 1e150]`, together with its squared norm. Cosine
/// similarity is scale invariant, so the rescale only avoids overflow in the
/// dot products. `None` for all-zero tokens.
pub(crate) fn prepare(a: &[f64]) -> Option<(std::borrow::Cow<'_, [f64]>, f64)> {
    let n2 = squared_norm(a);
    if (1e-150..=1e150).contains(&n2) {
        return Some((a.into(), n2));
    }
    let m = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return None;
    }
    let scaled: Vec<f64> = a.iter().map(|v| v / m).collect();
    let n2 = squared_norm(&scaled);
    Some((scaled.into(), n2))
}

/// Similarity from a dot product and the two squared norms.
///
/// Dividing by `sqrt(|a|^2 |b|^2)` makes identical and antipodal vectors hit
/// exactly 1 and 0.
#[inline]
pub(crate) fn sim_from_parts(dot: f64, na2: f64, nb2: f64) -> f64 {
    let cos = dot / (na2 * nb2).sqrt();
    0.5 * (cos.clamp(-1.0, 1.0) + 1.0)
}

/// Cosine similarity remapped to `[0, 1]`.
pub fn sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!(
            "similarity of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (a, na2) = prepare(a).ok_or(Error::DegenerateToken { index: 0 })?;
    let (b, nb2) = prepare(b).ok_or(Error::DegenerateToken { index: 1 })?;
    Ok(sim_from_parts(dot(&a, &b), na2, nb2))
}

/// Foreground-aware similarity: sources inside the mask are scaled by `eta`.
pub fn eta_sim(a: &[f64], b: &[f64], in_foreground: bool, eta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Config(format!("eta {eta} outside [0, 1]")));
    }
    let s = sim(a, b)?;
    Ok(weight(in_foreground, eta) * s)
}

#[inline]
pub(crate) fn weight(in_foreground: bool, eta: f64) -> f64 {
    if in_foreground {
        eta
    } else {
        1.0
    }
}
