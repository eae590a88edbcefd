use crate::error::{Error, Result};
use crate::math;

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), actual: y.len() });
    }
    if x.is_empty() {
        return Err(Error::domain("vectors must have at least one component"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::domain("vector components must be finite"));
    }
    Ok(())
}

/// Metric induced by the `L^p` norm, `(sum |x_i - y_i|^p)^(1/p)`.
pub fn minkowski_distance(x: &[f64], y: &[f64], p: f64) -> Result<f64> {
    check_pair(x, y)?;
    if !(p >= 1.0) {
        return Err(Error::domain("minkowski order must satisfy p >= 1"));
    }
    if p == 1.0 {
        return Ok(x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum());
    }
    if p == 2.0 {
        return Ok(math::sqrt(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()));
    }
    if p.is_infinite() {
        return Ok(x.iter().zip(y).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs())));
    }
    let s: f64 = x.iter().zip(y).map(|(a, b)| math::powf((a - b).abs(), p)).sum();
    Ok(math::powf(s, 1.0 / p))
}

pub fn manhattan_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    minkowski_distance(x, y, 1.0)
}

pub fn euclidean_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    minkowski_distance(x, y, 2.0)
}

/// `||x - y||_2^2` without validation; callers check lengths.
#[inline]
pub fn squared_euclidean(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}
