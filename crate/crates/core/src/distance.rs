//! Distances between class distributions.

use crate::error::{Error, Result};

fn same_len(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch(p.len(), q.len()));
    }
    Ok(())
}

/// Jensen-Shannon distance: the square root of the JS divergence with
/// natural logarithms. Bounded by `sqrt(ln 2)`; `0 ln 0` is taken as 0.
pub fn js_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    same_len(p, q)?;
    Ok(js_divergence_unchecked(p, q).sqrt())
}

pub(crate) fn js_divergence_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let mut div = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            div += a * (a / m).ln();
        }
        if b > 0.0 {
            div += b * (b / m).ln();
        }
    }
    (0.5 * div).max(0.0)
}

/// L2 norm of `p - q`.
pub fn euclidean_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    same_len(p, q)?;
    Ok(euclidean_unchecked(p, q))
}

pub(crate) fn euclidean_unchecked(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}
