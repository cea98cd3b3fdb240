// SPDX-License-Identifier: MIT OR Apache-2.0

use super::bold::BoldMatrix;
use super::EncodingError;

pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Squared correlation of `y` with `x`, the R² of `y ~ 1 + x`.
/// `None` when `x` has no variance.
fn simple_r2(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 {
        return None;
    }
    if syy == 0.0 {
        return Some(0.0);
    }
    Some((sxy * sxy) / (sxx * syy))
}

/// Per-vertex noise ceiling: each subject regressed on the across-subject
/// mean time course, R² averaged over subjects. With `leave_one_out` the mean
/// excludes the subject being predicted. `None` marks vertices where the
/// mean signal has no variance.
pub fn isc_ceiling(
    bolds: &[BoldMatrix],
    vertices: &[usize],
    leave_one_out: bool,
) -> Result<Vec<Option<f64>>, EncodingError> {
    if bolds.len() < 2 {
        return Err(EncodingError::InvalidInput("noise ceiling needs at least 2 subjects".into()));
    }
    let shape = bolds[0].data.shape();
    if let Some(b) = bolds.iter().find(|b| b.data.shape() != shape) {
        return Err(EncodingError::ShapeMismatch(format!(
            "{} is {:?}, {} is {shape:?}",
            b.subject,
            b.data.shape(),
            bolds[0].subject
        )));
    }
    if let Some(&v) = vertices.iter().find(|&&v| v >= shape.1) {
        return Err(EncodingError::InvalidInput(format!("vertex {v} out of range ({} vertices)", shape.1)));
    }
    Ok(vertices
        .iter()
        .map(|&v| {
            let cols: Vec<Vec<f64>> = bolds.iter().map(|b| b.data.column(v).iter().copied().collect()).collect();
            let full = running_mean(cols.iter());
            let mut total = 0.0;
            for (s, y) in cols.iter().enumerate() {
                total += if leave_one_out {
                    let others = cols.iter().enumerate().filter(|(o, _)| *o != s).map(|(_, c)| c);
                    simple_r2(&running_mean(others), y)?
                } else {
                    simple_r2(&full, y)?
                };
            }
            Some(total / cols.len() as f64)
        })
        .collect())
}

/// Incremental mean of equal-length series; exact when all series are identical.
fn running_mean<'a>(series: impl Iterator<Item = &'a Vec<f64>>) -> Vec<f64> {
    let mut mean: Vec<f64> = Vec::new();
    for (k, s) in series.enumerate() {
        if k == 0 {
            mean = s.clone();
        } else {
            let k = (k + 1) as f64;
            for (m, x) in mean.iter_mut().zip(s) {
                *m += (x - *m) / k;
            }
        }
    }
    mean
}

/// `r2 / ceiling` when the ceiling exceeds `epsilon`.
pub fn normalize_r2(r2: f64, ceiling: Option<f64>, epsilon: f64) -> Option<f64> {
    match ceiling {
        Some(c) if c > epsilon => Some(r2 / c),
        _ => None,
    }
}
