// SPDX-License-Identifier: MIT OR Apache-2.0

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::hrf::HrfParams;
use super::EncodingError;

pub const INTERCEPT: &str = "intercept";

/// Predictor amplitudes at event times (one event per word offset).
#[derive(Debug, Clone, PartialEq)]
pub struct EventSeries {
    names: Vec<String>,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl EventSeries {
    pub fn new(names: Vec<String>, times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, EncodingError> {
        if names.is_empty() {
            return Err(EncodingError::InvalidInput("event series has no predictors".into()));
        }
        if times.len() != values.len() {
            return Err(EncodingError::InvalidInput(format!(
                "{} event times but {} value rows",
                times.len(),
                values.len()
            )));
        }
        for (i, (t, row)) in times.iter().zip(&values).enumerate() {
            if !t.is_finite() || row.iter().any(|v| !v.is_finite()) {
                return Err(EncodingError::InvalidInput(format!("event {i} is not finite")));
            }
            if row.len() != names.len() {
                return Err(EncodingError::InvalidInput(format!(
                    "event {i} has {} values for {} predictors",
                    row.len(),
                    names.len()
                )));
            }
            if i > 0 && *t < times[i - 1] {
                return Err(EncodingError::InvalidInput(format!("event times decrease at event {i}")));
            }
        }
        Ok(Self { names, times, values })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvolutionOptions {
    pub hrf: HrfParams,
    /// Fine-grid samples per second.
    pub oversample: usize,
    /// Time of the first scan.
    pub scan_start: f64,
}

impl Default for ConvolutionOptions {
    fn default() -> Self {
        Self { hrf: HrfParams::default(), oversample: 20, scan_start: 0.0 }
    }
}

/// Convolved regressors sampled at scan times, z-scored, with an intercept
/// as the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub matrix: DMatrix<f64>,
    pub tr: f64,
    pub names: Vec<String>,
    pub scan_start: f64,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// Predictors excluding the intercept.
    pub fn n_predictors(&self) -> usize {
        self.names.len() - 1
    }

    pub fn intercept_column(&self) -> usize {
        self.names.len() - 1
    }
}

pub fn n_scans(duration: f64, tr: f64) -> usize {
    (duration / tr - 1e-9).ceil().max(0.0) as usize
}

/// Places impulses on the fine grid, convolves with the sampled HRF and reads
/// the result at scan times. No z-scoring.
pub fn convolve_events(
    events: &EventSeries,
    tr: f64,
    duration: f64,
    opts: &ConvolutionOptions,
) -> Result<DMatrix<f64>, EncodingError> {
    if !(tr > 0.0) || !(duration > 0.0) || opts.oversample == 0 {
        return Err(EncodingError::InvalidInput(format!(
            "need TR > 0, duration > 0 and oversample >= 1 (TR {tr}, duration {duration}, oversample {})",
            opts.oversample
        )));
    }
    let dt = 1.0 / opts.oversample as f64;
    let kernel = opts.hrf.sample(dt);
    let n = n_scans(duration, tr);
    let mut out = DMatrix::zeros(n, events.names.len());
    for (i, (&t, row)) in events.times.iter().zip(&events.values).enumerate() {
        let rel = t - opts.scan_start;
        if rel < 0.0 || t > opts.scan_start + duration {
            return Err(EncodingError::EventOutOfRange { index: i, time: t, duration });
        }
        let onset = (rel / dt).round() as i64;
        for s in 0..n {
            let lag = ((s as f64 * tr) / dt).round() as i64 - onset;
            if lag < 0 || lag as usize >= kernel.len() {
                continue;
            }
            let h = kernel[lag as usize];
            for (c, v) in row.iter().enumerate() {
                out[(s, c)] += v * h;
            }
        }
    }
    Ok(out)
}

/// Full fine-grid convolution of an impulse train, truncated to its length.
pub fn convolve_fine(impulses: &[f64], kernel: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; impulses.len()];
    for (j, &a) in impulses.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (k, h) in kernel.iter().enumerate().take(impulses.len() - j) {
            out[j + k] += a * h;
        }
    }
    out
}

/// Population z-score of every column; fails on a zero-variance column.
pub fn zscore_columns(raw: DMatrix<f64>, names: &[String]) -> Result<DMatrix<f64>, EncodingError> {
    let mut m = raw;
    let n = m.nrows() as f64;
    for (c, name) in names.iter().enumerate() {
        let mut col = m.column_mut(c);
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / n).sqrt();
        if !(sd > 1e-12) {
            return Err(EncodingError::DegenerateColumn(name.clone()));
        }
        col /= sd;
    }
    Ok(m)
}

pub fn with_intercept(m: &DMatrix<f64>, names: &[String], tr: f64, scan_start: f64) -> DesignMatrix {
    let matrix = m.clone().insert_column(m.ncols(), 1.0);
    let mut names = names.to_vec();
    names.push(INTERCEPT.to_string());
    DesignMatrix { matrix, tr, names, scan_start }
}

/// Convolves, z-scores each predictor column and appends the intercept.
pub fn convolve_to_design(
    events: &EventSeries,
    tr: f64,
    duration: f64,
    opts: &ConvolutionOptions,
) -> Result<DesignMatrix, EncodingError> {
    let raw = convolve_events(events, tr, duration, opts)?;
    let z = zscore_columns(raw, &events.names)?;
    Ok(with_intercept(&z, &events.names, tr, opts.scan_start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::hrf;

    fn one(times: &[f64], amps: &[f64]) -> EventSeries {
        EventSeries::new(vec!["x".into()], times.to_vec(), amps.iter().map(|a| vec![*a]).collect()).unwrap()
    }

    #[test]
    fn impulse_at_zero_samples_the_kernel() {
        let col = convolve_events(&one(&[0.0], &[1.0]), 2.0, 40.0, &ConvolutionOptions::default()).unwrap();
        assert_eq!(col.nrows(), 20);
        for s in 0..20 {
            let t = 2.0 * s as f64;
            assert!((col[(s, 0)] - hrf(t)).abs() < 1e-15, "scan {s}");
        }
    }

    #[test]
    fn rows_are_ceiling_of_duration_over_tr() {
        let col = convolve_events(&one(&[0.0], &[1.0]), 2.0, 41.0, &ConvolutionOptions::default()).unwrap();
        assert_eq!(col.nrows(), 21);
    }

    #[test]
    fn events_past_the_end_are_rejected() {
        let err = convolve_events(&one(&[10.0], &[1.0]), 2.0, 8.0, &ConvolutionOptions::default()).unwrap_err();
        assert!(matches!(err, EncodingError::EventOutOfRange { index: 0, .. }));
    }

    #[test]
    fn zero_column_is_degenerate() {
        let e = one(&[1.0, 3.0], &[0.0, 0.0]);
        let err = convolve_to_design(&e, 2.0, 40.0, &ConvolutionOptions::default()).unwrap_err();
        assert!(matches!(err, EncodingError::DegenerateColumn(ref n) if n == "x"));
    }

    #[test]
    fn design_is_zscored_with_intercept() {
        let e = one(&[1.0, 3.3, 9.1, 20.0], &[1.0, 2.0, 0.5, 1.5]);
        let d = convolve_to_design(&e, 2.0, 60.0, &ConvolutionOptions::default()).unwrap();
        assert_eq!(d.names, ["x", "intercept"]);
        let c = d.matrix.column(0);
        assert!(c.mean().abs() < 1e-12);
        assert!(((c.norm_squared() / 30.0).sqrt() - 1.0).abs() < 1e-12);
        assert!(d.matrix.column(1).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn unordered_events_are_rejected() {
        assert!(EventSeries::new(vec!["x".into()], vec![2.0, 1.0], vec![vec![1.0], vec![1.0]]).is_err());
    }
}
