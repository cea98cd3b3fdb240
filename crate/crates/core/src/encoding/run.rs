// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bold::BoldMatrix;
use super::design::{convolve_events, n_scans, with_intercept, zscore_columns, ConvolutionOptions, DesignMatrix, EventSeries};
use super::isc::{isc_ceiling, normalize_r2, DEFAULT_EPSILON};
use super::regress::{default_alphas, r_squared, AlphaSelection, OlsSolver, RidgeSolver};
use super::EncodingError;
use crate::composition::ScoreTable;
use crate::controls::{ControlTable, TimingRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Ridge,
    Ols,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum R2Mode {
    /// Fit and score on every scan.
    #[default]
    InSample,
    /// Fit on the first half of the scans, score on the second.
    HeldOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingOptions {
    pub method: Method,
    pub alphas: Vec<f64>,
    pub alpha_selection: AlphaSelection,
    pub convolution: ConvolutionOptions,
    pub epsilon: f64,
    pub isc_leave_one_out: bool,
    pub r2_mode: R2Mode,
}

impl Default for EncodingOptions {
    fn default() -> Self {
        Self {
            method: Method::Ridge,
            alphas: default_alphas(),
            alpha_selection: AlphaSelection::Gcv,
            convolution: ConvolutionOptions::default(),
            epsilon: DEFAULT_EPSILON,
            isc_leave_one_out: false,
            r2_mode: R2Mode::InSample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VertexResult {
    pub vertex: usize,
    /// One coefficient per predictor; the intercept is not included.
    pub beta: Vec<f64>,
    pub alpha: f64,
    pub r2: f64,
    pub r2_isc: Option<f64>,
    pub r2_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncodingResult {
    pub subject: String,
    pub predictor_names: Vec<String>,
    pub vertices: Vec<VertexResult>,
}

#[derive(Serialize, Deserialize)]
struct BetaRow<S> {
    vertex: usize,
    predictor: S,
    beta: f64,
    alpha: f64,
    r2: f64,
    r2_isc: Option<f64>,
    r2_norm: Option<f64>,
}

impl EncodingResult {
    /// One row per (vertex, predictor); invalid ceilings are left empty.
    pub fn write_betas_csv<W: Write>(&self, writer: W) -> Result<(), EncodingError> {
        let mut w = csv::Writer::from_writer(writer);
        for v in &self.vertices {
            for (name, beta) in self.predictor_names.iter().zip(&v.beta) {
                w.serialize(BetaRow {
                    vertex: v.vertex,
                    predictor: name.as_str(),
                    beta: *beta,
                    alpha: v.alpha,
                    r2: v.r2,
                    r2_isc: v.r2_isc,
                    r2_norm: v.r2_norm,
                })?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a file written by [`Self::write_betas_csv`].
    pub fn read_betas_csv<R: Read>(subject: impl Into<String>, reader: R) -> Result<Self, EncodingError> {
        let mut predictor_names: Vec<String> = Vec::new();
        let mut vertices: Vec<VertexResult> = Vec::new();
        for row in csv::Reader::from_reader(reader).deserialize::<BetaRow<String>>() {
            let row = row?;
            if vertices.last().is_none_or(|v| v.vertex != row.vertex) {
                vertices.push(VertexResult {
                    vertex: row.vertex,
                    beta: Vec::new(),
                    alpha: row.alpha,
                    r2: row.r2,
                    r2_isc: row.r2_isc,
                    r2_norm: row.r2_norm,
                });
            }
            let first = vertices.len() == 1;
            let v = vertices.last_mut().expect("pushed above");
            if first {
                predictor_names.push(row.predictor);
            } else if predictor_names.get(v.beta.len()) != Some(&row.predictor) {
                return Err(EncodingError::InvalidInput(format!(
                    "vertex {}: unexpected predictor {:?}",
                    row.vertex, row.predictor
                )));
            }
            v.beta.push(row.beta);
        }
        if let Some(v) = vertices.iter().find(|v| v.beta.len() != predictor_names.len()) {
            return Err(EncodingError::InvalidInput(format!("vertex {} has {} predictors", v.vertex, v.beta.len())));
        }
        Ok(Self { subject: subject.into(), predictor_names, vertices })
    }

    pub fn valid_r2_norm(&self) -> impl Iterator<Item = f64> + '_ {
        self.vertices.iter().filter_map(|v| v.r2_norm)
    }
}

/// Events at word offsets from `(sentence_id, word_index)`-keyed values.
pub fn events_from_keyed(
    names: Vec<String>,
    values: &BTreeMap<(usize, usize), Vec<f64>>,
    timing: &[TimingRow],
) -> Result<EventSeries, EncodingError> {
    let offsets: BTreeMap<(usize, usize), f64> =
        timing.iter().map(|t| ((t.sentence_id, t.word_index), t.offset_s)).collect();
    let mut events: Vec<(f64, (usize, usize))> = Vec::with_capacity(values.len());
    for key in values.keys() {
        let t = offsets.get(key).ok_or_else(|| {
            EncodingError::InvalidInput(format!("no timing for sentence {} word {}", key.0, key.1))
        })?;
        events.push((*t, *key));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let times = events.iter().map(|e| e.0).collect();
    let rows = events.iter().map(|e| values[&e.1].clone()).collect();
    EventSeries::new(names, times, rows)
}

/// One predictor per layer, named `layer_<l>`.
pub fn events_from_scores(table: &ScoreTable, timing: &[TimingRow]) -> Result<EventSeries, EncodingError> {
    let mut values: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for r in &table.rows {
        values.entry((r.sentence_id, r.word_index)).or_insert_with(|| vec![f64::NAN; table.n_layers])[r.layer] =
            r.score;
    }
    let names = (0..table.n_layers).map(|l| format!("layer_{l}")).collect();
    events_from_keyed(names, &values, timing)
}

/// The named control predictors at each word's offset.
pub fn events_from_controls(table: &ControlTable, predictors: &[&str]) -> Result<EventSeries, EncodingError> {
    let idx: Vec<usize> = predictors
        .iter()
        .map(|p| {
            ControlTable::PREDICTORS
                .iter()
                .position(|q| q == p)
                .ok_or_else(|| EncodingError::InvalidInput(format!("unknown control predictor {p:?}")))
        })
        .collect::<Result<_, _>>()?;
    let mut rows: Vec<_> = table.rows.iter().collect();
    rows.sort_by(|a, b| a.offset_time.total_cmp(&b.offset_time));
    let times = rows.iter().map(|r| r.offset_time).collect();
    let values = rows
        .iter()
        .map(|r| {
            let all = ControlTable::predictor_values(r);
            idx.iter().map(|&i| all[i]).collect()
        })
        .collect();
    EventSeries::new(predictors.iter().map(|s| s.to_string()).collect(), times, values)
}

/// Checks that all subjects share TR and shape.
pub fn check_subjects(bolds: &[BoldMatrix]) -> Result<(f64, usize, usize), EncodingError> {
    let first = bolds.first().ok_or_else(|| EncodingError::InvalidInput("no subjects".into()))?;
    for b in bolds {
        if b.tr != first.tr {
            return Err(EncodingError::ShapeMismatch(format!(
                "{} has TR {}, {} has TR {}",
                b.subject, b.tr, first.subject, first.tr
            )));
        }
        if b.data.shape() != first.data.shape() {
            return Err(EncodingError::ShapeMismatch(format!(
                "{} is {:?}, {} is {:?}",
                b.subject,
                b.data.shape(),
                first.subject,
                first.data.shape()
            )));
        }
    }
    Ok((first.tr, first.n_trs(), first.n_vertices()))
}

/// Design for `n_trs` scans. Events may run past the last scan by at most
/// one TR; beyond that the timing and the recording disagree.
pub fn design_for_scans(
    events: &EventSeries,
    tr: f64,
    n_trs: usize,
    opts: &ConvolutionOptions,
) -> Result<DesignMatrix, EncodingError> {
    let duration = n_trs as f64 * tr;
    let last = events.last_time().unwrap_or(0.0) - opts.scan_start;
    if last > duration + tr {
        return Err(EncodingError::DurationMismatch { events_end: last, bold_duration: duration, tr });
    }
    let raw = convolve_events(events, tr, duration.max(last), opts)?;
    debug_assert!(n_scans(duration.max(last), tr) >= n_trs);
    let raw = raw.rows(0, n_trs).clone_owned();
    let z = zscore_columns(raw, events.names())?;
    Ok(with_intercept(&z, events.names(), tr, opts.scan_start))
}

enum Solver {
    Ols(OlsSolver),
    Ridge(RidgeSolver),
}

impl Solver {
    fn new(design: &DesignMatrix, rows: Option<&[usize]>, opts: &EncodingOptions) -> Result<Self, EncodingError> {
        let x = match rows {
            Some(r) => design.matrix.select_rows(r),
            None => design.matrix.clone(),
        };
        Ok(match opts.method {
            Method::Ols => Solver::Ols(OlsSolver::new(&x, &design.names)?),
            Method::Ridge => Solver::Ridge(
                RidgeSolver::new(&x, Some(design.intercept_column()))?.with_selection(opts.alpha_selection)?,
            ),
        })
    }

    fn fit(&self, y: &DVector<f64>, alphas: &[f64]) -> Result<(DVector<f64>, f64, f64), EncodingError> {
        Ok(match self {
            Solver::Ols(s) => {
                let f = s.fit(y);
                (f.beta, 0.0, f.r2)
            }
            Solver::Ridge(s) => {
                let f = s.fit(y, alphas)?;
                (f.beta, f.alpha, f.r2)
            }
        })
    }
}

/// Fits every masked vertex of every subject against a shared design and
/// normalizes R² by the noise ceiling. Vertices come back in ascending order.
pub fn run_encoding(
    events: &EventSeries,
    bolds: &[BoldMatrix],
    mask: &[usize],
    opts: &EncodingOptions,
) -> Result<Vec<EncodingResult>, EncodingError> {
    let (tr, n_trs, n_vertices) = check_subjects(bolds)?;
    let mut vertices = mask.to_vec();
    vertices.sort_unstable();
    vertices.dedup();
    if vertices.is_empty() {
        return Err(EncodingError::InvalidInput("mask is empty".into()));
    }
    if let Some(&v) = vertices.iter().find(|&&v| v >= n_vertices) {
        return Err(EncodingError::InvalidInput(format!("mask vertex {v} out of range ({n_vertices} vertices)")));
    }
    let design = design_for_scans(events, tr, n_trs, &opts.convolution)?;
    let ceilings = isc_ceiling(bolds, &vertices, opts.isc_leave_one_out)?;
    let (train, test): (Option<Vec<usize>>, Option<Vec<usize>>) = match opts.r2_mode {
        R2Mode::InSample => (None, None),
        R2Mode::HeldOut => (Some((0..n_trs / 2).collect()), Some((n_trs / 2..n_trs).collect())),
    };
    let solver = Solver::new(&design, train.as_deref(), opts)?;
    let n_pred = design.n_predictors();

    bolds
        .iter()
        .map(|bold| {
            let fits: Vec<VertexResult> = vertices
                .par_iter()
                .zip(ceilings.par_iter())
                .map(|(&v, &ceiling)| {
                    let y = bold.data.column(v).clone_owned();
                    let (beta, alpha, r2) = match (&train, &test) {
                        (Some(train), Some(test)) => {
                            let (beta, alpha, _) = solver.fit(&y.select_rows(train), &opts.alphas)?;
                            let pred = design.matrix.select_rows(test) * &beta;
                            (beta, alpha, r_squared(&y.select_rows(test), &pred))
                        }
                        _ => solver.fit(&y, &opts.alphas)?,
                    };
                    Ok(VertexResult {
                        vertex: v,
                        beta: beta.iter().take(n_pred).copied().collect(),
                        alpha,
                        r2,
                        r2_isc: ceiling,
                        r2_norm: normalize_r2(r2, ceiling, opts.epsilon),
                    })
                })
                .collect::<Result<_, EncodingError>>()?;
            Ok(EncodingResult {
                subject: bold.subject.clone(),
                predictor_names: design.names[..n_pred].to_vec(),
                vertices: fits,
            })
        })
        .collect()
}
