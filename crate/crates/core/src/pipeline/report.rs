// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::commands::{read_bytes, read_controls, read_scores, write_bytes, write_json};
use super::{EncodeSummary, PipelineError, RunConfig};
use crate::composition::{extreme_prefixes, layer_series, layerwise_correlation, pearson, ScoreTable};
use crate::controls::ControlTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPrefixes {
    pub layer: usize,
    pub low: Vec<(String, f64)>,
    pub high: Vec<(String, f64)>,
}

/// R² of a one-predictor regression of a layer's scores on a control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlFit {
    pub layer: usize,
    pub control: String,
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub n_layers: usize,
    pub n_words: usize,
    pub layer_means: Vec<f64>,
    pub overall_mean: f64,
    /// Population sd of the layer means over their mean.
    pub layer_mean_cv: f64,
    /// `None` where a layer has zero variance.
    pub layer_correlation: Vec<Vec<Option<f64>>>,
    pub max_abs_between_layer_r: Option<f64>,
    pub extreme_prefixes: Vec<LayerPrefixes>,
    /// Present when `controls.csv` exists.
    pub score_vs_controls: Option<Vec<ControlFit>>,
    /// Copied from `encode/summary.json` when it exists.
    pub encode: Option<EncodeSummary>,
}

const FIT_CONTROLS: [&str; 4] = ["log_freq", "nc_topdown", "nc_bottomup", "nc_leftcorner"];

fn control_fits(scores: &ScoreTable, controls: &ControlTable) -> Vec<ControlFit> {
    let by_key: BTreeMap<(usize, usize), [f64; 5]> = controls
        .rows
        .iter()
        .map(|r| ((r.sentence_id, r.word_index), ControlTable::predictor_values(r)))
        .collect();
    let mut fits = Vec::new();
    for layer in 0..scores.n_layers {
        let pairs: Vec<(f64, [f64; 5])> =
            scores.layer_rows(layer).filter_map(|r| Some((r.score, *by_key.get(&(r.sentence_id, r.word_index))?))).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        for name in FIT_CONTROLS {
            let idx = ControlTable::PREDICTORS.iter().position(|p| *p == name).expect("known predictor");
            let x: Vec<f64> = pairs.iter().map(|p| p.1[idx]).collect();
            let r2 = (pairs.len() >= 2).then(|| pearson(&x, &y)).flatten().map(|r| r * r);
            fits.push(ControlFit { layer, control: name.to_string(), r2 });
        }
    }
    fits
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Summarizes the upstream artifacts into `report.json` and plot-ready
/// CSVs under `plotdata/`.
pub fn cmd_report(cfg: &RunConfig) -> Result<Report, PipelineError> {
    cfg.validate()?;
    let scores = read_scores(cfg)?;
    let n_layers = scores.n_layers;
    let series = layer_series(&scores);
    let n_words = series.first().map_or(0, Vec::len);
    let layer_means = scores.layer_means();
    let overall_mean = layer_means.iter().sum::<f64>() / n_layers as f64;
    let var = layer_means.iter().map(|m| (m - overall_mean).powi(2)).sum::<f64>() / n_layers as f64;
    let corr = layerwise_correlation(&scores)?;
    let layer_correlation: Vec<Vec<Option<f64>>> =
        (0..n_layers).map(|i| (0..n_layers).map(|j| corr.get(i, j)).collect()).collect();
    let max_abs_between_layer_r = (0..n_layers)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .filter_map(|(i, j)| corr.get(i, j))
        .map(f64::abs)
        .max_by(f64::total_cmp);
    let extreme = (0..n_layers)
        .map(|layer| {
            let e = extreme_prefixes(&scores, layer, cfg.report_top_n)?;
            Ok(LayerPrefixes { layer, low: e.low, high: e.high })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;

    let score_vs_controls = if cfg.out_dir.join("controls.csv").exists() {
        Some(control_fits(&scores, &read_controls(cfg)?))
    } else {
        log::warn!("no controls.csv in {}; skipping score-vs-control fits", cfg.out_dir.display());
        None
    };
    let summary_path = cfg.out_dir.join("encode").join("summary.json");
    let encode = if summary_path.exists() {
        Some(
            serde_json::from_slice(&read_bytes(&summary_path)?)
                .map_err(|e| PipelineError::Validation(format!("{}: {e}", summary_path.display())))?,
        )
    } else {
        None
    };

    let report = Report {
        n_layers,
        n_words,
        layer_mean_cv: var.sqrt() / overall_mean,
        layer_means,
        overall_mean,
        layer_correlation,
        max_abs_between_layer_r,
        extreme_prefixes: extreme,
        score_vs_controls,
        encode,
    };

    let plot = cfg.out_dir.join("plotdata");
    let mut csv = String::from("layer,mean_score\n");
    for (l, m) in report.layer_means.iter().enumerate() {
        writeln!(csv, "{l},{m}").expect("string write");
    }
    write_bytes(&plot.join("layer_mean_scores.csv"), csv.as_bytes())?;
    let mut csv = String::from("layer_i,layer_j,r\n");
    for (i, row) in report.layer_correlation.iter().enumerate() {
        for (j, r) in row.iter().enumerate() {
            writeln!(csv, "{i},{j},{}", fmt_opt(*r)).expect("string write");
        }
    }
    write_bytes(&plot.join("layer_correlation.csv"), csv.as_bytes())?;
    if let Some(fits) = &report.score_vs_controls {
        let mut csv = String::from("layer,control,r2\n");
        for f in fits {
            writeln!(csv, "{},{},{}", f.layer, f.control, fmt_opt(f.r2)).expect("string write");
        }
        write_bytes(&plot.join("score_vs_controls_r2.csv"), csv.as_bytes())?;
    }
    write_json(&cfg.out_dir.join("report.json"), &report)?;
    Ok(report)
}
