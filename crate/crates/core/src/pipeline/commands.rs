// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::{sub_seed, ClusterValue, RunConfig};
use super::PipelineError;
use crate::composition::{
    calibrate_majority_k_sequences, score_text, word_end_positions, MajorityKReport, ScoreTable,
};
use crate::controls::{build_control_table, parse_bracketed, read_timing_csv, ControlTable, FrequencyTable, TimingRow};
use crate::encoding::{
    check_subjects, events_from_controls, events_from_keyed, events_from_scores, pca_reduce, read_mask,
    read_subjects, run_encoding, EncodingResult, EventSeries, Method, R2Mode,
};
use crate::model::{load_model, word_ranges, ModelBundle};
use crate::stats::{permutation_test, AdjacencyGraph, ClusterResult, GroupMap};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, PipelineError> {
    fs::read(path).map_err(|e| PipelineError::input(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| PipelineError::output(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| PipelineError::output(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Internal(e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn internal(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Internal(e.to_string())
}

/// An artifact written by an earlier command; missing ones name the file
/// and the command that produces it.
pub(crate) fn upstream(cfg: &RunConfig, rel: &str, producer: &str) -> Result<PathBuf, PipelineError> {
    let path = cfg.out_dir.join(rel);
    if !path.exists() {
        return Err(PipelineError::Validation(format!(
            "missing {}; run `compscore {producer}` first",
            path.display()
        )));
    }
    Ok(path)
}

/// Non-blank lines, trimmed.
pub fn read_sentences(path: &Path) -> Result<Vec<String>, PipelineError> {
    let text = String::from_utf8(read_bytes(path)?)
        .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

fn load(cfg: &RunConfig) -> Result<ModelBundle, PipelineError> {
    Ok(load_model(&cfg.require("model_dir", &cfg.model_dir)?)?)
}

fn read_timing(cfg: &RunConfig) -> Result<Vec<TimingRow>, PipelineError> {
    Ok(read_timing_csv(read_bytes(&cfg.require("timing", &cfg.timing)?)?.as_slice())?)
}

pub(crate) fn read_scores(cfg: &RunConfig) -> Result<ScoreTable, PipelineError> {
    let path = upstream(cfg, "scores.csv", "score")?;
    ScoreTable::read_csv(read_bytes(&path)?.as_slice())
        .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
}

pub(crate) fn read_controls(cfg: &RunConfig) -> Result<ControlTable, PipelineError> {
    let path = upstream(cfg, "controls.csv", "controls")?;
    ControlTable::read_csv(read_bytes(&path)?.as_slice())
        .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
}

/// Scores every word of `text` and writes `scores.csv`.
pub fn cmd_score(cfg: &RunConfig) -> Result<ScoreTable, PipelineError> {
    cfg.validate()?;
    let model = load(cfg)?;
    let text = cfg.require("text", &cfg.text)?;
    let sentences = read_sentences(&text)?;
    if sentences.is_empty() {
        return Err(PipelineError::Validation(format!("{} contains no sentences", text.display())));
    }
    let table = score_text(&model, &sentences, cfg.score_mode())?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf).map_err(internal)?;
    write_bytes(&cfg.out_dir.join("scores.csv"), &buf)?;
    log::info!("scored {} rows, skipped {} sentences", table.rows.len(), table.skipped.len());
    Ok(table)
}

/// Majority-k over the calibration corpus; writes `majority_k.json`.
pub fn cmd_calibrate(cfg: &RunConfig) -> Result<MajorityKReport, PipelineError> {
    cfg.validate()?;
    let model = load(cfg)?;
    let path = match cfg.corpus {
        Some(_) => cfg.require("corpus", &cfg.corpus)?,
        None => cfg.require("text", &cfg.text)?,
    };
    let max = model.config.max_seq_len;
    let sequences: Vec<Vec<u32>> = read_sentences(&path)?
        .iter()
        .flat_map(|line| model.encode(line).chunks(max).map(<[u32]>::to_vec).collect::<Vec<_>>())
        .collect();
    if sequences.is_empty() {
        return Err(PipelineError::Validation(format!("calibration corpus {} is empty", path.display())));
    }
    let report = calibrate_majority_k_sequences(&model, &sequences, cfg.coverage)?;
    write_json(&cfg.out_dir.join("majority_k.json"), &report)?;
    Ok(report)
}

/// Joins trees, frequencies and timing; writes `controls.csv`.
pub fn cmd_controls(cfg: &RunConfig) -> Result<ControlTable, PipelineError> {
    cfg.validate()?;
    let trees_path = cfg.require("trees", &cfg.trees)?;
    let trees_text = String::from_utf8(read_bytes(&trees_path)?)
        .map_err(|e| PipelineError::Validation(format!("{}: {e}", trees_path.display())))?;
    let trees = parse_bracketed(&trees_text)?;
    let freq = FrequencyTable::read_csv(read_bytes(&cfg.require("frequency", &cfg.frequency)?)?.as_slice(), cfg.floor_prob)?;
    let table = build_control_table(&trees, &freq, &read_timing(cfg)?)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf).map_err(internal)?;
    write_bytes(&cfg.out_dir.join("controls.csv"), &buf)?;
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub set: String,
    pub method: Method,
    pub predictors: Vec<String>,
    pub n_subjects: usize,
    /// Vertices whose noise ceiling passed the epsilon guard.
    pub n_valid_vertices: usize,
    /// Over valid vertices, of the subject-mean normalized R².
    pub max: Option<f64>,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeSummary {
    pub r2_mode: R2Mode,
    pub isc_leave_one_out: bool,
    pub sets: Vec<SetSummary>,
}

fn summarize(set: &str, method: Method, results: &[EncodingResult]) -> SetSummary {
    let n_vertices = results.first().map_or(0, |r| r.vertices.len());
    let means: Vec<f64> = (0..n_vertices)
        .filter_map(|i| {
            let vals: Option<Vec<f64>> = results.iter().map(|r| r.vertices[i].r2_norm).collect();
            vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    SetSummary {
        set: set.to_string(),
        method,
        predictors: results.first().map(|r| r.predictor_names.clone()).unwrap_or_default(),
        n_subjects: results.len(),
        n_valid_vertices: means.len(),
        max: means.iter().copied().max_by(f64::total_cmp),
        mean: (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64),
    }
}

/// Principal components of each layer's residual stream at word ends, as
/// one event series per layer.
fn hidden_pca_events(cfg: &RunConfig, timing: &[TimingRow]) -> Result<Vec<EventSeries>, PipelineError> {
    let model = load(cfg)?;
    let sentences = read_sentences(&cfg.require("text", &cfg.text)?)?;
    let (n_layers, d) = (model.config.n_layers, model.config.d_model);
    let mut keys = Vec::new();
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); n_layers];
    for (sid, s) in sentences.iter().enumerate() {
        let words = word_ranges(s);
        if words.is_empty() {
            continue;
        }
        let spans = model.tokenizer.tokenize(s);
        let ids: Vec<u32> = spans.iter().map(|t| t.token_id).collect();
        let trace = model.forward_with_trace(&ids)?;
        for (w, pos) in word_end_positions(&spans, &words).into_iter().enumerate() {
            keys.push((sid, w));
            for (l, r) in rows.iter_mut().enumerate() {
                r.extend(trace.hidden_state(l, pos).iter().map(|&x| x as f64));
            }
        }
    }
    let n = keys.len();
    if n < 2 {
        return Err(PipelineError::Validation("hidden_pca needs at least 2 words".into()));
    }
    let k = cfg.pca_k.min(n - 1).min(d);
    if k < cfg.pca_k {
        log::warn!("pca_k {} capped at {k} ({n} words, d_model {d})", cfg.pca_k);
    }
    let names: Vec<String> = (0..k).map(|i| format!("pc_{i}")).collect();
    rows.into_iter()
        .map(|r| {
            let (scores, _) = pca_reduce(&DMatrix::from_row_slice(n, d, &r), k)?;
            let values: BTreeMap<(usize, usize), Vec<f64>> =
                keys.iter().enumerate().map(|(i, key)| (*key, scores.row(i).iter().copied().collect())).collect();
            Ok(events_from_keyed(names.clone(), &values, timing)?)
        })
        .collect()
}

/// Fits each regressor set for every subject; writes
/// `encode/<set>/<subject>/betas.csv` and `encode/summary.json`.
pub fn cmd_encode(cfg: &RunConfig) -> Result<EncodeSummary, PipelineError> {
    cfg.validate()?;
    let bolds = read_subjects(&cfg.require("bold_dir", &cfg.bold_dir)?)?;
    let (tr, _, _) = check_subjects(&bolds)?;
    if let Some(expected) = cfg.tr {
        if (expected - tr).abs() > 1e-9 {
            return Err(PipelineError::Validation(format!("config tr {expected} s does not match BOLD TR {tr} s")));
        }
    }
    let mask = read_mask(&cfg.require("mask", &cfg.mask)?)?;
    let timing = read_timing(cfg)?;

    let mut jobs: Vec<(String, Method, EventSeries)> = Vec::new();
    for set in &cfg.encode_sets {
        match set.as_str() {
            "compscore" => {
                let events = events_from_scores(&read_scores(cfg)?, &timing)?;
                jobs.push((set.clone(), cfg.compscore_method, events));
            }
            "controls" => {
                let table = read_controls(cfg)?;
                for p in ControlTable::PREDICTORS {
                    jobs.push((p.to_string(), cfg.control_method, events_from_controls(&table, &[p])?));
                }
            }
            "hidden_pca" => {
                for (l, events) in hidden_pca_events(cfg, &timing)?.into_iter().enumerate() {
                    jobs.push((format!("hidden_pca_layer_{l}"), cfg.compscore_method, events));
                }
            }
            other => return Err(PipelineError::Validation(format!("unknown encode set {other:?}"))),
        }
    }

    let mut sets = Vec::new();
    for (name, method, events) in jobs {
        let results = run_encoding(&events, &bolds, &mask, &cfg.encoding_options(method))?;
        for r in &results {
            let mut buf = Vec::new();
            r.write_betas_csv(&mut buf).map_err(internal)?;
            write_bytes(&cfg.out_dir.join("encode").join(&name).join(&r.subject).join("betas.csv"), &buf)?;
        }
        let s = summarize(&name, method, &results);
        log::info!("{name}: {} valid vertices, max {:?}, mean {:?}", s.n_valid_vertices, s.max, s.mean);
        sets.push(s);
    }
    let summary = EncodeSummary { r2_mode: cfg.r2_mode, isc_leave_one_out: cfg.isc_leave_one_out, sets };
    write_json(&cfg.out_dir.join("encode").join("summary.json"), &summary)?;
    Ok(summary)
}

/// `name` itself, or its per-layer expansion `name_layer_<l>` in layer order.
fn resolve_sets(encode_dir: &Path, name: &str) -> Result<Vec<String>, PipelineError> {
    if encode_dir.join(name).is_dir() {
        return Ok(vec![name.to_string()]);
    }
    let prefix = format!("{name}_layer_");
    let mut layered: Vec<(usize, String)> = fs::read_dir(encode_dir)
        .map(|entries| {
            entries
                .filter_map(|e| e.ok()?.file_name().into_string().ok())
                .filter_map(|n| Some((n.strip_prefix(&prefix)?.parse().ok()?, n.clone())))
                .collect()
        })
        .unwrap_or_default();
    if layered.is_empty() {
        return Err(PipelineError::Validation(format!(
            "missing {}; run `compscore encode` with this set first",
            encode_dir.join(name).display()
        )));
    }
    layered.sort();
    Ok(layered.into_iter().map(|(_, n)| n).collect())
}

fn subdirs(dir: &Path) -> Result<Vec<String>, PipelineError> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| PipelineError::input(dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    names.sort();
    Ok(names)
}

#[derive(Serialize)]
struct ClusterReport<'a> {
    set: &'a str,
    encode_sets: &'a [String],
    value: ClusterValue,
    subjects: &'a [String],
    #[serde(flatten)]
    result: &'a ClusterResult,
}

/// Group cluster-mass permutation test on one encoded set; writes
/// `clusters.json` and `null_dist.csv`.
pub fn cmd_cluster(cfg: &RunConfig) -> Result<ClusterResult, PipelineError> {
    cfg.validate()?;
    let graph_path = cfg.require("graph", &cfg.graph)?;
    let graph = AdjacencyGraph::read(read_bytes(&graph_path)?.as_slice())?;
    let encode_dir = upstream(cfg, "encode", "encode")?;
    let sets = resolve_sets(&encode_dir, &cfg.cluster_set)?;
    let subjects = subdirs(&encode_dir.join(&sets[0]))?;

    // per set: per subject results
    let mut per_set: Vec<Vec<EncodingResult>> = Vec::new();
    for set in &sets {
        if subdirs(&encode_dir.join(set))? != subjects {
            return Err(PipelineError::Validation(format!("encode/{set} has a different subject list")));
        }
        let results = subjects
            .iter()
            .map(|s| {
                let path = encode_dir.join(set).join(s).join("betas.csv");
                EncodingResult::read_betas_csv(s.clone(), read_bytes(&path)?.as_slice())
                    .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        per_set.push(results);
    }

    let multi = sets.len() > 1;
    let mut conditions: Vec<String> = Vec::new();
    for (set, results) in sets.iter().zip(&per_set) {
        match cfg.cluster_value {
            ClusterValue::Beta => conditions.extend(
                results[0].predictor_names.iter().map(|p| if multi { format!("{set}:{p}") } else { p.clone() }),
            ),
            ClusterValue::R2Norm => conditions.push(set.clone()),
        }
    }
    let (n_sub, n_vert, n_cond) = (subjects.len(), graph.n_vertices(), conditions.len());
    let mut data = vec![0.0; n_sub * n_vert * n_cond];
    let mut offset = 0;
    for results in &per_set {
        let width = match cfg.cluster_value {
            ClusterValue::Beta => results[0].predictor_names.len(),
            ClusterValue::R2Norm => 1,
        };
        for (s, r) in results.iter().enumerate() {
            for v in &r.vertices {
                if v.vertex >= n_vert {
                    return Err(PipelineError::Validation(format!(
                        "vertex {} of {} is outside the {n_vert}-vertex graph",
                        v.vertex, r.subject
                    )));
                }
                let base = (s * n_vert + v.vertex) * n_cond + offset;
                match cfg.cluster_value {
                    ClusterValue::Beta => data[base..base + width].copy_from_slice(&v.beta),
                    // vertices failing the ceiling guard carry no evidence
                    ClusterValue::R2Norm => data[base] = v.r2_norm.unwrap_or(0.0),
                }
            }
        }
        offset += width;
    }
    let map = GroupMap::new(n_sub, n_vert, conditions, data)?;
    let result = permutation_test(&map, &graph, &cfg.permutation_options(sub_seed(cfg.seed, "permutation")))?;

    let report = ClusterReport {
        set: &cfg.cluster_set,
        encode_sets: &sets,
        value: cfg.cluster_value,
        subjects: &subjects,
        result: &result,
    };
    write_json(&cfg.out_dir.join("clusters.json"), &report)?;
    let mut buf = Vec::new();
    result.write_null_csv(&mut buf).map_err(internal)?;
    write_bytes(&cfg.out_dir.join("null_dist.csv"), &buf)?;
    log::info!("{} clusters, min p {:?}", result.clusters.len(), result.min_p());
    Ok(result)
}
