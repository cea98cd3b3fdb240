// SPDX-License-Identifier: MIT OR Apache-2.0

//! A small self-consistent dataset for trying the pipeline end to end: a
//! random-init model, template sentences with their trees, word timings,
//! unigram counts, a grid-graph cortex and BOLD data with a planted
//! word-rate and frequency response inside one patch.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::controls::{build_control_table, parse_bracketed, write_timing_csv, FrequencyTable, TimingRow};
use crate::encoding::{design_for_scans, events_from_controls, BoldMatrix, ConvolutionOptions};
use crate::model::{init_random_model_with_tokenizer, save_model, ModelConfig, TokenizerVocab};
use crate::pipeline::{sub_seed, PipelineError, RunConfig};
use crate::stats::grid_graph;

const DETERMINERS: [&str; 3] = ["the", "a", "every"];
const ADJECTIVES: [&str; 5] = ["old", "quiet", "bright", "small", "curious"];
const NOUNS: [&str; 8] = ["dog", "teacher", "river", "garden", "child", "letter", "window", "lantern"];
const VERBS: [&str; 6] = ["saw", "found", "carried", "painted", "followed", "opened"];
const PREPOSITIONS: [&str; 3] = ["near", "behind", "under"];
/// Left out of `frequency.csv` so the probability floor is exercised.
const UNCOUNTED: &str = "lantern";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub n_sentences: usize,
    pub n_subjects: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub tr: f64,
    pub model: ModelConfig,
    /// Amplitude of the planted response, in units of the noise sd.
    pub effect: f64,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            n_sentences: 60,
            n_subjects: 5,
            grid_rows: 10,
            grid_cols: 10,
            tr: 2.0,
            model: ModelConfig::toy(512, 64, 4, 256),
            effect: 0.6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub root: PathBuf,
    /// `config.json`, with paths relative to `root`.
    pub config_path: PathBuf,
    /// The config as loaded back, paths resolved.
    pub config: RunConfig,
    /// Vertices carrying the planted response.
    pub patch: Vec<usize>,
    pub n_words: usize,
    pub n_trs: usize,
}

fn noun_phrase(rng: &mut ChaCha8Rng) -> (String, Vec<&'static str>) {
    let mut words = vec![*DETERMINERS.choose(rng).expect("non-empty")];
    if rng.random_bool(0.5) {
        words.push(ADJECTIVES.choose(rng).expect("non-empty"));
    }
    words.push(NOUNS.choose(rng).expect("non-empty"));
    (format!("(NP {})", words.join(" ")), words)
}

/// `(sentence, bracketed tree)` from `S -> NP VP`, `VP -> V NP [PP]`.
fn sentence(rng: &mut ChaCha8Rng) -> (String, String) {
    let (subj, mut words) = noun_phrase(rng);
    let verb = *VERBS.choose(rng).expect("non-empty");
    let (obj, obj_words) = noun_phrase(rng);
    words.push(verb);
    words.extend(obj_words);
    let mut vp = format!("(VP {verb} {obj}");
    if rng.random_bool(0.4) {
        let prep = *PREPOSITIONS.choose(rng).expect("non-empty");
        let (np, np_words) = noun_phrase(rng);
        words.push(prep);
        words.extend(np_words);
        write!(vp, " (PP {prep} {np})").expect("string write");
    }
    vp.push(')');
    (words.join(" "), format!("(S {subj} {vp})"))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| PipelineError::Output { path: parent.to_path_buf(), source: e })?;
    }
    fs::write(path, bytes).map_err(|e| PipelineError::Output { path: path.to_path_buf(), source: e })
}

/// Writes the dataset under `dir` and returns its description.
pub fn write_dataset(dir: &Path, opts: &SynthOptions) -> Result<SynthDataset, PipelineError> {
    if opts.n_sentences == 0 || opts.n_subjects < 2 || opts.grid_rows < 6 || opts.grid_cols < 8 {
        return Err(PipelineError::Validation(
            "synthetic data needs sentences, 2+ subjects and at least a 6 x 8 grid".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(opts.seed, "text"));
    let (sentences, trees): (Vec<String>, Vec<String>) = (0..opts.n_sentences).map(|_| sentence(&mut rng)).unzip();
    let text = sentences.join("\n") + "\n";
    write(&dir.join("sentences.txt"), text.as_bytes())?;
    write(&dir.join("trees.txt"), (trees.join("\n") + "\n").as_bytes())?;

    let tokenizer = TokenizerVocab::from_corpus(&text, 64)?;
    let model = init_random_model_with_tokenizer(opts.model.clone(), tokenizer, sub_seed(opts.seed, "model-init"))?;
    save_model(&model, &dir.join("model"))?;

    // Zipf-like counts in order of first appearance
    let mut vocab: Vec<&str> = Vec::new();
    for w in text.split_whitespace() {
        if !vocab.contains(&w) {
            vocab.push(w);
        }
    }
    let mut freq_csv = String::from("word,count\n");
    for (rank, w) in vocab.iter().enumerate().filter(|(_, w)| **w != UNCOUNTED) {
        writeln!(freq_csv, "{w},{}", (100_000 / (rank + 1)).max(1)).expect("string write");
    }
    write(&dir.join("frequency.csv"), freq_csv.as_bytes())?;

    let mut timing = Vec::new();
    let mut t = 4.0;
    for (sid, s) in sentences.iter().enumerate() {
        for (w, word) in s.split_whitespace().enumerate() {
            let dur = rng.random_range(0.2..0.45);
            timing.push(TimingRow { sentence_id: sid, word_index: w, word: word.to_string(), onset_s: t, offset_s: t + dur });
            t += dur;
        }
        t += 0.6;
    }
    let mut buf = Vec::new();
    write_timing_csv(&timing, &mut buf)?;
    write(&dir.join("timing.csv"), &buf)?;

    // planted response: word rate plus half the log frequency
    let parsed = parse_bracketed(&trees.join("\n"))?;
    let freq = FrequencyTable::read_csv(freq_csv.as_bytes(), crate::controls::DEFAULT_FLOOR_PROB)?;
    let controls = build_control_table(&parsed, &freq, &timing)?;
    let events = events_from_controls(&controls, &["wordrate", "log_freq"])?;
    let n_trs = ((t + 20.0) / opts.tr).ceil() as usize;
    let design = design_for_scans(&events, opts.tr, n_trs, &ConvolutionOptions::default())?;
    let signal = design.matrix.column(0) + design.matrix.column(1) * 0.5;

    let (rows, cols) = (opts.grid_rows, opts.grid_cols);
    let n_vertices = rows * cols;
    let patch: Vec<usize> = (0..n_vertices).filter(|v| (1..6).contains(&(v / cols)) && (1..7).contains(&(v % cols))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(opts.seed, "bold"));
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let bold_dir = dir.join("bold");
    fs::create_dir_all(&bold_dir).map_err(|e| PipelineError::Output { path: bold_dir.clone(), source: e })?;
    for s in 0..opts.n_subjects {
        let gain = opts.effect * (1.0 + 0.2 * noise.sample(&mut rng));
        let mut data = DMatrix::from_fn(n_trs, n_vertices, |_, _| noise.sample(&mut rng));
        for &v in &patch {
            let mut col = data.column_mut(v);
            col.axpy(gain, &signal, 1.0);
        }
        BoldMatrix::new(format!("sub-{:02}", s + 1), opts.tr, data)?.write(&bold_dir)?;
    }
    let mask: String = (0..n_vertices).map(|v| format!("{v}\n")).collect();
    write(&dir.join("mask.txt"), mask.as_bytes())?;
    let mut buf = Vec::new();
    grid_graph(rows, cols).write(&mut buf).map_err(|e| PipelineError::Internal(e.to_string()))?;
    write(&dir.join("graph.txt"), &buf)?;

    let config = RunConfig {
        model_dir: Some("model".into()),
        text: Some("sentences.txt".into()),
        trees: Some("trees.txt".into()),
        frequency: Some("frequency.csv".into()),
        timing: Some("timing.csv".into()),
        bold_dir: Some("bold".into()),
        mask: Some("mask.txt".into()),
        graph: Some("graph.txt".into()),
        out_dir: "out".into(),
        tr: Some(opts.tr),
        pca_k: 10,
        cluster_set: "wordrate".into(),
        n_perms: 500,
        min_extent: 5,
        seed: opts.seed,
        ..RunConfig::default()
    };
    let config_path = dir.join("config.json");
    let json = serde_json::to_string_pretty(&config).map_err(|e| PipelineError::Internal(e.to_string()))?;
    write(&config_path, (json + "\n").as_bytes())?;
    let config = RunConfig::load(&config_path)?;
    Ok(SynthDataset { root: dir.to_path_buf(), config_path, config, patch, n_words: timing.len(), n_trs })
}
