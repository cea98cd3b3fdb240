// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt::Display;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use compscore::encoding::{AlphaSelection, R2Mode};
use compscore::pipeline::{
    cmd_calibrate, cmd_cluster, cmd_controls, cmd_encode, cmd_report, cmd_score, PipelineError, RunConfig,
};
use serde::de::DeserializeOwned;

fn dflt(text: &str, value: impl Display) -> String {
    format!("{text} [default: {value}]")
}

fn defaults() -> RunConfig {
    RunConfig::default()
}

/// Parses a lower-case variant name of a config enum.
fn variant<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn alpha_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|a| a.trim().parse::<f64>().map_err(|e| format!("{a:?}: {e}"))).collect()
}

fn joined<T: Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

#[derive(Parser, Debug)]
#[command(name = "compscore", version, about = "Composition Scores, controls and fMRI encoding statistics")]
struct Cli {
    /// JSON file mirroring the run config; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, help = dflt("Seed for every random step", defaults().seed))]
    seed: Option<u64>,
    #[arg(long, global = true, help = dflt("Worker threads", "all cores"))]
    threads: Option<usize>,
    #[arg(long, global = true, help = dflt("Output directory", defaults().out_dir.display()))]
    out_dir: Option<PathBuf>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Composition Score for every word and layer -> scores.csv
    Score(ScoreArgs),
    /// Majority-k calibration over a corpus -> majority_k.json
    CalibrateK(CalibrateArgs),
    /// Word rate, log frequency and node counts -> controls.csv
    Controls(ControlsArgs),
    /// Per-vertex encoding models -> encode/<set>/<subject>/betas.csv, encode/summary.json
    Encode(EncodeArgs),
    /// Group cluster-mass permutation test -> clusters.json, null_dist.csv
    Cluster(ClusterArgs),
    /// Summary tables -> report.json, plotdata/*.csv
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Model directory (config.json, weights, vocab.txt).
    #[arg(long)]
    model_dir: Option<PathBuf>,
    /// Text file, one sentence per line.
    #[arg(long)]
    text: Option<PathBuf>,
    /// Use every neuron instead of the top d_m'.
    #[arg(long, conflicts_with = "approx")]
    exact: bool,
    #[arg(long, value_name = "D_M_PRIME", help = dflt("Approximate with the top-|m| neurons", defaults().d_m_prime))]
    approx: Option<usize>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long)]
    model_dir: Option<PathBuf>,
    /// Calibration corpus, one sequence per line [default: the text file].
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    text: Option<PathBuf>,
    #[arg(long, help = dflt("Fraction of total |activation| to cover", defaults().coverage))]
    coverage: Option<f64>,
}

#[derive(Args, Debug)]
struct ControlsArgs {
    /// Bracketed trees, one per line.
    #[arg(long)]
    trees: Option<PathBuf>,
    /// Unigram counts csv (word,count).
    #[arg(long)]
    frequency: Option<PathBuf>,
    /// Word timing csv.
    #[arg(long)]
    timing: Option<PathBuf>,
    #[arg(long, help = dflt("Probability given to uncounted words", defaults().floor_prob))]
    floor_prob: Option<f64>,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long)]
    bold_dir: Option<PathBuf>,
    /// Vertex indices to fit.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    timing: Option<PathBuf>,
    #[arg(long)]
    model_dir: Option<PathBuf>,
    #[arg(long)]
    text: Option<PathBuf>,
    #[arg(long, help = dflt("Expected TR in seconds, checked against the BOLD headers", "unchecked"))]
    tr: Option<f64>,
    #[arg(long, value_parser = alpha_list, help = dflt("Ridge penalty grid, comma separated", joined(&defaults().alphas)))]
    alphas: Option<Vec<f64>>,
    #[arg(long, help = dflt("Pick alpha by contiguous k-fold CV instead of GCV", "gcv"))]
    kfold: Option<usize>,
    #[arg(long, value_parser = variant::<compscore::encoding::Method>, help = dflt("ridge or ols for score and PCA sets", "ridge"))]
    compscore_method: Option<compscore::encoding::Method>,
    #[arg(long, value_parser = variant::<compscore::encoding::Method>, help = dflt("ridge or ols for control sets", "ols"))]
    control_method: Option<compscore::encoding::Method>,
    #[arg(long, help = dflt("Smallest usable noise ceiling", defaults().epsilon))]
    epsilon: Option<f64>,
    /// Noise ceiling from the mean of the other subjects.
    #[arg(long)]
    isc_leave_one_out: bool,
    /// Fit on the first half of the scans and score R² on the second.
    #[arg(long)]
    held_out: bool,
    #[arg(long, help = dflt("Principal components per layer for hidden_pca", defaults().pca_k))]
    pca_k: Option<usize>,
    #[arg(long, help = dflt("Fine-grid samples per second", defaults().oversample))]
    oversample: Option<usize>,
    #[arg(long, value_delimiter = ',', help = dflt("Regressor sets", defaults().encode_sets.join(",")))]
    sets: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, help = dflt("Encoded set to test; hidden_pca expands to its layers", defaults().cluster_set))]
    set: Option<String>,
    #[arg(long, value_parser = variant::<compscore::pipeline::ClusterValue>, help = dflt("beta or r2_norm", "beta"))]
    value: Option<compscore::pipeline::ClusterValue>,
    #[arg(long, help = dflt("Sign-flip permutations", defaults().n_perms))]
    n_perms: Option<usize>,
    #[arg(long, help = dflt("One-tailed p for the cluster-forming threshold", defaults().p_threshold))]
    p_threshold: Option<f64>,
    #[arg(long, help = dflt("Smallest cluster, in vertices", defaults().min_extent))]
    min_extent: Option<usize>,
    /// Do not join consecutive conditions at the same vertex.
    #[arg(long)]
    no_link_conditions: bool,
    #[arg(long, value_parser = variant::<compscore::stats::Tail>, help = dflt("greater, less or both", "greater"))]
    tail: Option<compscore::stats::Tail>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long, help = dflt("Prefixes listed per layer and extreme", defaults().report_top_n))]
    top_n: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: Option<PathBuf>) {
    if value.is_some() {
        *slot = value;
    }
}

fn build_config(cli: Cli) -> Result<(RunConfig, Command), PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.out_dir, cli.out_dir);
    match &cli.command {
        Command::Score(a) => {
            set_path(&mut cfg.model_dir, a.model_dir.clone());
            set_path(&mut cfg.text, a.text.clone());
            if a.exact {
                cfg.exact = true;
            }
            if let Some(d) = a.approx {
                cfg.exact = false;
                cfg.d_m_prime = d;
            }
        }
        Command::CalibrateK(a) => {
            set_path(&mut cfg.model_dir, a.model_dir.clone());
            set_path(&mut cfg.corpus, a.corpus.clone());
            set_path(&mut cfg.text, a.text.clone());
            set(&mut cfg.coverage, a.coverage);
        }
        Command::Controls(a) => {
            set_path(&mut cfg.trees, a.trees.clone());
            set_path(&mut cfg.frequency, a.frequency.clone());
            set_path(&mut cfg.timing, a.timing.clone());
            set(&mut cfg.floor_prob, a.floor_prob);
        }
        Command::Encode(a) => {
            set_path(&mut cfg.bold_dir, a.bold_dir.clone());
            set_path(&mut cfg.mask, a.mask.clone());
            set_path(&mut cfg.timing, a.timing.clone());
            set_path(&mut cfg.model_dir, a.model_dir.clone());
            set_path(&mut cfg.text, a.text.clone());
            if a.tr.is_some() {
                cfg.tr = a.tr;
            }
            set(&mut cfg.alphas, a.alphas.clone());
            if let Some(k) = a.kfold {
                cfg.alpha_selection = AlphaSelection::KFold(k);
            }
            set(&mut cfg.compscore_method, a.compscore_method);
            set(&mut cfg.control_method, a.control_method);
            set(&mut cfg.epsilon, a.epsilon);
            cfg.isc_leave_one_out |= a.isc_leave_one_out;
            if a.held_out {
                cfg.r2_mode = R2Mode::HeldOut;
            }
            set(&mut cfg.pca_k, a.pca_k);
            set(&mut cfg.oversample, a.oversample);
            set(&mut cfg.encode_sets, a.sets.clone());
        }
        Command::Cluster(a) => {
            set_path(&mut cfg.graph, a.graph.clone());
            set(&mut cfg.cluster_set, a.set.clone());
            set(&mut cfg.cluster_value, a.value);
            set(&mut cfg.n_perms, a.n_perms);
            set(&mut cfg.p_threshold, a.p_threshold);
            set(&mut cfg.min_extent, a.min_extent);
            if a.no_link_conditions {
                cfg.link_conditions = false;
            }
            set(&mut cfg.tail, a.tail);
        }
        Command::Report(a) => set(&mut cfg.report_top_n, a.top_n),
    }
    Ok((cfg, cli.command))
}

fn run(cfg: &RunConfig, command: &Command) -> Result<String, PipelineError> {
    let out = cfg.out_dir.display();
    Ok(match command {
        Command::Score(_) => {
            let t = cmd_score(cfg)?;
            format!("wrote {out}/scores.csv ({} rows, {} sentences skipped)", t.rows.len(), t.skipped.len())
        }
        Command::CalibrateK(_) => {
            let r = cmd_calibrate(cfg)?;
            format!("wrote {out}/majority_k.json (overall mean k {:.2})", r.overall_mean_k)
        }
        Command::Controls(_) => {
            let t = cmd_controls(cfg)?;
            format!("wrote {out}/controls.csv ({} words)", t.rows.len())
        }
        Command::Encode(_) => {
            let s = cmd_encode(cfg)?;
            format!("wrote {out}/encode ({} regressor sets)", s.sets.len())
        }
        Command::Cluster(_) => {
            let r = cmd_cluster(cfg)?;
            let sig = r.clusters.iter().filter(|c| c.p_value.is_some_and(|p| p < 0.05)).count();
            format!("wrote {out}/clusters.json ({} clusters, {sig} with p < 0.05)", r.clusters.len())
        }
        Command::Report(_) => {
            let r = cmd_report(cfg)?;
            format!("wrote {out}/report.json (overall mean score {:.4})", r.overall_mean)
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = build_config(cli).and_then(|(cfg, command)| run(&cfg, &command));
    match result {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
