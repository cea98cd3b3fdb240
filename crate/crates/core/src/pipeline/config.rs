// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::composition::ScoreMode;
use crate::controls::DEFAULT_FLOOR_PROB;
use crate::encoding::{
    default_alphas, AlphaSelection, ConvolutionOptions, EncodingOptions, HrfParams, Method, R2Mode, DEFAULT_EPSILON,
};
use crate::stats::{PermutationOptions, Tail};

/// Which per-subject value feeds the group cluster test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterValue {
    #[default]
    Beta,
    R2Norm,
}

/// Everything a run needs. Mirrors the `--config` JSON; missing keys take
/// the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model_dir: Option<PathBuf>,
    /// One sentence per line.
    pub text: Option<PathBuf>,
    /// Calibration corpus for `calibrate-k`; falls back to `text`.
    pub corpus: Option<PathBuf>,
    pub trees: Option<PathBuf>,
    pub frequency: Option<PathBuf>,
    pub timing: Option<PathBuf>,
    pub bold_dir: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub out_dir: PathBuf,

    pub exact: bool,
    pub d_m_prime: usize,
    pub coverage: f64,
    pub floor_prob: f64,

    /// Expected TR; checked against the BOLD headers when set.
    pub tr: Option<f64>,
    pub alphas: Vec<f64>,
    pub alpha_selection: AlphaSelection,
    pub compscore_method: Method,
    pub control_method: Method,
    pub r2_mode: R2Mode,
    pub epsilon: f64,
    pub isc_leave_one_out: bool,
    pub oversample: usize,
    pub hrf: HrfParams,
    pub pca_k: usize,
    /// Regressor sets fit by `encode`: `compscore`, `controls`, `hidden_pca`.
    pub encode_sets: Vec<String>,

    pub cluster_set: String,
    pub cluster_value: ClusterValue,
    pub n_perms: usize,
    pub p_threshold: f64,
    pub min_extent: usize,
    pub link_conditions: bool,
    pub tail: Tail,

    pub report_top_n: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model_dir: None,
            text: None,
            corpus: None,
            trees: None,
            frequency: None,
            timing: None,
            bold_dir: None,
            mask: None,
            graph: None,
            out_dir: PathBuf::from("out"),
            exact: false,
            d_m_prime: 3000,
            coverage: 0.5,
            floor_prob: DEFAULT_FLOOR_PROB,
            tr: None,
            alphas: default_alphas(),
            alpha_selection: AlphaSelection::Gcv,
            compscore_method: Method::Ridge,
            control_method: Method::Ols,
            r2_mode: R2Mode::InSample,
            epsilon: DEFAULT_EPSILON,
            isc_leave_one_out: false,
            oversample: 20,
            hrf: HrfParams::default(),
            pca_k: 100,
            encode_sets: vec!["compscore".into(), "controls".into(), "hidden_pca".into()],
            cluster_set: "compscore".into(),
            cluster_value: ClusterValue::Beta,
            n_perms: 10_000,
            p_threshold: 0.05,
            min_extent: 20,
            link_conditions: true,
            tail: Tail::Greater,
            report_top_n: 5,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Reads a JSON config. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::input(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.model_dir,
            &mut self.text,
            &mut self.corpus,
            &mut self.trees,
            &mut self.frequency,
            &mut self.timing,
            &mut self.bold_dir,
            &mut self.mask,
            &mut self.graph,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
        join(&mut self.out_dir);
    }

    pub fn score_mode(&self) -> ScoreMode {
        if self.exact {
            ScoreMode::Exact
        } else {
            ScoreMode::Approx(self.d_m_prime)
        }
    }

    pub fn encoding_options(&self, method: Method) -> EncodingOptions {
        EncodingOptions {
            method,
            alphas: self.alphas.clone(),
            alpha_selection: self.alpha_selection,
            convolution: ConvolutionOptions { hrf: self.hrf, oversample: self.oversample, scan_start: 0.0 },
            epsilon: self.epsilon,
            isc_leave_one_out: self.isc_leave_one_out,
            r2_mode: self.r2_mode,
        }
    }

    pub fn permutation_options(&self, seed: u64) -> PermutationOptions {
        PermutationOptions {
            n_perms: self.n_perms,
            seed,
            p_threshold: self.p_threshold,
            tail: self.tail,
            min_extent: self.min_extent,
            link_conditions: self.link_conditions,
        }
    }

    /// Range checks on the numeric parameters.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |msg: String| Err(PipelineError::Validation(msg));
        if self.d_m_prime == 0 {
            return fail("d_m_prime must be at least 1".into());
        }
        if !(self.coverage > 0.0 && self.coverage < 1.0) {
            return fail(format!("coverage must lie in (0, 1), got {}", self.coverage));
        }
        if !(self.floor_prob > 0.0 && self.floor_prob < 1.0) {
            return fail(format!("floor_prob must lie in (0, 1), got {}", self.floor_prob));
        }
        if let Some(tr) = self.tr {
            if !(tr > 0.0 && tr.is_finite()) {
                return fail(format!("tr must be positive, got {tr}"));
            }
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return fail("alphas must be a non-empty list of finite non-negative values".into());
        }
        if !(self.epsilon > 0.0) {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.oversample == 0 || self.pca_k == 0 || self.n_perms == 0 || self.report_top_n == 0 {
            return fail("oversample, pca_k, n_perms and report_top_n must be at least 1".into());
        }
        if !(self.p_threshold > 0.0 && self.p_threshold < 1.0) {
            return fail(format!("p_threshold must lie in (0, 1), got {}", self.p_threshold));
        }
        if let AlphaSelection::KFold(k) = self.alpha_selection {
            if k < 2 {
                return fail(format!("k-fold alpha selection needs k >= 2, got {k}"));
            }
        }
        for s in &self.encode_sets {
            if !matches!(s.as_str(), "compscore" | "controls" | "hidden_pca") {
                return fail(format!("unknown encode set {s:?} (expected compscore, controls or hidden_pca)"));
            }
        }
        Ok(())
    }

    /// The path stored under `name`, which must be set and exist.
    pub fn require(&self, name: &str, path: &Option<PathBuf>) -> Result<PathBuf, PipelineError> {
        let p = path.as_ref().ok_or_else(|| PipelineError::Validation(format!("config is missing `{name}`")))?;
        if !p.exists() {
            return Err(PipelineError::Validation(format!("{name}: {} does not exist", p.display())));
        }
        Ok(p.clone())
    }
}

/// Derives an independent seed for one labelled use of the run seed.
pub fn sub_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, then one splitmix64 step
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = (seed ^ h).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_is_the_default() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"n_perm": 5}"#).is_err());
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"text": "sentences.txt", "out_dir": "/abs/out"}"#).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.text.unwrap(), dir.path().join("sentences.txt"));
        assert_eq!(cfg.out_dir, PathBuf::from("/abs/out"));
    }

    #[test]
    fn sub_seeds_differ_by_label() {
        assert_ne!(sub_seed(0, "permutation"), sub_seed(0, "model-init"));
        assert_ne!(sub_seed(0, "permutation"), sub_seed(1, "permutation"));
        assert_eq!(sub_seed(7, "x"), sub_seed(7, "x"));
    }

    #[test]
    fn out_of_range_values_fail_validation() {
        for cfg in [
            RunConfig { coverage: 1.0, ..Default::default() },
            RunConfig { d_m_prime: 0, ..Default::default() },
            RunConfig { alphas: vec![], ..Default::default() },
            RunConfig { tr: Some(0.0), ..Default::default() },
            RunConfig { encode_sets: vec!["nope".into()], ..Default::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(PipelineError::Validation(_))));
        }
    }
}
