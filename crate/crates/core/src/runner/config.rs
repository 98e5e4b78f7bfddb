use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunError;
use crate::corpus::{Language, SplitRatios};
use crate::seq2seq::{Architecture, ModelConfig, ModelOverrides};

/// Where the inflection data comes from: three split files, or one raw file
/// split on the fly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSpec {
    Split {
        train: PathBuf,
        dev: PathBuf,
        test: PathBuf,
    },
    Raw {
        raw: PathBuf,
        #[serde(default)]
        split: SplitSpec,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub ratios: SplitRatios,
    pub seed: u64,
    pub stratify_irregular: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            ratios: SplitRatios::default(),
            seed: 0,
            stratify_irregular: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    #[default]
    Greedy,
    Beam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
        }
    }
}

/// How wug productions are aggregated over the ensemble.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProductionMode {
    /// Each model contributes its beam-top form.
    #[default]
    Top,
    /// Each model contributes `samples` ancestral samples.
    Sample { samples: usize, seed: u64 },
}

fn default_architectures() -> Vec<Architecture> {
    Architecture::ALL.to_vec()
}

fn default_seeds() -> Vec<u64> {
    (1..=10).collect()
}

fn default_epochs() -> usize {
    50
}

fn default_beam() -> usize {
    12
}

fn default_batch() -> usize {
    32
}

fn default_test_decode() -> DecodeMode {
    DecodeMode::Beam
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// One experiment: a language, its data, the architectures and seeds to
/// train, and evaluation settings. Relative paths are resolved against the
/// directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub language: Language,
    pub data: DataSpec,
    #[serde(default)]
    pub wugs: Option<PathBuf>,
    #[serde(default = "default_architectures")]
    pub architectures: Vec<Architecture>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_beam")]
    pub beam_width: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub dev_decode: DecodeMode,
    #[serde(default = "default_test_decode")]
    pub test_decode: DecodeMode,
    /// Keep only this many examples: drawn from the raw file before
    /// splitting, or from the training file when splits are given.
    #[serde(default)]
    pub subset: Option<usize>,
    /// Overrides applied to every architecture.
    #[serde(default)]
    pub model: ModelOverrides,
    /// Overrides for single architectures, applied after `model`.
    #[serde(default)]
    pub model_overrides: BTreeMap<Architecture, ModelOverrides>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub production: ProductionMode,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Reads, validates and resolves a config file.
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.data {
            DataSpec::Split { train, dev, test } => {
                fix(train);
                fix(dev);
                fix(test);
            }
            DataSpec::Raw { raw, .. } => fix(raw),
        }
        if let Some(w) = &mut self.wugs {
            fix(w);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.beam_width == 0 || self.batch_size == 0 {
            return bad("beam_width and batch_size must be at least 1".into());
        }
        if self.seeds.is_empty() || self.architectures.is_empty() {
            return bad("need at least one seed and one architecture".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad(format!("seeds are not distinct: {:?}", self.seeds));
        }
        if let ProductionMode::Sample { samples: 0, .. } = self.production {
            return bad("sampling mode needs at least one sample".into());
        }
        let mut paths = match &self.data {
            DataSpec::Split { train, dev, test } => vec![train, dev, test],
            DataSpec::Raw { raw, split } => {
                split.ratios.validate().map_err(|e| RunError::Config(e.to_string()))?;
                vec![raw]
            }
        };
        paths.extend(self.wugs.as_ref());
        for p in paths {
            if !p.is_file() {
                return bad(format!("file not found: {}", p.display()));
            }
        }
        for arch in &self.architectures {
            self.model_config(*arch, 0).validate()?;
        }
        Ok(())
    }

    pub fn model_config(&self, arch: Architecture, seed: u64) -> ModelConfig {
        let mut c = ModelConfig::new(arch, seed);
        self.model.apply(&mut c);
        if let Some(o) = self.model_overrides.get(&arch) {
            o.apply(&mut c);
        }
        c
    }

    /// Canonical JSON rendering (field order fixed by the struct).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
