//! Experiment configuration: a single JSON file drives every command.
//!
//! The config file is the sole source of truth; there are no environment
//! variable overrides. The view count is carried by the dataset source
//! (synthetic spec or manifest) rather than duplicated here.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::SynthSpec;
use crate::error::{Error, Result};
use crate::model::{BankChoice, ModelSpec};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// Generate in memory from a synthetic spec.
    Synthetic(SynthSpec),
    /// Load from a dataset manifest path.
    Manifest(PathBuf),
}

fn default_d() -> usize {
    128
}
fn default_k() -> usize {
    4
}
fn default_rank() -> usize {
    2
}
fn default_layers() -> usize {
    3
}
fn default_heads() -> usize {
    4
}
fn default_alpha() -> f64 {
    1.0
}
fn default_lambda() -> f64 {
    0.001
}
fn default_lr() -> f64 {
    0.02
}
fn default_batch() -> usize {
    128
}
fn default_epochs() -> usize {
    50
}
fn default_patience() -> usize {
    10
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_bank() -> BankChoice {
    BankChoice::TensorTrain
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Prompt length; the transformer width is d / 2.
    #[serde(default = "default_d")]
    pub d: usize,
    /// Bank coefficient dimension.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Uniform tensor-train rank; `ranks` overrides it when present.
    #[serde(default = "default_rank")]
    pub rank: usize,
    /// Explicit rank chain r_0..r_n (r_0 = 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranks: Option<Vec<usize>>,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_heads")]
    pub heads: usize,
    /// Contrastive margin.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Contrastive loss weight.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Number of incremental sessions T.
    pub sessions: usize,
    /// Classes in the first session; later sessions split the rest evenly.
    pub c_base: usize,
    /// Fraction of instances missing per view, in [0, 1).
    #[serde(default, alias = "p")]
    pub missing_rate: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Max epochs per session.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Early-stop patience on validation mAP, in epochs.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_bank")]
    pub bank: BankChoice,
    /// Keeps the shared prompt bank trainable after the first session.
    #[serde(default)]
    pub train_bank_every_session: bool,
    /// Forces bank and task prompts to zero (control arm).
    #[serde(default)]
    pub ablate_prompts: bool,
    /// Cap on contrastive patterns per step; all 2^n - 1 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dcl_pattern_subsample: Option<usize>,
    /// Scales the contrastive positive term by pattern similarity, which
    /// gives the view weights a nonzero gradient.
    #[serde(default)]
    pub weighted_positive_term: bool,
}

impl ExperimentConfig {
    /// Reads and parses a config file. A missing file or malformed JSON is a
    /// usage error (exit code 2) naming the path.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d % 2 != 0 {
            return Err(Error::Config(format!(
                "d must be even and positive (K and V halves), got {}",
                self.d
            )));
        }
        if self.heads == 0 || (self.d / 2) % self.heads != 0 {
            return Err(Error::Config(format!(
                "d/2 = {} must divide evenly into {} heads",
                self.d / 2,
                self.heads
            )));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if self.rank == 0 {
            return Err(Error::Config("rank must be positive".into()));
        }
        if self.layers == 0 {
            return Err(Error::Config("layers must be positive".into()));
        }
        if let Some(ranks) = &self.ranks {
            if ranks.first() != Some(&1) {
                return Err(Error::Config("ranks must start with r_0 = 1".into()));
            }
            if ranks.iter().any(|&r| r == 0) {
                return Err(Error::Config("ranks must be positive".into()));
            }
        }
        if !self.missing_rate.is_finite() || !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Config(format!(
                "missing_rate must lie in [0, 1), got {}",
                self.missing_rate
            )));
        }
        if self.sessions == 0 {
            return Err(Error::Config("sessions must be positive".into()));
        }
        if self.c_base == 0 {
            return Err(Error::Config("c_base must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be positive".into()));
        }
        for (name, v) in [("lr", self.lr), ("alpha", self.alpha), ("lambda", self.lambda)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if self.lr == 0.0 {
            return Err(Error::Config("lr must be positive".into()));
        }
        if self.dcl_pattern_subsample == Some(0) {
            return Err(Error::Config(
                "dcl_pattern_subsample must be positive when set".into(),
            ));
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate()?;
            self.check_class_split(spec.classes)?;
        }
        Ok(())
    }

    /// Session arithmetic against a concrete class count: the first session
    /// takes c_base classes and the remaining T-1 sessions split the rest
    /// evenly.
    pub fn check_class_split(&self, classes: usize) -> Result<()> {
        if self.c_base > classes {
            return Err(Error::Config(format!(
                "c_base {} exceeds class count {classes}",
                self.c_base
            )));
        }
        if self.sessions == 1 {
            if self.c_base != classes {
                return Err(Error::Config(format!(
                    "single session must take all {classes} classes, c_base is {}",
                    self.c_base
                )));
            }
            return Ok(());
        }
        let rest = classes - self.c_base;
        let rem = rest % (self.sessions - 1);
        if rem != 0 {
            return Err(Error::Config(format!(
                "{rest} post-base classes do not split into {} sessions, remainder {rem}",
                self.sessions - 1
            )));
        }
        Ok(())
    }

    /// Rank chain for n views: the explicit chain when given, else
    /// [1, rank, ..., rank].
    pub fn resolve_ranks(&self, n_views: usize) -> Result<Vec<usize>> {
        match &self.ranks {
            Some(ranks) => {
                if ranks.len() != n_views + 1 {
                    return Err(Error::Config(format!(
                        "ranks needs {} entries r_0..r_n for {n_views} views, got {}",
                        n_views + 1,
                        ranks.len()
                    )));
                }
                Ok(ranks.clone())
            }
            None => {
                let mut ranks = vec![self.rank; n_views + 1];
                ranks[0] = 1;
                Ok(ranks)
            }
        }
    }

    pub fn model_spec(&self, view_dims: Vec<usize>) -> Result<ModelSpec> {
        let n = view_dims.len();
        let spec = ModelSpec {
            view_dims,
            prompt_len: self.d,
            layers: self.layers,
            heads: self.heads,
            factors: self.k,
            tt_ranks: self.resolve_ranks(n)?,
            bank_kind: self.bank,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// SHA-256 over the canonical JSON serialization; reports embed this so
    /// two runs are comparable only when their configs match.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }
}
