//! Run configuration (TOML) with command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tubo_core::models::{DEFAULT_DROPOUT, DEFAULT_MC_PASSES, ModelKind, ModelSpec, TrainConfig, Validation};
use tubo_core::pipeline::PoolConfig;
use tubo_core::preprocess::{DEFAULT_THRESHOLD, NormScheme};
use tubo_core::te::{DEFAULT_K, Objective};
use tubo_core::SplitSpec;

use crate::error::{Error, Result};

/// Normalization for the trainable members; `all` trains each under all three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormChoice {
    Glob,
    Indv,
    Roll,
    All,
}

impl NormChoice {
    pub fn schemes(self) -> Vec<NormScheme> {
        match self {
            NormChoice::Glob => vec![NormScheme::Glob],
            NormChoice::Indv => vec![NormScheme::Indv],
            NormChoice::Roll => vec![NormScheme::Roll],
            NormChoice::All => NormScheme::ALL.to_vec(),
        }
    }
}

impl std::str::FromStr for NormChoice {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "glob" => Ok(NormChoice::Glob),
            "indv" => Ok(NormChoice::Indv),
            "roll" => Ok(NormChoice::Roll),
            "all" => Ok(NormChoice::All),
            other => Err(format!("unknown normalization `{other}` (glob, indv, roll, all)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// dm-csv series; train and test come from one contiguous split.
    pub data: PathBuf,
    pub topology: PathBuf,
    pub models: PathBuf,
    /// Overridden by `TUBO_REPORT_DIR`.
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: "data/series.csv".into(),
            topology: "topology.json".into(),
            models: "models".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolSection {
    /// Seasonal-naive period in epochs, capped at the window.
    pub season: usize,
    pub norm: NormChoice,
    pub dropout: f64,
    /// Explicit members; empty means the default four.
    pub members: Vec<ModelKind>,
}

impl Default for PoolSection {
    fn default() -> Self {
        Self { season: 96, norm: NormChoice::Indv, dropout: DEFAULT_DROPOUT, members: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub validation: Validation,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            learning_rate: d.learning_rate,
            betas: d.betas,
            weight_decay: d.weight_decay,
            max_epochs: d.max_epochs,
            batch_size: d.batch_size,
            patience: d.patience,
            validation: d.validation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    /// Fail `evaluate` when the selector's MAE exceeds this multiple of the
    /// best single member's.
    pub regret_bound: Option<f64>,
    /// Per-model uncertainty/error correlation over the test windows.
    pub correlation: bool,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self { regret_bound: None, correlation: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeSection {
    /// One objective, or both when unset.
    pub objective: Option<Objective>,
    pub k: usize,
    /// Number of test epochs swept, from the start of the test split; all when unset.
    pub horizon: Option<usize>,
}

impl Default for TeSection {
    fn default() -> Self {
        Self { objective: None, k: DEFAULT_K, horizon: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub window: usize,
    pub threshold: f64,
    pub train_fraction: f64,
    pub passes: usize,
    pub calibrate: bool,
    /// Clip bursts from the primary pool's training data.
    pub clip: bool,
    /// Fall back to measurements on pairs forecast to burst.
    pub gating: bool,
    pub pool: PoolSection,
    pub train: TrainSection,
    pub evaluate: EvaluateSection,
    pub te: TeSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: Paths::default(),
            window: TrainConfig::default().window,
            threshold: DEFAULT_THRESHOLD,
            train_fraction: SplitSpec::default().train_fraction,
            passes: DEFAULT_MC_PASSES,
            calibrate: true,
            clip: true,
            gating: true,
            pool: PoolSection::default(),
            train: TrainSection::default(),
            evaluate: EvaluateSection::default(),
            te: TeSection::default(),
        }
    }
}

/// Command-line overrides; `None` keeps the file's value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub no_clip: bool,
    pub norm: Option<NormChoice>,
    pub objective: Option<Objective>,
    pub k: Option<usize>,
    pub passes: Option<usize>,
}

/// The subset of the configuration that determines trained artifacts.
#[derive(Serialize)]
struct TrainingKey<'a> {
    seed: u64,
    data_sha256: &'a str,
    window: usize,
    threshold: f64,
    train_fraction: f64,
    passes: usize,
    calibrate: bool,
    pool: &'a [ModelSpec],
    train: &'a TrainSection,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunConfig {
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::format(path, e))?;
        cfg.validate().map_err(|msg| Error::format(path, msg))?;
        Ok(cfg)
    }

    /// Load `path`, or defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(Error::io(p))?;
                Self::parse(p, &text)
            }
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(format!("train_fraction {} outside (0, 1)", self.train_fraction));
        }
        if !(self.threshold > 0.0) {
            return Err(format!("threshold {} must be positive", self.threshold));
        }
        if self.passes == 0 {
            return Err("passes must be positive".into());
        }
        if !(0.0..1.0).contains(&self.pool.dropout) {
            return Err(format!("dropout {} outside [0, 1)", self.pool.dropout));
        }
        if self.te.k == 0 {
            return Err("te.k must be positive".into());
        }
        if let Some(b) = self.evaluate.regret_bound
            && !(b >= 1.0) {
                return Err(format!("evaluate.regret_bound {b} must be at least 1"));
            }
        self.train_config().validate().map_err(|e| e.to_string())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if o.no_clip {
            self.clip = false;
        }
        if let Some(n) = o.norm {
            self.pool.norm = n;
        }
        if o.objective.is_some() {
            self.te.objective = o.objective;
        }
        if let Some(k) = o.k {
            self.te.k = k;
        }
        if let Some(p) = o.passes {
            self.passes = p;
        }
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec { train_fraction: self.train_fraction }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            betas: t.betas,
            weight_decay: t.weight_decay,
            max_epochs: t.max_epochs,
            validation: t.validation,
            window: self.window,
            batch_size: t.batch_size,
            patience: t.patience,
        }
    }

    pub fn model_specs(&self) -> Vec<ModelSpec> {
        let kinds = if self.pool.members.is_empty() {
            ModelKind::default_pool(self.window, self.pool.season)
        } else {
            self.pool.members.clone()
        };
        let mut specs = Vec::new();
        for kind in kinds {
            if kind.is_trainable() {
                for scheme in self.pool.norm.schemes() {
                    specs.push(ModelSpec::new(kind, scheme).with_dropout(self.pool.dropout));
                }
            } else {
                specs.push(ModelSpec::new(kind, NormScheme::Indv));
            }
        }
        specs
    }

    /// Pool configuration; `clip` picks the clipped or unclipped variant.
    pub fn pool_config(&self, clip: bool) -> PoolConfig {
        let mut cfg = PoolConfig::new(self.model_specs(), self.train_config(), self.seed);
        cfg.threshold = self.threshold;
        cfg.passes = self.passes;
        cfg.calibrate = self.calibrate;
        cfg.clip = clip;
        cfg
    }

    /// Hash of the canonical JSON form of the whole effective configuration.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    /// Hash of everything training depends on, including the data bytes.
    pub fn training_hash(&self, data_sha256: &str) -> String {
        let specs = self.model_specs();
        let key = TrainingKey {
            seed: self.seed,
            data_sha256,
            window: self.window,
            threshold: self.threshold,
            train_fraction: self.train_fraction,
            passes: self.passes,
            calibrate: self.calibrate,
            pool: &specs,
            train: &self.train,
        };
        sha256_hex(&serde_json::to_vec(&key).expect("training key serializes"))
    }

    /// Resolve a configured path against the config file's directory.
    pub fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
        match base.and_then(Path::parent) {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }
}
