//! Experiment configuration files (TOML).
//!
//! ```toml
//! task = "iem"
//! output = "runs/sdfcn-dual"
//!
//! [corpus]
//! n_train = 50
//! n_test = 10
//! segment_length = 16000
//! seed = 1
//!
//! [model]
//! name = "SDFCN"
//! width = 30
//!
//! [train]
//! learning_rate = 0.001
//! max_epochs = 180
//!
//! [eval]
//! metrics = ["stoi", "mse"]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wmse_core::data::{Task, DEFAULT_SEGMENT_LENGTH};
use wmse_core::training::TrainConfig;
use wmse_core::{Error, Result};

use crate::enhancer::Overrides;
use crate::experiment::RunSettings;
use crate::model_id::ModelId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub output: PathBuf,
    #[serde(default)]
    pub corpus: CorpusSection,
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    /// Stage-1 settings for residual models.
    #[serde(default)]
    pub train_primary: Option<TrainConfig>,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub n_train: usize,
    pub n_test: usize,
    pub segment_length: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Corpus directories from `generate`; synthesized in memory when absent.
    pub train_dir: Option<PathBuf>,
    pub test_dir: Option<PathBuf>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            n_train: 50,
            n_test: 10,
            segment_length: DEFAULT_SEGMENT_LENGTH,
            seed: 0,
            validation_fraction: 0.1,
            train_dir: None,
            test_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    #[serde(default)]
    pub width: Option<usize>,
    #[serde(default)]
    pub ddae_hidden: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Stoi,
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub metrics: Vec<Metric>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            metrics: vec![Metric::Stoi, Metric::Mse],
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(one_line(&e.to_string())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let id = self.model_id()?;
        id.resolve_channels(self.task.channels())?;
        self.train.validate()?;
        if let Some(p) = &self.train_primary {
            p.validate()?;
        }
        let c = &self.corpus;
        if c.train_dir.is_none() && (c.n_train == 0 || c.segment_length == 0) {
            return Err(Error::Config("corpus needs n_train and segment_length > 0".into()));
        }
        if !(0.0..1.0).contains(&c.validation_fraction) {
            return Err(Error::Config("validation_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn model_id(&self) -> Result<ModelId> {
        self.model.name.parse()
    }

    pub fn run_settings(&self) -> RunSettings {
        RunSettings {
            overrides: Overrides {
                width: self.model.width,
                ddae_hidden: self.model.ddae_hidden,
            },
            train: self.train.clone(),
            primary_train: self.train_primary.clone(),
            validation_fraction: self.corpus.validation_fraction,
        }
    }

    /// The config with every default filled in.
    pub fn resolved_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
