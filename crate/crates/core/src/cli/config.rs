use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{ColumnOrder, SplitSizes, WordSplitSizes};
use crate::models::{AutoEncoderConfig, CnnEmbedderConfig};
use crate::training::TrainConfig;

use super::CliError;

/// Every solver the benchmark knows how to build.
pub const SOLVER_ROSTER: [&str; 8] = [
    "alea",
    "kolmo",
    "cnn-3cosadd",
    "cnn-3cosmul",
    "cnn-annc",
    "cnn-annr",
    "ae-parallel",
    "ae-annr",
];

/// Trainable models, in dependency order.
pub const MODELS: [&str; 4] = ["annc", "cnn-annr", "ae", "ae-annr"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSizes {
    pub cnn: CnnEmbedderConfig,
    pub annc_f1: usize,
    pub annc_f2: usize,
    pub autoencoder: AutoEncoderConfig,
    /// ANNr hidden width; the embedding size when absent.
    pub annr_hidden: Option<usize>,
}

impl Default for ModelSizes {
    fn default() -> Self {
        Self {
            cnn: CnnEmbedderConfig::default(),
            annc_f1: 128,
            annc_f2: 64,
            autoencoder: AutoEncoderConfig::default(),
            annr_hidden: None,
        }
    }
}

/// Per-model training settings. The `seed` fields are replaced by the run
/// seed at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSettings {
    pub annc: TrainConfig,
    pub cnn_annr: TrainConfig,
    pub ae: TrainConfig,
    pub ae_annr: TrainConfig,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        Self {
            annc: TrainConfig::annc(0),
            cnn_annr: TrainConfig::cnn_annr(0),
            ae: TrainConfig::ae_pretrain(0),
            ae_annr: TrainConfig::ae_annr(0),
        }
    }
}

/// Everything needed to reconstruct a run from its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub language: String,
    /// Inflection files. When empty the synthetic toy language is generated.
    pub inputs: Vec<PathBuf>,
    pub column_order: ColumnOrder,
    pub strict: bool,
    /// Stems of the generated toy language.
    pub toy_stems: usize,
    pub data_seed: u64,
    pub split: SplitSizes,
    pub word_split: WordSplitSizes,
    pub models: ModelSizes,
    pub training: TrainingSettings,
    pub seeds: Vec<u64>,
    pub solvers: Vec<String>,
    pub timeout_secs: f64,
    pub alea_trials: usize,
    pub kolmo_budget: Option<u64>,
    pub annc_prefilter: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            language: "toy".into(),
            inputs: Vec::new(),
            column_order: ColumnOrder::default(),
            strict: false,
            toy_stems: 200,
            data_seed: 0,
            split: SplitSizes::default(),
            word_split: WordSplitSizes::default(),
            models: ModelSizes::default(),
            training: TrainingSettings::default(),
            seeds: vec![0],
            solvers: SOLVER_ROSTER.iter().map(|s| s.to_string()).collect(),
            timeout_secs: 10.0,
            alea_trials: 1000,
            kolmo_budget: None,
            annc_prefilter: None,
        }
    }
}

impl RunConfig {
    /// Scaled-down settings for the synthetic toy language: a 200-stem
    /// corpus, small models, and epoch caps that keep one seed to a few
    /// minutes on a desktop CPU.
    pub fn toy() -> Self {
        let mut training = TrainingSettings::default();
        training.annc.max_epochs = 10;
        training.ae.batch_size = 64;
        training.ae.patience = 10;
        training.ae_annr.max_epochs = 20;
        Self {
            split: SplitSizes { dev: 200, test: 500, train_max: 2000 },
            word_split: WordSplitSizes { train_max: 40000, dev: 100, test: 100, min_words: 200 },
            models: ModelSizes {
                cnn: CnnEmbedderConfig { char_emb_dim: 16, ..CnnEmbedderConfig::default() },
                annc_f1: 16,
                annc_f2: 8,
                autoencoder: AutoEncoderConfig { hidden: 32, max_decode_len: 30 },
                annr_hidden: None,
            },
            training,
            seeds: vec![0, 1, 2],
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Hash of the fields that determine the prepared data and the trained
    /// models. Seeds, the solver roster and solver limits are excluded: they
    /// select work inside a run rather than define it.
    pub fn hash(&self) -> String {
        let mut core = self.clone();
        core.seeds.clear();
        core.solvers.clear();
        core.timeout_secs = 0.0;
        core.alea_trials = 0;
        core.kolmo_budget = None;
        core.annc_prefilter = None;
        let digest = Sha256::digest(serde_json::to_vec(&core).expect("config serializes"));
        hex::encode(&digest[..6])
    }

    pub fn run_dir_name(&self) -> String {
        format!("run-{}", self.hash())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.language.trim().is_empty() {
            return Err(CliError::Usage("language tag must not be empty".into()));
        }
        if self.inputs.is_empty() && self.toy_stems == 0 {
            return Err(CliError::Usage("no input files and toy_stems is 0".into()));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs >= 0.0) {
            return Err(CliError::Usage(format!("invalid timeout {}", self.timeout_secs)));
        }
        for s in &self.solvers {
            check_solver_name(s)?;
        }
        Ok(())
    }
}

pub fn check_solver_name(name: &str) -> Result<(), CliError> {
    if SOLVER_ROSTER.contains(&name) {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "unknown solver `{name}` (expected one of: {})",
            SOLVER_ROSTER.join(", ")
        )))
    }
}

pub fn check_model_name(name: &str) -> Result<(), CliError> {
    if MODELS.contains(&name) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("unknown model `{name}` (expected one of: {})", MODELS.join(", "))))
    }
}
