//! The four architectures: a convolutional character embedder, a character
//! autoencoder, the ANNc analogy classifier and the ANNr analogy solver.
//!
//! Every model owns a [`ParamStore`] whose parameter names carry the model
//! prefix (`cnn.`, `ae.`, `annc.`, `annr.`), so a joint training step can
//! share one tape and one optimizer across models.

mod annc;
mod annr;
mod autoencoder;
mod cnn;

pub use annc::{Annc, AnncConfig};
pub use annr::{Annr, AnnrConfig};
pub use autoencoder::{AutoEncoder, AutoEncoderConfig, Decoded};
pub use cnn::{CnnEmbedder, CnnEmbedderConfig};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Vocabulary;
use crate::nn::{self, NnError, ParamStore, Scalar};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("checkpoint sidecar: {0}")]
    Sidecar(String),
    #[error("checkpoint {path} lacks the {part} model")]
    MissingPart { path: PathBuf, part: &'static str },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Everything needed to rebuild the models stored in a checkpoint, apart from
/// parameter values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub vocabulary: Option<Vocabulary>,
    pub cnn: Option<CnnEmbedderConfig>,
    pub autoencoder: Option<AutoEncoderConfig>,
    pub annc: Option<AnncConfig>,
    pub annr: Option<AnnrConfig>,
    /// SHA-256 of the parameter values.
    pub checksum: String,
}

/// A set of models saved together: `<path>` holds the parameters and
/// `<path>.json` the sidecar.
#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub cnn: Option<CnnEmbedder<f32>>,
    pub autoencoder: Option<AutoEncoder<f32>>,
    pub annc: Option<Annc<f32>>,
    pub annr: Option<Annr<f32>>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Parameters of `store` whose names start with `prefix`.
pub(crate) fn with_prefix<T: Scalar>(store: &ParamStore<T>, prefix: &str) -> ParamStore<T> {
    let mut out = ParamStore::new();
    for p in store.params().iter().filter(|p| p.name.starts_with(prefix)) {
        out.add(p.name.clone(), p.tensor.clone())
            .expect("names are unique in the source store");
    }
    out
}

fn merge<T: Scalar>(stores: &[&ParamStore<T>]) -> Result<ParamStore<T>, NnError> {
    let mut out = ParamStore::new();
    for s in stores {
        for p in s.params() {
            out.add(p.name.clone(), p.tensor.clone())?;
        }
    }
    Ok(out)
}

/// Checks that `store` holds exactly the names and shapes of `expected`.
pub(crate) fn check_layout<T: Scalar>(
    expected: &ParamStore<T>,
    store: &ParamStore<T>,
) -> Result<(), NnError> {
    for p in expected.params() {
        let q = store.get(&p.name)?;
        if q.tensor.shape() != p.tensor.shape() {
            return Err(NnError::shape(
                "checkpoint",
                format!("{}: {:?} vs {:?}", p.name, q.tensor.shape(), p.tensor.shape()),
            ));
        }
    }
    if store.len() != expected.len() {
        return Err(NnError::Format(format!(
            "expected {} parameters, found {}",
            expected.len(),
            store.len()
        )));
    }
    Ok(())
}

impl Checkpoint {
    fn vocabulary(&self) -> Option<&Vocabulary> {
        self.cnn
            .as_ref()
            .map(|m| &m.vocab)
            .or_else(|| self.autoencoder.as_ref().map(|m| &m.vocab))
    }

    pub fn params(&self) -> Result<ParamStore<f32>, NnError> {
        let mut parts = Vec::new();
        if let Some(m) = &self.cnn {
            parts.push(&m.params);
        }
        if let Some(m) = &self.autoencoder {
            parts.push(&m.params);
        }
        if let Some(m) = &self.annc {
            parts.push(&m.params);
        }
        if let Some(m) = &self.annr {
            parts.push(&m.params);
        }
        merge(&parts)
    }

    pub fn sidecar(&self) -> Result<ModelSidecar, NnError> {
        Ok(ModelSidecar {
            vocabulary: self.vocabulary().cloned(),
            cnn: self.cnn.as_ref().map(|m| m.config.clone()),
            autoencoder: self.autoencoder.as_ref().map(|m| m.config.clone()),
            annc: self.annc.as_ref().map(|m| m.config.clone()),
            annr: self.annr.as_ref().map(|m| m.config.clone()),
            checksum: self.params()?.checksum(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        nn::save_params(&self.params()?, path)?;
        let json = serde_json::to_string_pretty(&self.sidecar()?)?;
        std::fs::write(sidecar_path(path), json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let side: ModelSidecar =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        let store: ParamStore<f32> = nn::load_params(path)?;
        if store.checksum() != side.checksum {
            return Err(ModelError::Sidecar(format!(
                "{} does not match its sidecar checksum",
                path.display()
            )));
        }
        let vocab = || {
            side.vocabulary
                .clone()
                .ok_or_else(|| ModelError::Sidecar("vocabulary missing".into()))
        };
        let mut ck = Checkpoint::default();
        if let Some(cfg) = &side.cnn {
            ck.cnn = Some(CnnEmbedder::from_params(cfg.clone(), vocab()?, with_prefix(&store, "cnn."))?);
        }
        if let Some(cfg) = &side.autoencoder {
            ck.autoencoder = Some(AutoEncoder::from_params(
                cfg.clone(),
                vocab()?,
                with_prefix(&store, "ae."),
            )?);
        }
        if let Some(cfg) = &side.annc {
            ck.annc = Some(Annc::from_params(cfg.clone(), with_prefix(&store, "annc."))?);
        }
        if let Some(cfg) = &side.annr {
            ck.annr = Some(Annr::from_params(cfg.clone(), with_prefix(&store, "annr."))?);
        }
        Ok(ck)
    }

    pub fn require_cnn(&self, path: &Path) -> Result<&CnnEmbedder<f32>, ModelError> {
        self.cnn.as_ref().ok_or_else(|| ModelError::MissingPart {
            path: path.to_owned(),
            part: "cnn embedder",
        })
    }

    pub fn require_autoencoder(&self, path: &Path) -> Result<&AutoEncoder<f32>, ModelError> {
        self.autoencoder.as_ref().ok_or_else(|| ModelError::MissingPart {
            path: path.to_owned(),
            part: "autoencoder",
        })
    }

    pub fn require_annc(&self, path: &Path) -> Result<&Annc<f32>, ModelError> {
        self.annc.as_ref().ok_or_else(|| ModelError::MissingPart {
            path: path.to_owned(),
            part: "annc",
        })
    }

    pub fn require_annr(&self, path: &Path) -> Result<&Annr<f32>, ModelError> {
        self.annr.as_ref().ok_or_else(|| ModelError::MissingPart {
            path: path.to_owned(),
            part: "annr",
        })
    }
}

/// Converts a batch of rows from a graph value to `f64` vectors.
pub(crate) fn rows_f64<T: Scalar>(values: &[T], cols: usize) -> Vec<Vec<f64>> {
    values
        .chunks(cols.max(1))
        .map(|r| r.iter().map(|v| v.as_f64()).collect())
        .collect()
}
