//! Versioned JSON checkpoints: config echo, vocabulary, every parameter.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tgbully_core::data::vocab::Vocabulary;
use tgbully_core::{Model, ModelConfig, Tensor, TrainConfig};

use crate::{io, Error};

pub const FORMAT: &str = "tgbully-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    /// Row-major.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    /// The training configuration that produced the parameters, if known.
    #[serde(default)]
    pub train_config: Option<TrainConfig>,
    pub vocab: Vec<String>,
    pub params: Vec<SavedTensor>,
}

impl Checkpoint {
    pub fn of(model: &Model, train_config: Option<&TrainConfig>) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            config: model.config.clone(),
            train_config: train_config.cloned(),
            vocab: model.vocab.tokens().to_vec(),
            params: model
                .store
                .iter()
                .map(|(name, t)| SavedTensor {
                    name: name.into(),
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<Model, String> {
        if self.format != FORMAT {
            return Err(format!("not a checkpoint (format {:?})", self.format));
        }
        if self.version != VERSION {
            return Err(format!("unsupported checkpoint version {}", self.version));
        }
        let vocab = Vocabulary::from_tokens(self.vocab).map_err(|e| e.to_string())?;
        let params = self
            .params
            .into_iter()
            .map(|p| Tensor::new(p.shape, p.values).map(|t| (p.name, t)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        Model::from_parts(self.config, vocab, params).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoints always serialize");
        s.push('\n');
        s
    }
}

pub fn save(path: &Path, model: &Model, train_config: Option<&TrainConfig>) -> Result<(), Error> {
    io::write(path, Checkpoint::of(model, train_config).to_json().as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, Error> {
    let text = io::read(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<Model, Error> {
    load_checkpoint(path)?.into_model().map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
