//! BERT-style encoder backend for `orgclass`.
//!
//! Loads a pretrained checkpoint directory (`config.json`, `tokenizer.json` or
//! `vocab.txt`, and `model.safetensors` or `pytorch_model.bin`), exposes it as
//! a [`TextEncoder`](orgclass::models::TextEncoder) using the first-token
//! summary vector, and fine-tunes encoder and head together with AdamW.

mod encoder;
mod finetune;
mod pretrained;

pub use encoder::BertTextEncoder;
pub use finetune::{fine_tune, load_model, FineTuned, ENCODER_WEIGHTS_FILE};
pub use pretrained::{load_config, load_tokenizer, map_checkpoint_name, PretrainedDir};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BertError {
    #[error("pretrained directory {path}: {message}")]
    Pretrained { path: String, message: String },
    #[error("tokenizer: {0}")]
    Tokenizer(String),
    #[error("checkpoint is missing tensors: {}", .0.join(", "))]
    MissingTensors(Vec<String>),
    #[error(transparent)]
    Candle(#[from] candle_core::Error),
    #[error(transparent)]
    Model(#[from] orgclass::models::ModelError),
    #[error(transparent)]
    Dataset(#[from] orgclass::datasets::DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BertError>;

impl From<BertError> for orgclass::models::ModelError {
    fn from(e: BertError) -> Self {
        match e {
            BertError::Model(m) => m,
            other => orgclass::models::ModelError::Encoder(other.to_string()),
        }
    }
}
