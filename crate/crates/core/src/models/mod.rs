//! Classifiers over organization text.
//!
//! `OrgModel1` is an encoder followed by a linear head with one output per
//! label. `OrgModel2` scores each (organization text, label description)
//! pair with a shared encoder and a single-output head. Both share the
//! [`TextEncoder`] contract so the deterministic hashed baseline and a
//! pretrained transformer backend are interchangeable at inference time.

mod artifact;
mod encoder;
mod head;
mod model;
mod optim;
mod train;

pub use artifact::{ModelMeta, HEAD_FILE, MODEL_FILE, TRAIN_LOG_FILE};
pub use encoder::{EncoderConfig, EncoderKind, HashedNgramEncoder, TextEncoder};
pub use head::{
    bce_with_logits, cross_entropy, loss_and_grad, predict_multilabel, predict_singlelabel,
    sigmoid, softmax, HeadGrad, LinearHead,
};
pub use model::{Model, Prediction};
pub use optim::AdamW;
pub use train::{train_frozen, EpochLog, ModelSpec, TrainLog};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} label descriptions, got {got}")]
    DescriptionCount { expected: usize, got: usize },
    #[error("training split is empty")]
    EmptyTrainSplit,
    #[error("non-finite loss at epoch {epoch}, batch {batch} (learning rate {learning_rate})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        learning_rate: f64,
    },
    #[error("encoder: {0}")]
    Encoder(String),
    #[error("model artifact: {0}")]
    Artifact(String),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Dataset(#[from] crate::datasets::DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self { $($name::$variant => $text),+ })
            }
        }

        impl std::str::FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(
                        "unknown {} {other:?} (expected one of: {})",
                        stringify!($name),
                        [$($text),+].join(", ")
                    )),
                }
            }
        }
    };
}
pub(crate) use string_enum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    OrgModel1,
    OrgModel2,
}
string_enum!(Architecture { OrgModel1 => "orgmodel1", OrgModel2 => "orgmodel2" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskMode {
    Multilabel,
    Singlelabel,
}
string_enum!(TaskMode { Multilabel => "multilabel", Singlelabel => "singlelabel" });

impl From<crate::datasets::Task> for TaskMode {
    fn from(task: crate::datasets::Task) -> Self {
        if task.is_multilabel() {
            TaskMode::Multilabel
        } else {
            TaskMode::Singlelabel
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    BinaryCrossEntropy,
}
string_enum!(LossKind {
    CrossEntropy => "cross_entropy",
    BinaryCrossEntropy => "binary_cross_entropy",
});

/// Multilabel threshold on sigmoid scores (inclusive).
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    pub seed: u64,
    /// Keep the epoch with the best dev macro-F1 (needs a non-empty dev split).
    #[serde(default)]
    pub early_stop: bool,
}

fn default_weight_decay() -> f64 {
    0.01
}

impl TrainConfig {
    /// Transformer fine-tuning defaults.
    pub fn new(loss: LossKind, seed: u64) -> Self {
        Self {
            loss,
            epochs: 4,
            batch_size: 16,
            learning_rate: 2e-5,
            weight_decay: default_weight_decay(),
            seed,
            early_stop: false,
        }
    }

    /// Loss the architecture/task pairing requires.
    pub fn required_loss(arch: Architecture, mode: TaskMode) -> LossKind {
        match (arch, mode) {
            (Architecture::OrgModel1, TaskMode::Singlelabel) => LossKind::CrossEntropy,
            _ => LossKind::BinaryCrossEntropy,
        }
    }

    pub fn validate(&self, arch: Architecture, mode: TaskMode) -> Result<()> {
        let required = Self::required_loss(arch, mode);
        if self.loss != required {
            return Err(ModelError::InvalidConfig(format!(
                "{arch} in {mode} mode trains with {required}, not {}",
                self.loss
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ModelError::InvalidConfig(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "learning_rate must be a positive number, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_threshold(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidConfig(format!(
            "threshold must lie in (0, 1), got {tau}"
        )))
    }
}
