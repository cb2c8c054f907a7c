use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::head::{predict_multilabel, predict_singlelabel, sigmoid, softmax, LinearHead};
use super::{
    Architecture, EncoderKind, HashedNgramEncoder, ModelError, ModelMeta, Result, TaskMode,
    TextEncoder,
};

/// One row of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub org_id: String,
    pub scores: Vec<f64>,
    pub labels: BTreeSet<String>,
}

/// A trained classifier ready for inference. Safe to share across threads.
pub struct Model {
    pub meta: ModelMeta,
    pub head: LinearHead,
    encoder: Arc<dyn TextEncoder>,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("meta", &self.meta)
            .field("encoder_dim", &self.encoder.dim())
            .finish_non_exhaustive()
    }
}

impl Model {
    pub fn new(meta: ModelMeta, head: LinearHead, encoder: Arc<dyn TextEncoder>) -> Result<Self> {
        meta.validate()?;
        if encoder.dim() != head.inputs {
            return Err(ModelError::DimensionMismatch {
                what: "encoder dimension",
                expected: head.inputs,
                got: encoder.dim(),
            });
        }
        if head.outputs != meta.head_outputs() || head.inputs != meta.head.inputs {
            return Err(ModelError::DimensionMismatch {
                what: "head outputs",
                expected: meta.head_outputs(),
                got: head.outputs,
            });
        }
        Ok(Self {
            meta,
            head,
            encoder,
        })
    }

    pub fn encoder(&self) -> &Arc<dyn TextEncoder> {
        &self.encoder
    }

    /// Loads an artifact whose encoder is supplied by the caller.
    pub fn load_with(dir: &Path, encoder: Arc<dyn TextEncoder>) -> Result<Self> {
        let (meta, head) = ModelMeta::load(dir)?;
        Self::new(meta, head, encoder)
    }

    /// Loads an artifact trained on the hashed baseline encoder.
    pub fn load_baseline(dir: &Path) -> Result<Self> {
        let (meta, head) = ModelMeta::load(dir)?;
        if meta.encoder.kind != EncoderKind::HashedNgramBaseline {
            return Err(ModelError::Artifact(format!(
                "artifact uses a {} encoder; load it with its backend",
                meta.encoder.kind
            )));
        }
        let encoder = HashedNgramEncoder::new(&meta.encoder)?;
        Self::new(meta, head, Arc::new(encoder))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.meta.save(dir, &self.head)
    }

    /// Per-label scores in label-space order, each in `[0, 1]`.
    pub fn scores(&self, text: &str) -> Result<Vec<f64>> {
        match self.meta.architecture {
            Architecture::OrgModel1 => {
                let z = self.head.forward(&self.encoder.encode(text)?)?;
                Ok(match self.meta.task_mode {
                    TaskMode::Multilabel => z.into_iter().map(sigmoid).collect(),
                    TaskMode::Singlelabel => softmax(&z),
                })
            }
            Architecture::OrgModel2 => {
                let descriptions = self.meta.descriptions.as_deref().unwrap_or_default();
                self.strengths(text, descriptions)
            }
        }
    }

    /// Pair-scorer strengths of `text` against each description.
    pub fn strengths(&self, text: &str, descriptions: &[String]) -> Result<Vec<f64>> {
        if self.meta.architecture != Architecture::OrgModel2 {
            return Err(ModelError::InvalidConfig(
                "strengths need an orgmodel2 artifact".into(),
            ));
        }
        let n = self.meta.label_space.n();
        if descriptions.len() != n {
            return Err(ModelError::DescriptionCount {
                expected: n,
                got: descriptions.len(),
            });
        }
        descriptions
            .iter()
            .map(|d| {
                let z = self.head.forward(&self.encoder.encode_pair(text, d)?)?;
                Ok(sigmoid(z[0]))
            })
            .collect()
    }

    pub fn labels_from_scores(&self, scores: &[f64]) -> BTreeSet<String> {
        let labels = &self.meta.label_space.labels;
        match self.meta.task_mode {
            TaskMode::Multilabel => predict_multilabel(scores, self.meta.threshold)
                .into_iter()
                .map(|j| labels[j].clone())
                .collect(),
            TaskMode::Singlelabel => labels
                .get(predict_singlelabel(scores))
                .cloned()
                .into_iter()
                .collect(),
        }
    }

    pub fn predict(&self, org_id: &str, text: &str) -> Result<Prediction> {
        let scores = self.scores(text)?;
        Ok(Prediction {
            org_id: org_id.to_string(),
            labels: self.labels_from_scores(&scores),
            scores,
        })
    }
}
