use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    check_threshold, Architecture, EncoderConfig, LinearHead, ModelError, Result, TaskMode,
    TrainConfig,
};
use crate::datasets::LabelSpace;
use crate::fsutil;
use crate::taxonomy::DescriptionStyle;

pub const MODEL_FILE: &str = "model.json";
pub const HEAD_FILE: &str = "head.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.json";

const FORMAT_VERSION: u32 = 1;

/// Everything needed to rebuild a classifier, stored as `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub format_version: u32,
    pub architecture: Architecture,
    pub task_mode: TaskMode,
    pub label_space: LabelSpace,
    pub label_space_hash: String,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description_style: Option<DescriptionStyle>,
    /// Label descriptions in label-space order (pair scorer only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptions: Option<Vec<String>>,
    pub train_config: TrainConfig,
    pub encoder: EncoderConfig,
    /// Fine-tuned encoder weights inside the artifact directory, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder_weights: Option<String>,
    pub head: HeadRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_provenance_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadRef {
    pub file: String,
    pub inputs: usize,
    pub outputs: usize,
    /// Little-endian f64: weights row-major, then bias.
    pub encoding: String,
    pub sha256: String,
}

impl ModelMeta {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        architecture: Architecture,
        label_space: LabelSpace,
        threshold: f64,
        description_style: Option<DescriptionStyle>,
        descriptions: Option<Vec<String>>,
        train_config: TrainConfig,
        encoder: EncoderConfig,
        head: &LinearHead,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            architecture,
            task_mode: label_space.task.into(),
            label_space_hash: label_space.hash(),
            label_space,
            threshold,
            description_style,
            descriptions,
            train_config,
            encoder,
            encoder_weights: None,
            head: HeadRef {
                file: HEAD_FILE.into(),
                inputs: head.inputs,
                outputs: head.outputs,
                encoding: "f64le".into(),
                sha256: fsutil::sha256_hex(&head_bytes(head)),
            },
            dataset_provenance_hash: None,
        }
    }

    pub fn head_outputs(&self) -> usize {
        match self.architecture {
            Architecture::OrgModel1 => self.label_space.n(),
            Architecture::OrgModel2 => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(ModelError::Artifact(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        check_threshold(self.threshold)?;
        self.train_config
            .validate(self.architecture, self.task_mode)?;
        if TaskMode::from(self.label_space.task) != self.task_mode {
            return Err(ModelError::InvalidConfig(format!(
                "task {} does not run in {} mode",
                self.label_space.task, self.task_mode
            )));
        }
        if self.label_space.hash() != self.label_space_hash {
            return Err(ModelError::Artifact("label space hash mismatch".into()));
        }
        if self.head.outputs != self.head_outputs() {
            return Err(ModelError::DimensionMismatch {
                what: "head outputs",
                expected: self.head_outputs(),
                got: self.head.outputs,
            });
        }
        if self.head.inputs != self.encoder.hidden_size {
            return Err(ModelError::DimensionMismatch {
                what: "head inputs",
                expected: self.encoder.hidden_size,
                got: self.head.inputs,
            });
        }
        if self.architecture == Architecture::OrgModel2 {
            let got = self.descriptions.as_ref().map_or(0, Vec::len);
            if got != self.label_space.n() {
                return Err(ModelError::DescriptionCount {
                    expected: self.label_space.n(),
                    got,
                });
            }
        }
        Ok(())
    }

    /// Writes `model.json` and the head weights.
    pub fn save(&self, dir: &Path, head: &LinearHead) -> Result<()> {
        let bytes = head_bytes(head);
        if fsutil::sha256_hex(&bytes) != self.head.sha256 {
            return Err(ModelError::Artifact(
                "head weights differ from the recorded hash".into(),
            ));
        }
        std::fs::create_dir_all(dir)?;
        fsutil::write_atomic(&dir.join(&self.head.file), &bytes)?;
        fsutil::write_json_pretty(&dir.join(MODEL_FILE), self)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<(Self, LinearHead)> {
        let meta: ModelMeta = fsutil::read_json(&dir.join(MODEL_FILE))?;
        meta.validate()?;
        let bytes = std::fs::read(dir.join(&meta.head.file))?;
        if fsutil::sha256_hex(&bytes) != meta.head.sha256 {
            return Err(ModelError::Artifact(format!(
                "{} does not match its recorded sha256",
                meta.head.file
            )));
        }
        let head = head_from_bytes(meta.head.inputs, meta.head.outputs, &bytes)?;
        Ok((meta, head))
    }
}

pub(crate) fn head_bytes(head: &LinearHead) -> Vec<u8> {
    head.weights
        .iter()
        .chain(&head.bias)
        .flat_map(|v| v.to_le_bytes())
        .collect()
}

fn head_from_bytes(inputs: usize, outputs: usize, bytes: &[u8]) -> Result<LinearHead> {
    let expected = (inputs * outputs + outputs) * 8;
    if bytes.len() != expected {
        return Err(ModelError::DimensionMismatch {
            what: "head file bytes",
            expected,
            got: bytes.len(),
        });
    }
    let mut values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let bias = values.split_off(inputs * outputs);
    LinearHead::from_parts(inputs, outputs, values, bias)
}
