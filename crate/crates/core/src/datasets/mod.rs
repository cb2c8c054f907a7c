//! Labeled dataset construction for the environmental-issue and 2-digit SIC
//! tasks, deterministic splits and target encoding.

mod build;
mod rng;
mod split;

pub use build::{build_env_dataset, build_sic_dataset, SicBuildConfig, TextSource};
pub use rng::{DatasetRng, RNG_NAME};
pub use split::{split_dataset, SplitSizes};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("split sizes sum to {requested} but the dataset has {available} examples")]
    SplitMismatch { requested: usize, available: usize },
    #[error("class(es) with fewer than {needed} usable texts: {}", .classes.join(", "))]
    InsufficientClass { needed: usize, classes: Vec<String> },
    #[error("label {0:?} is not in the label space")]
    UnknownLabel(String),
    #[error("single-label example {org_id:?} has {count} labels")]
    NotSingleLabel { org_id: String, count: usize },
    #[error("org_id {0:?} appears more than once")]
    DuplicateOrg(String),
    #[error("dataset is empty")]
    Empty,
    #[error(transparent)]
    Taxonomy(#[from] crate::taxonomy::TaxonomyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Multi-label environmental issues.
    Issues,
    /// Single-label 2-digit SIC major group.
    Sic2,
}

impl Task {
    pub fn is_multilabel(self) -> bool {
        matches!(self, Task::Issues)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Issues => "issues",
            Task::Sic2 => "sic2",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "issues" => Ok(Task::Issues),
            "sic2" => Ok(Task::Sic2),
            other => Err(format!("unknown task {other:?} (expected issues or sic2)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// One row of `dataset.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub org_id: String,
    pub text: String,
    pub labels: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

/// Ordered label list; position `j` is the output index of label `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    pub task: Task,
    pub labels: Vec<String>,
}

impl LabelSpace {
    pub fn new(task: Task, labels: Vec<String>) -> Self {
        Self { task, labels }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Stable identity of the ordered label list.
    pub fn hash(&self) -> String {
        fsutil::sha256_hex(format!("{}\n{}", self.task, self.labels.join("\n")).as_bytes())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub builder: String,
    pub rng: String,
    pub seed: Option<u64>,
    /// Build parameters (k, per_class, split sizes, ...).
    pub params: BTreeMap<String, serde_json::Value>,
    /// Counts recorded while filtering (candidates, exclusions, ...).
    pub counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub label_space: LabelSpace,
    pub examples: Vec<Example>,
    pub provenance: Provenance,
}

/// The `labelspace.json` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSpaceFile {
    pub task: Task,
    pub labels: Vec<String>,
    pub n: usize,
    pub seed: Option<u64>,
    pub label_space_hash: String,
    pub provenance_hash: String,
    pub provenance: Provenance,
}

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const LABELSPACE_FILE: &str = "labelspace.json";

impl LabeledDataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Example> {
        self.examples.iter().filter(move |e| e.split == Some(split))
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Hash over the label space, provenance and every example.
    pub fn provenance_hash(&self) -> Result<String> {
        let mut bytes = serde_json::to_vec(&(&self.label_space, &self.provenance))?;
        bytes.extend(fsutil::to_jsonl(&self.examples)?);
        Ok(fsutil::sha256_hex(&bytes))
    }

    /// Writes `dataset.jsonl` and `labelspace.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fsutil::write_jsonl(&dir.join(DATASET_FILE), &self.examples)?;
        let sidecar = LabelSpaceFile {
            task: self.label_space.task,
            labels: self.label_space.labels.clone(),
            n: self.label_space.n(),
            seed: self.provenance.seed,
            label_space_hash: self.label_space.hash(),
            provenance_hash: self.provenance_hash()?,
            provenance: self.provenance.clone(),
        };
        fsutil::write_json_pretty(&dir.join(LABELSPACE_FILE), &sidecar)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Self::load_files(&dir.join(DATASET_FILE), &dir.join(LABELSPACE_FILE))
    }

    pub fn load_files(dataset: &Path, labelspace: &Path) -> Result<Self> {
        let sidecar: LabelSpaceFile = fsutil::read_json(labelspace)?;
        let examples: Vec<Example> = fsutil::read_jsonl(dataset)?;
        let ds = LabeledDataset {
            label_space: LabelSpace::new(sidecar.task, sidecar.labels),
            examples,
            provenance: sidecar.provenance,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Checks label membership, single-label arity and unique org ids.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in &self.examples {
            if !seen.insert(e.org_id.as_str()) {
                return Err(DatasetError::DuplicateOrg(e.org_id.clone()));
            }
            encode_targets(e, &self.label_space)?;
        }
        Ok(())
    }
}

/// Training target for one example.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// 0/1 indicator per label (multi-label task).
    MultiHot(Vec<f64>),
    /// Index of the single gold label.
    Index(usize),
}

pub fn encode_targets(example: &Example, space: &LabelSpace) -> Result<Target> {
    let idx = example
        .labels
        .iter()
        .map(|l| {
            space
                .index_of(l)
                .ok_or_else(|| DatasetError::UnknownLabel(l.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    if space.task.is_multilabel() {
        let mut v = vec![0.0; space.n()];
        for i in idx {
            v[i] = 1.0;
        }
        Ok(Target::MultiHot(v))
    } else if idx.len() == 1 {
        Ok(Target::Index(idx[0]))
    } else {
        Err(DatasetError::NotSingleLabel {
            org_id: example.org_id.clone(),
            count: idx.len(),
        })
    }
}

pub fn decode_targets(target: &Target, space: &LabelSpace) -> BTreeSet<String> {
    match target {
        Target::MultiHot(v) => v
            .iter()
            .zip(&space.labels)
            .filter(|(x, _)| **x > 0.5)
            .map(|(_, l)| l.clone())
            .collect(),
        Target::Index(i) => space.labels.get(*i).cloned().into_iter().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(labels: &[&str]) -> Example {
        Example {
            org_id: "o".into(),
            text: "t".into(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            split: None,
        }
    }

    #[test]
    fn multi_hot_and_index() {
        let issues = LabelSpace::new(
            Task::Issues,
            ["Water", "Biodiversity", "Governance"]
                .map(String::from)
                .to_vec(),
        );
        assert_eq!(
            encode_targets(&ex(&["Water"]), &issues).unwrap(),
            Target::MultiHot(vec![1.0, 0.0, 0.0])
        );
        assert_eq!(
            encode_targets(&ex(&[]), &issues).unwrap(),
            Target::MultiHot(vec![0.0; 3])
        );
        assert!(matches!(
            encode_targets(&ex(&["Air"]), &issues),
            Err(DatasetError::UnknownLabel(_))
        ));

        let sic = LabelSpace::new(Task::Sic2, ["10", "13", "60"].map(String::from).to_vec());
        assert_eq!(
            encode_targets(&ex(&["60"]), &sic).unwrap(),
            Target::Index(2)
        );
        assert!(encode_targets(&ex(&["10", "13"]), &sic).is_err());
        assert!(encode_targets(&ex(&[]), &sic).is_err());
        let t = encode_targets(&ex(&["13"]), &sic).unwrap();
        assert_eq!(decode_targets(&t, &sic), ex(&["13"]).labels);
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = LabeledDataset {
            label_space: LabelSpace::new(Task::Sic2, vec!["10".into(), "60".into()]),
            examples: vec![
                Example {
                    split: Some(Split::Train),
                    ..ex(&["10"])
                },
                Example {
                    org_id: "p".into(),
                    split: Some(Split::Test),
                    ..ex(&["60"])
                },
            ],
            provenance: Provenance {
                seed: Some(3),
                ..Default::default()
            },
        };
        ds.save(dir.path()).unwrap();
        let back = LabeledDataset::load(dir.path()).unwrap();
        assert_eq!(back, ds);
        let line = std::fs::read_to_string(dir.path().join(DATASET_FILE)).unwrap();
        assert!(line.starts_with(r#"{"org_id":"o","text":"t","labels":["10"],"split":"train"}"#));
    }
}
