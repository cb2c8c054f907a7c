//! Label spaces: the environmental-issue taxonomy and the SIC hierarchy.

mod issues;
mod sic;

pub use issues::{
    label_counts, select_top_issues, ComponentIssue, IntegratedIssue, IssueTaxonomy, IssuesFile,
};
pub use sic::{code_prefix, SicEntry, SicHierarchy, SicLevel, SicNode};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("component issue {component:?} references unknown integrated issue {parent:?}")]
    DanglingParent { component: String, parent: String },
    #[error("component issue {0:?} has no parent integrated issue")]
    NoParents(String),
    #[error("duplicate entry {0:?}")]
    Duplicate(String),
    #[error("{0:?} has an empty description or title")]
    EmptyText(String),
    #[error("unknown component issue {0:?}")]
    UnknownComponent(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("requested {k} labels but only {available} distinct labels exist")]
    NotEnoughLabels { k: usize, available: usize },
    #[error("SIC code {0:?} has no parent code in the hierarchy")]
    OrphanCode(String),
    #[error("SIC code {0:?} not found")]
    CodeNotFound(String),
    #[error("invalid SIC code {0:?}")]
    InvalidCode(String),
    #[error("prefix length {0} is outside 1..=4")]
    InvalidPrefixLength(usize),
    #[error("SIC entry {code:?} declares level {declared} but its code implies {implied}")]
    LevelMismatch {
        code: String,
        declared: SicLevel,
        implied: SicLevel,
    },
    #[error("no long description available for: {}", .0.join(", "))]
    MissingLongText(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TaxonomyError>;

/// How a label is rendered into text for pair-scoring models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptionStyle {
    /// The label's own title.
    Short,
    /// The title followed by every title in the label's subtree.
    Tree,
    /// Free-text prose for the label.
    Long,
}

impl fmt::Display for DescriptionStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DescriptionStyle::Short => "short",
            DescriptionStyle::Tree => "tree",
            DescriptionStyle::Long => "long",
        })
    }
}

impl FromStr for DescriptionStyle {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "short" => Ok(DescriptionStyle::Short),
            "tree" => Ok(DescriptionStyle::Tree),
            "long" => Ok(DescriptionStyle::Long),
            other => Err(format!("unknown description style {other:?}")),
        }
    }
}

/// Separator used when concatenating titles for [`DescriptionStyle::Tree`].
pub const TREE_SEPARATOR: &str = "; ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDescription {
    pub label: String,
    pub style: DescriptionStyle,
    pub text: String,
}

/// Anything that can render its labels as text.
pub trait LabelSource {
    fn describe(&self, label: &str, style: DescriptionStyle) -> Result<LabelDescription>;

    /// Describes every label in order. For [`DescriptionStyle::Long`] all
    /// labels lacking prose are collected into a single error.
    fn describe_all(
        &self,
        labels: &[String],
        style: DescriptionStyle,
    ) -> Result<Vec<LabelDescription>> {
        let mut out = Vec::with_capacity(labels.len());
        let mut missing = Vec::new();
        for label in labels {
            match self.describe(label, style) {
                Ok(d) => out.push(d),
                Err(TaxonomyError::MissingLongText(mut m)) => missing.append(&mut m),
                Err(e) => return Err(e),
            }
        }
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(TaxonomyError::MissingLongText(missing))
        }
    }
}
