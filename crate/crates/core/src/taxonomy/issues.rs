use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    DescriptionStyle, LabelDescription, LabelSource, Result, TaxonomyError, TREE_SEPARATOR,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegratedIssue {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentIssue {
    pub name: String,
    pub parents: BTreeSet<String>,
}

/// On-disk layout of `taxonomy/issues.json`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IssuesFile {
    pub integrated: Vec<IntegratedIssue>,
    #[serde(default)]
    pub components: Vec<ComponentIssue>,
}

/// Integrated issues plus the many-to-many component mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IssueTaxonomy {
    integrated: BTreeMap<String, IntegratedIssue>,
    components: BTreeMap<String, ComponentIssue>,
}

impl IssueTaxonomy {
    pub fn from_file(file: IssuesFile) -> Result<Self> {
        let mut integrated = BTreeMap::new();
        for issue in file.integrated {
            if issue.name.trim().is_empty() || issue.description.trim().is_empty() {
                return Err(TaxonomyError::EmptyText(issue.name));
            }
            if integrated.contains_key(&issue.name) {
                return Err(TaxonomyError::Duplicate(issue.name));
            }
            integrated.insert(issue.name.clone(), issue);
        }
        let mut components = BTreeMap::new();
        for comp in file.components {
            if comp.parents.is_empty() {
                return Err(TaxonomyError::NoParents(comp.name));
            }
            if let Some(parent) = comp.parents.iter().find(|p| !integrated.contains_key(*p)) {
                return Err(TaxonomyError::DanglingParent {
                    component: comp.name.clone(),
                    parent: parent.clone(),
                });
            }
            if components.contains_key(&comp.name) {
                return Err(TaxonomyError::Duplicate(comp.name));
            }
            components.insert(comp.name.clone(), comp);
        }
        Ok(Self {
            integrated,
            components,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_file(serde_json::from_slice(&bytes)?)
    }

    pub fn to_file(&self) -> IssuesFile {
        IssuesFile {
            integrated: self.integrated.values().cloned().collect(),
            components: self.components.values().cloned().collect(),
        }
    }

    pub fn integrated(&self) -> impl Iterator<Item = &IntegratedIssue> {
        self.integrated.values()
    }

    pub fn components(&self) -> impl Iterator<Item = &ComponentIssue> {
        self.components.values()
    }

    pub fn integrated_issue(&self, name: &str) -> Option<&IntegratedIssue> {
        self.integrated.get(name)
    }

    pub fn parents_of(&self, component: &str) -> Result<&BTreeSet<String>> {
        self.components
            .get(component)
            .map(|c| &c.parents)
            .ok_or_else(|| TaxonomyError::UnknownComponent(component.to_string()))
    }

    /// Union of the parent sets of `components`.
    pub fn integrated_labels_for<'a, I>(&self, components: I) -> Result<BTreeSet<String>>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut out = BTreeSet::new();
        for c in components {
            out.extend(self.parents_of(c)?.iter().cloned());
        }
        Ok(out)
    }
}

/// Counts how many organizations carry each label, ordered by descending
/// count and then ascending name.
pub fn label_counts(org_labels: &BTreeMap<String, BTreeSet<String>>) -> Vec<(String, usize)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for labels in org_labels.values() {
        for l in labels {
            *counts.entry(l.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .map(|(l, c)| (l.to_string(), c))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// The `k` labels associated with the most organizations.
pub fn select_top_issues(
    org_labels: &BTreeMap<String, BTreeSet<String>>,
    k: usize,
) -> Result<Vec<String>> {
    let ranked = label_counts(org_labels);
    if k > ranked.len() {
        return Err(TaxonomyError::NotEnoughLabels {
            k,
            available: ranked.len(),
        });
    }
    Ok(ranked.into_iter().take(k).map(|(l, _)| l).collect())
}

impl LabelSource for IssueTaxonomy {
    fn describe(&self, label: &str, style: DescriptionStyle) -> Result<LabelDescription> {
        let issue = self
            .integrated
            .get(label)
            .ok_or_else(|| TaxonomyError::UnknownLabel(label.to_string()))?;
        let text = match style {
            DescriptionStyle::Short => issue.name.clone(),
            // the issue taxonomy is one level deep: the subtree is the set of
            // component issues mapped onto this integrated issue
            DescriptionStyle::Tree => std::iter::once(issue.name.as_str())
                .chain(
                    self.components
                        .values()
                        .filter(|c| c.parents.contains(label))
                        .map(|c| c.name.as_str()),
                )
                .collect::<Vec<_>>()
                .join(TREE_SEPARATOR),
            DescriptionStyle::Long => issue.description.clone(),
        };
        Ok(LabelDescription {
            label: label.to_string(),
            style,
            text,
        })
    }
}
