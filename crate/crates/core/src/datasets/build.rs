use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;

use super::rng::{DatasetRng, RNG_NAME};
use super::{DatasetError, Example, LabelSpace, LabeledDataset, Provenance, Result, Task};
use crate::ingestion::{CompanyRecord, PseudoDoc};
use crate::taxonomy::{select_top_issues, IssueTaxonomy};

/// Environmental-issue dataset: components are lifted to integrated issues,
/// the `k` most frequent integrated issues form the label space, and orgs
/// without an in-space label or without a usable pseudo-document are dropped.
pub fn build_env_dataset(
    ppod_orgs: &BTreeMap<String, BTreeSet<String>>,
    tax: &IssueTaxonomy,
    pseudodocs: &BTreeMap<String, PseudoDoc>,
    k: usize,
) -> Result<LabeledDataset> {
    let mut integrated = BTreeMap::new();
    for (org, components) in ppod_orgs {
        let labels = tax.integrated_labels_for(components.iter().map(String::as_str))?;
        integrated.insert(org.clone(), labels);
    }
    let labels = select_top_issues(&integrated, k)?;
    let space: BTreeSet<&str> = labels.iter().map(String::as_str).collect();

    let mut out_of_space = 0usize;
    let mut no_text = 0usize;
    let mut examples = Vec::new();
    for (org, org_labels) in &integrated {
        let kept: BTreeSet<String> = org_labels
            .iter()
            .filter(|l| space.contains(l.as_str()))
            .cloned()
            .collect();
        if kept.is_empty() {
            out_of_space += 1;
            continue;
        }
        match pseudodocs.get(org) {
            Some(doc) if doc.usable && !doc.text.trim().is_empty() => examples.push(Example {
                org_id: org.clone(),
                text: doc.text.clone(),
                labels: kept,
                split: None,
            }),
            _ => no_text += 1,
        }
    }
    if no_text > 0 {
        log::warn!("excluded {no_text} labeled organizations without a usable pseudo-document");
    }

    let provenance = Provenance {
        builder: "env-issues/v1".into(),
        rng: String::new(),
        seed: None,
        params: BTreeMap::from([("k".to_string(), json!(k))]),
        counts: BTreeMap::from([
            ("organizations".to_string(), ppod_orgs.len()),
            ("excluded_no_in_space_label".to_string(), out_of_space),
            ("excluded_no_usable_text".to_string(), no_text),
            ("examples".to_string(), examples.len()),
        ]),
    };
    Ok(LabeledDataset {
        label_space: LabelSpace::new(Task::Issues, labels),
        examples,
        provenance,
    })
}

/// Where SIC example text comes from.
#[derive(Debug, Clone, Copy)]
pub enum TextSource<'a> {
    /// Item 1 text stored on each company record.
    Item1,
    /// Pseudo-documents keyed by CIK (as a decimal string).
    PseudoDocs(&'a BTreeMap<String, PseudoDoc>),
}

impl TextSource<'_> {
    fn name(&self) -> &'static str {
        match self {
            TextSource::Item1 => "item1",
            TextSource::PseudoDocs(_) => "pseudodoc",
        }
    }

    fn text_for<'c>(&'c self, company: &'c CompanyRecord) -> Option<&'c str> {
        let text = match self {
            TextSource::Item1 => company.filing_text.as_str(),
            TextSource::PseudoDocs(docs) => {
                let doc = docs.get(&company.cik.to_string())?;
                if !doc.usable {
                    return None;
                }
                doc.text.as_str()
            }
        };
        (!text.trim().is_empty()).then_some(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SicBuildConfig {
    pub per_class: usize,
    pub min_class: usize,
    pub seed: u64,
}

impl Default for SicBuildConfig {
    fn default() -> Self {
        Self {
            per_class: 200,
            min_class: 200,
            seed: 0,
        }
    }
}

/// Balanced 2-digit SIC dataset. Class membership is decided on complete
/// records; texts are filtered for emptiness before sampling.
pub fn build_sic_dataset(
    companies: &[CompanyRecord],
    source: TextSource<'_>,
    cfg: SicBuildConfig,
) -> Result<LabeledDataset> {
    let mut by_cik: BTreeMap<u64, &CompanyRecord> = BTreeMap::new();
    let mut incomplete = 0usize;
    for c in companies {
        if c.is_complete() {
            by_cik.entry(c.cik).or_insert(c);
        } else {
            incomplete += 1;
        }
    }
    let mut groups: BTreeMap<&str, Vec<&CompanyRecord>> = BTreeMap::new();
    for c in by_cik.values() {
        if let Some(g) = c.major_group() {
            groups.entry(g).or_default().push(c);
        }
    }

    let kept: Vec<(&str, Vec<&CompanyRecord>)> = groups
        .iter()
        .filter(|(_, members)| members.len() >= cfg.min_class)
        .map(|(g, members)| {
            let usable = members
                .iter()
                .copied()
                .filter(|c| source.text_for(c).is_some())
                .collect();
            (*g, usable)
        })
        .collect();
    let short: Vec<String> = kept
        .iter()
        .filter(|(_, usable)| usable.len() < cfg.per_class)
        .map(|(g, usable)| format!("{g} ({} usable)", usable.len()))
        .collect();
    if !short.is_empty() {
        return Err(DatasetError::InsufficientClass {
            needed: cfg.per_class,
            classes: short,
        });
    }

    let mut rng = DatasetRng::new(cfg.seed);
    let mut examples = Vec::with_capacity(kept.len() * cfg.per_class);
    let mut empty_text = 0usize;
    for (group, usable) in &kept {
        empty_text += groups[group].len() - usable.len();
        let mut picked = rng.sample_indices(usable.len(), cfg.per_class);
        picked.sort_unstable();
        for i in picked {
            let c = usable[i];
            examples.push(Example {
                org_id: c.cik.to_string(),
                text: source.text_for(c).unwrap_or_default().to_string(),
                labels: BTreeSet::from([group.to_string()]),
                split: None,
            });
        }
    }

    let provenance = Provenance {
        builder: "sic2/v1".into(),
        rng: RNG_NAME.into(),
        seed: Some(cfg.seed),
        params: BTreeMap::from([
            ("per_class".to_string(), json!(cfg.per_class)),
            ("min_class".to_string(), json!(cfg.min_class)),
            ("text_source".to_string(), json!(source.name())),
            ("empty_text_filter".to_string(), json!("before_sampling")),
        ]),
        counts: BTreeMap::from([
            ("records".to_string(), companies.len()),
            ("excluded_incomplete".to_string(), incomplete),
            ("complete_companies".to_string(), by_cik.len()),
            ("candidate_classes".to_string(), groups.len()),
            ("kept_classes".to_string(), kept.len()),
            ("kept_class_empty_text".to_string(), empty_text),
            ("examples".to_string(), examples.len()),
        ]),
    };
    Ok(LabeledDataset {
        label_space: LabelSpace::new(
            Task::Sic2,
            kept.iter().map(|(g, _)| g.to_string()).collect(),
        ),
        examples,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{ComponentIssue, IntegratedIssue, IssuesFile};

    fn company(cik: u64, sic: &str, text: &str) -> CompanyRecord {
        CompanyRecord {
            cik,
            name: format!("Co {cik}"),
            sic: sic.into(),
            sic_description: "desc".into(),
            filing_url: Some("https://example.test/f.htm".into()),
            filing_date: Some("2022-01-01".into()),
            filing_text: text.into(),
            complete: true,
        }
    }

    fn doc(org: &str, usable: bool) -> PseudoDoc {
        PseudoDoc {
            org_id: org.into(),
            query: org.into(),
            retrieved_at: chrono::DateTime::UNIX_EPOCH,
            results: vec![],
            text: if usable {
                format!("about {org}")
            } else {
                String::new()
            },
            usable,
        }
    }

    fn taxonomy() -> IssueTaxonomy {
        let integrated = ["Water", "Air & Climate", "Energy"]
            .map(|n| IntegratedIssue {
                name: n.into(),
                description: format!("{n} topics"),
            })
            .to_vec();
        let comp = |n: &str, p: &[&str]| ComponentIssue {
            name: n.into(),
            parents: p.iter().map(|s| s.to_string()).collect(),
        };
        IssueTaxonomy::from_file(IssuesFile {
            integrated,
            components: vec![
                comp("Rivers", &["Water"]),
                comp("Carbon", &["Air & Climate", "Energy"]),
                comp("Smog", &["Air & Climate"]),
                comp("Solar", &["Energy"]),
            ],
        })
        .unwrap()
    }

    #[test]
    fn env_dataset_filters_and_lifts() {
        let orgs: BTreeMap<String, BTreeSet<String>> = [
            ("a", vec!["Rivers"]),
            ("b", vec!["Rivers", "Smog"]),
            ("c", vec!["Carbon"]),
            ("d", vec!["Solar"]),
            ("e", vec!["Rivers"]),
            ("f", vec!["Smog"]),
        ]
        .into_iter()
        .map(|(o, cs)| (o.to_string(), cs.into_iter().map(String::from).collect()))
        .collect();
        let docs: BTreeMap<String, PseudoDoc> = ["a", "b", "c", "d", "f"]
            .into_iter()
            .map(|o| (o.to_string(), doc(o, o != "f")))
            .collect();
        // Water 3, Air & Climate 3, Energy 2 -> k=2 keeps the first two.
        let ds = build_env_dataset(&orgs, &taxonomy(), &docs, 2).unwrap();
        assert_eq!(ds.label_space.labels, ["Air & Climate", "Water"]);
        let ids: Vec<&str> = ds.examples.iter().map(|e| e.org_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(ds.examples[1].labels.len(), 2);
        assert_eq!(ds.provenance.counts["excluded_no_in_space_label"], 1);
        assert_eq!(ds.provenance.counts["excluded_no_usable_text"], 2);
    }

    #[test]
    fn sic_threshold_and_sampling() {
        let mut cs = Vec::new();
        for i in 0..5 {
            cs.push(company(100 + i, "1311", "oil"));
        }
        for i in 0..4 {
            cs.push(company(200 + i, "6021", "bank"));
        }
        let mut broken = company(300, "2834", "drugs");
        broken.filing_url = None;
        cs.push(broken);
        let cfg = SicBuildConfig {
            per_class: 3,
            min_class: 5,
            seed: 9,
        };
        let ds = build_sic_dataset(&cs, TextSource::Item1, cfg).unwrap();
        assert_eq!(ds.label_space.labels, ["13"]);
        assert_eq!(ds.examples.len(), 3);
        assert_eq!(ds.provenance.counts["excluded_incomplete"], 1);
        assert_eq!(ds, build_sic_dataset(&cs, TextSource::Item1, cfg).unwrap());
    }

    #[test]
    fn sic_reports_short_classes() {
        let mut cs: Vec<_> = (0..5).map(|i| company(i, "1311", "")).collect();
        cs[0].filing_text = "text".into();
        let cfg = SicBuildConfig {
            per_class: 2,
            min_class: 5,
            seed: 0,
        };
        let err = build_sic_dataset(&cs, TextSource::Item1, cfg).unwrap_err();
        assert!(err.to_string().contains("13 (1 usable)"), "{err}");
    }
}
