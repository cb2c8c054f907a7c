use std::collections::{BTreeMap, BTreeSet};

use chrono::{TimeZone, Utc};
use orgclass::datasets::{
    build_env_dataset, build_sic_dataset, decode_targets, encode_targets, split_dataset,
    DatasetError, LabeledDataset, SicBuildConfig, Split, SplitSizes, Task, TextSource,
};
use orgclass::fsutil;
use orgclass::ingestion::{CompanyRecord, PseudoDoc};
use orgclass::taxonomy::{ComponentIssue, IntegratedIssue, IssueTaxonomy, IssuesFile};
use proptest::prelude::*;

fn company(cik: u64, sic: &str, text: &str) -> CompanyRecord {
    CompanyRecord {
        cik,
        name: format!("Company {cik}"),
        sic: sic.to_string(),
        sic_description: format!("Industry {sic}"),
        filing_url: Some(format!(
            "https://www.sec.gov/Archives/edgar/data/{cik}/10k.htm"
        )),
        filing_date: Some("2023-03-01".into()),
        filing_text: text.to_string(),
        complete: true,
    }
}

/// `sizes[i]` companies in major group `10 + i`.
fn table(sizes: &[usize]) -> Vec<CompanyRecord> {
    let mut out = Vec::new();
    let mut cik = 1000;
    for (i, &n) in sizes.iter().enumerate() {
        for j in 0..n {
            cik += 1;
            let group = 10 + i;
            out.push(company(
                cik,
                &format!("{group}{:02}", j % 100),
                &format!("business of {cik} in {group}"),
            ));
        }
    }
    out
}

fn sic(sizes: &[usize], per_class: usize, seed: u64) -> LabeledDataset {
    let cfg = SicBuildConfig {
        per_class,
        min_class: per_class,
        seed,
    };
    build_sic_dataset(&table(sizes), TextSource::Item1, cfg).unwrap()
}

fn bytes(ds: &LabeledDataset) -> Vec<u8> {
    fsutil::to_jsonl(&ds.examples).unwrap()
}

#[test]
fn keeps_exactly_the_large_classes() {
    let sizes = [150, 199, 200, 201, 400, 120, 260];
    let ds = sic(&sizes, 200, 7);
    assert_eq!(ds.label_space.labels, vec!["12", "13", "14", "16"]);
    let mut per: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &ds.examples {
        *per.entry(e.labels.iter().next().unwrap()).or_default() += 1;
    }
    assert!(per.values().all(|&c| c == 200));
    assert_eq!(ds.provenance.seed, Some(7));
}

#[test]
fn same_seed_same_bytes_other_seed_other_sample() {
    let sizes = [220, 300, 250];
    assert_eq!(bytes(&sic(&sizes, 200, 3)), bytes(&sic(&sizes, 200, 3)));
    assert_ne!(bytes(&sic(&sizes, 200, 3)), bytes(&sic(&sizes, 200, 4)));
}

#[test]
fn empty_texts_are_dropped_before_sampling() {
    let mut companies = table(&[205, 205]);
    for c in companies.iter_mut().take(5) {
        c.filing_text.clear();
    }
    let ds = build_sic_dataset(&companies, TextSource::Item1, SicBuildConfig::default()).unwrap();
    assert_eq!(ds.examples.len(), 400);
    assert!(ds.examples.iter().all(|e| !e.text.is_empty()));

    for c in companies.iter_mut().take(10) {
        c.filing_text.clear();
    }
    let err =
        build_sic_dataset(&companies, TextSource::Item1, SicBuildConfig::default()).unwrap_err();
    assert!(
        matches!(err, DatasetError::InsufficientClass { .. }),
        "{err}"
    );
}

#[test]
fn pseudodocs_replace_filing_text() {
    let companies = table(&[3]);
    let docs: BTreeMap<String, PseudoDoc> = companies
        .iter()
        .map(|c| {
            let doc = PseudoDoc {
                org_id: c.cik.to_string(),
                query: c.name.clone(),
                retrieved_at: Utc.timestamp_opt(0, 0).unwrap(),
                results: Vec::new(),
                text: format!("snippets for {}", c.cik),
                usable: true,
            };
            (doc.org_id.clone(), doc)
        })
        .collect();
    let cfg = SicBuildConfig {
        per_class: 3,
        min_class: 3,
        seed: 0,
    };
    let ds = build_sic_dataset(&companies, TextSource::PseudoDocs(&docs), cfg).unwrap();
    assert!(ds
        .examples
        .iter()
        .all(|e| e.text.starts_with("snippets for")));
}

#[test]
fn stratified_split_is_exact_when_divisible() {
    let ds = sic(&[40, 40, 40, 40], 30, 1);
    let split = split_dataset(&ds, SplitSizes::new(60, 20, 40), 9).unwrap();
    for label in &split.label_space.labels {
        for (s, want) in [(Split::Train, 15), (Split::Dev, 5), (Split::Test, 10)] {
            let got = split.split(s).filter(|e| e.labels.contains(label)).count();
            assert_eq!(got, want, "{label} {s}");
        }
    }
}

#[test]
fn split_size_mismatch_is_an_error() {
    let ds = sic(&[40], 30, 1);
    let err = split_dataset(&ds, SplitSizes::new(10, 10, 5), 0).unwrap_err();
    assert!(matches!(
        err,
        DatasetError::SplitMismatch {
            requested: 25,
            available: 30
        }
    ));
}

fn env_taxonomy() -> IssueTaxonomy {
    let integrated = ["Air", "Water", "Soil", "Energy"]
        .iter()
        .map(|n| IntegratedIssue {
            name: n.to_string(),
            description: format!("{n} issues"),
        })
        .collect();
    let comp = |name: &str, parents: &[&str]| ComponentIssue {
        name: name.into(),
        parents: parents.iter().map(|p| p.to_string()).collect(),
    };
    IssueTaxonomy::from_file(IssuesFile {
        integrated,
        components: vec![
            comp("smog", &["Air"]),
            comp("runoff", &["Water", "Soil"]),
            comp("erosion", &["Soil"]),
            comp("solar", &["Energy"]),
        ],
    })
    .unwrap()
}

fn doc(id: &str, text: &str) -> (String, PseudoDoc) {
    (
        id.to_string(),
        PseudoDoc {
            org_id: id.into(),
            query: id.into(),
            retrieved_at: Utc.timestamp_opt(0, 0).unwrap(),
            results: Vec::new(),
            text: text.into(),
            usable: !text.is_empty(),
        },
    )
}

#[test]
fn env_dataset_lifts_components_and_filters() {
    let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    let orgs = BTreeMap::from([
        ("a".to_string(), set(&["runoff"])),
        ("b".to_string(), set(&["erosion", "smog"])),
        ("c".to_string(), set(&["solar"])),
        ("d".to_string(), set(&["runoff"])),
    ]);
    let docs = BTreeMap::from([
        doc("a", "farm runoff"),
        doc("b", "dust"),
        doc("c", "panels"),
        doc("d", ""),
    ]);
    let ds = build_env_dataset(&orgs, &env_taxonomy(), &docs, 2).unwrap();
    assert_eq!(ds.label_space.labels, vec!["Soil", "Water"]);
    let ids: Vec<&str> = ds.examples.iter().map(|e| e.org_id.as_str()).collect();
    assert_eq!(ids, vec!["a", "b"]);
    assert_eq!(ds.examples[0].labels, set(&["Soil", "Water"]));
    assert_eq!(ds.examples[1].labels, set(&["Soil"]));
    assert_eq!(ds.provenance.counts["excluded_no_in_space_label"], 1);
    assert_eq!(ds.provenance.counts["excluded_no_usable_text"], 1);
}

#[test]
fn save_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = split_dataset(&sic(&[12, 12], 10, 2), SplitSizes::new(10, 4, 6), 2).unwrap();
    ds.save(dir.path()).unwrap();
    let back = LabeledDataset::load(dir.path()).unwrap();
    assert_eq!(back, ds);
    assert_eq!(
        back.provenance_hash().unwrap(),
        ds.provenance_hash().unwrap()
    );
}

fn multilabel(n_orgs: usize, seed: u64) -> LabeledDataset {
    let labels: Vec<String> = (0..5).map(|i| format!("L{i}")).collect();
    let mut rng = orgclass::datasets::DatasetRng::new(seed);
    let examples = (0..n_orgs)
        .map(|i| {
            let mut ls = BTreeSet::new();
            ls.insert(labels[rng.below(5) as usize].clone());
            if rng.below(2) == 0 {
                ls.insert(labels[rng.below(5) as usize].clone());
            }
            orgclass::datasets::Example {
                org_id: format!("org{i:03}"),
                text: format!("text {i}"),
                labels: ls,
                split: None,
            }
        })
        .collect();
    LabeledDataset {
        label_space: orgclass::datasets::LabelSpace::new(Task::Issues, labels),
        examples,
        provenance: Default::default(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn splits_partition_the_examples(n in 3usize..80, dev_frac in 0.0f64..0.4, seed in any::<u64>()) {
        let ds = multilabel(n, seed);
        let dev = (n as f64 * dev_frac) as usize;
        let test = (n - dev) / 3;
        let sizes = SplitSizes::new(n - dev - test, dev, test);
        let split = split_dataset(&ds, sizes, seed).unwrap();
        prop_assert_eq!(split.split_len(Split::Train), sizes.train);
        prop_assert_eq!(split.split_len(Split::Dev), sizes.dev);
        prop_assert_eq!(split.split_len(Split::Test), sizes.test);
        let ids: BTreeSet<&str> = split.examples.iter().map(|e| e.org_id.as_str()).collect();
        prop_assert_eq!(ids.len(), n);
        prop_assert!(split.examples.iter().all(|e| e.split.is_some()));
        let again = split_dataset(&ds, sizes, seed).unwrap();
        prop_assert_eq!(split.provenance_hash().unwrap(), again.provenance_hash().unwrap());
        prop_assert_eq!(bytes(&split), bytes(&again));
    }

    #[test]
    fn targets_round_trip(n in 1usize..30, seed in any::<u64>()) {
        let ds = multilabel(n, seed);
        for e in &ds.examples {
            let t = encode_targets(e, &ds.label_space).unwrap();
            prop_assert_eq!(decode_targets(&t, &ds.label_space), e.labels.clone());
        }
    }

    #[test]
    fn sic_sampling_is_seed_deterministic(extra in proptest::collection::vec(0usize..40, 2..5), seed in any::<u64>()) {
        let sizes: Vec<usize> = extra.iter().map(|x| 20 + x).collect();
        let a = sic(&sizes, 20, seed);
        let b = sic(&sizes, 20, seed);
        prop_assert_eq!(bytes(&a), bytes(&b));
        prop_assert_eq!(a.provenance_hash().unwrap(), b.provenance_hash().unwrap());
        prop_assert_eq!(a.examples.len(), 20 * sizes.len());
    }
}
