use std::collections::BTreeMap;

use serde_json::json;

use super::rng::DatasetRng;
use super::{DatasetError, LabeledDataset, Result, Split, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn new(train: usize, dev: usize, test: usize) -> Self {
        Self { train, dev, test }
    }

    pub fn total(&self) -> usize {
        self.train + self.dev + self.test
    }

    fn targets(&self) -> [(Split, usize); 3] {
        [
            (Split::Train, self.train),
            (Split::Dev, self.dev),
            (Split::Test, self.test),
        ]
    }
}

/// Assigns every example a split. Issues datasets get a seeded permutation
/// with contiguous assignment; SIC datasets are stratified by class.
pub fn split_dataset(ds: &LabeledDataset, sizes: SplitSizes, seed: u64) -> Result<LabeledDataset> {
    let n = ds.examples.len();
    if sizes.total() != n {
        return Err(DatasetError::SplitMismatch {
            requested: sizes.total(),
            available: n,
        });
    }
    let mut rng = DatasetRng::new(seed);
    let order: Vec<usize> = match ds.label_space.task {
        Task::Issues => {
            let mut idx: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut idx);
            idx
        }
        Task::Sic2 => {
            let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, e) in ds.examples.iter().enumerate() {
                let class = e.labels.iter().next().map(String::as_str).unwrap_or("");
                by_class.entry(class).or_default().push(i);
            }
            let mut idx = Vec::with_capacity(n);
            for members in by_class.values_mut() {
                rng.shuffle(members);
                idx.extend_from_slice(members);
            }
            idx
        }
    };
    let pattern = match ds.label_space.task {
        Task::Issues => contiguous(sizes),
        Task::Sic2 => interleaved(sizes),
    };

    let mut out = ds.clone();
    for (&i, split) in order.iter().zip(pattern) {
        out.examples[i].split = Some(split);
    }
    out.provenance.params.insert(
        "split".into(),
        json!({
            "train": sizes.train,
            "dev": sizes.dev,
            "test": sizes.test,
            "seed": seed,
            "stratified": ds.label_space.task == Task::Sic2,
        }),
    );
    Ok(out)
}

fn contiguous(sizes: SplitSizes) -> Vec<Split> {
    sizes
        .targets()
        .into_iter()
        .flat_map(|(s, k)| std::iter::repeat_n(s, k))
        .collect()
}

/// Evenly interleaved split sequence: position `i` goes to the split whose
/// running count lags furthest behind its target share. Each contiguous run
/// of the sequence (one class) therefore receives counts within one of its
/// proportional share, and exactly the share when it is integral.
fn interleaved(sizes: SplitSizes) -> Vec<Split> {
    let total = sizes.total();
    let targets = sizes.targets();
    let mut taken = [0usize; 3];
    let mut out = Vec::with_capacity(total);
    for i in 1..=total {
        let (best, _) = targets
            .iter()
            .enumerate()
            .filter(|(j, (_, k))| taken[*j] < *k)
            .map(|(j, (_, k))| (j, (*k * i) as i128 - (taken[j] * total) as i128))
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .expect("a split with remaining capacity");
        taken[best] += 1;
        out.push(targets[best].0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{Example, LabelSpace, Provenance};
    use std::collections::BTreeSet;

    fn sic(classes: usize, per: usize) -> LabeledDataset {
        let labels: Vec<String> = (10..10 + classes).map(|c| c.to_string()).collect();
        let examples = labels
            .iter()
            .flat_map(|l| {
                (0..per).map(move |i| Example {
                    org_id: format!("{l}-{i}"),
                    text: "x".into(),
                    labels: BTreeSet::from([l.clone()]),
                    split: None,
                })
            })
            .collect();
        LabeledDataset {
            label_space: LabelSpace::new(Task::Sic2, labels),
            examples,
            provenance: Provenance::default(),
        }
    }

    #[test]
    fn stratified_exact_when_divisible() {
        let ds = split_dataset(&sic(5, 12), SplitSizes::new(30, 10, 20), 1).unwrap();
        for class in &ds.label_space.labels {
            let count = |s| ds.split(s).filter(|e| e.labels.contains(class)).count();
            assert_eq!(
                [count(Split::Train), count(Split::Dev), count(Split::Test)],
                [6, 2, 4]
            );
        }
    }

    #[test]
    fn rejects_size_mismatch() {
        let mut ds = sic(1, 14);
        ds.label_space.task = Task::Issues;
        assert!(matches!(
            split_dataset(&ds, SplitSizes::new(10, 0, 5), 0),
            Err(DatasetError::SplitMismatch {
                requested: 15,
                available: 14
            })
        ));
    }

    #[test]
    fn interleave_hits_totals() {
        let seq = interleaved(SplitSizes::new(2700, 900, 1800));
        let c = |s| seq.iter().filter(|&&x| x == s).count();
        assert_eq!(
            (c(Split::Train), c(Split::Dev), c(Split::Test)),
            (2700, 900, 1800)
        );
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn every_prefix_within_one_of_share(a in 0usize..60, b in 0usize..60, c in 1usize..60) {
            let sizes = SplitSizes::new(a, b, c);
            let total = sizes.total();
            let seq = interleaved(sizes);
            let mut taken = [0usize; 3];
            for (i, s) in seq.iter().enumerate() {
                taken[*s as usize] += 1;
                for (j, (_, k)) in sizes.targets().iter().enumerate() {
                    let ideal = (*k * (i + 1)) as f64 / total as f64;
                    prop_assert!((taken[j] as f64 - ideal).abs() < 1.0, "prefix {} split {} taken {} ideal {}", i + 1, j, taken[j], ideal);
                }
            }
        }
    }
}

#[cfg(test)]
mod full_scale {
    use super::*;

    #[test]
    fn per_class_counts_at_full_size() {
        let seq = interleaved(SplitSizes::new(2700, 900, 1800));
        for class in seq.chunks(200) {
            let c = |s| class.iter().filter(|&&x| x == s).count();
            assert_eq!(c(Split::Train), 100);
            assert!((33..=34).contains(&c(Split::Dev)), "{}", c(Split::Dev));
            assert!((66..=67).contains(&c(Split::Test)));
        }
    }
}
