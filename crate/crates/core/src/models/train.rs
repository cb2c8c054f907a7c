use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::head::{loss_and_grad, LinearHead};
use super::{
    check_threshold, Architecture, EncoderConfig, Model, ModelError, ModelMeta, Result, TaskMode,
    TextEncoder, TrainConfig,
};
use crate::datasets::{encode_targets, DatasetRng, Example, LabeledDataset, Split, Target};
use crate::metrics::{report_from_sets, MacroF1Mode};
use crate::taxonomy::DescriptionStyle;

/// What to train, independent of the data.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub threshold: f64,
    pub encoder: EncoderConfig,
    /// Pair scorer only: the style and the label descriptions in
    /// label-space order.
    pub descriptions: Option<(DescriptionStyle, Vec<String>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_macro_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub train_examples: usize,
    /// Loss rows per epoch: examples for the linear head, examples × n for
    /// the pair scorer.
    pub rows_per_epoch: usize,
    pub epochs: Vec<EpochLog>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
}

/// Trains the head on a frozen encoder with mini-batch AdamW.
pub fn train_frozen(
    encoder: Arc<dyn TextEncoder>,
    spec: &ModelSpec,
    dataset: &LabeledDataset,
    config: &TrainConfig,
) -> Result<(Model, TrainLog)> {
    let space = &dataset.label_space;
    let mode = TaskMode::from(space.task);
    config.validate(spec.architecture, mode)?;
    check_threshold(spec.threshold)?;
    if encoder.dim() != spec.encoder.hidden_size {
        return Err(ModelError::DimensionMismatch {
            what: "encoder dimension",
            expected: spec.encoder.hidden_size,
            got: encoder.dim(),
        });
    }
    let descriptions = match (spec.architecture, &spec.descriptions) {
        (Architecture::OrgModel1, _) => None,
        (Architecture::OrgModel2, Some((_, d))) if d.len() == space.n() => Some(d.as_slice()),
        (Architecture::OrgModel2, d) => {
            return Err(ModelError::DescriptionCount {
                expected: space.n(),
                got: d.as_ref().map_or(0, |(_, d)| d.len()),
            })
        }
    };

    let train: Vec<&Example> = dataset.split(Split::Train).collect();
    if train.is_empty() {
        return Err(ModelError::EmptyTrainSplit);
    }
    let dev: Vec<&Example> = dataset.split(Split::Dev).collect();
    let targets = train
        .iter()
        .map(|e| encode_targets(e, space))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let outputs = match spec.architecture {
        Architecture::OrgModel1 => space.n(),
        Architecture::OrgModel2 => 1,
    };
    let rows = Rows::new(encoder.as_ref(), &train, &targets, descriptions, space.n())?;
    let mut head = LinearHead::init(encoder.dim(), outputs, config.seed);
    let mut opt = super::AdamW::new(&head, config.learning_rate, config.weight_decay);
    let mut rng = DatasetRng::new(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut log = TrainLog {
        train_examples: train.len(),
        rows_per_epoch: rows.per_example * train.len(),
        epochs: Vec::with_capacity(config.epochs),
        best_epoch: None,
    };
    let mut best: Option<(f64, LinearHead)> = None;

    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let (xs, ts) = rows.batch(batch)?;
            let x_refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
            let t_refs: Vec<&Target> = ts.iter().collect();
            let (loss, grad) = loss_and_grad(&head, &x_refs, &t_refs, config.loss)?;
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    batch: b + 1,
                    learning_rate: config.learning_rate,
                });
            }
            loss_sum += loss * batch.len() as f64;
            opt.step(&mut head, &grad);
        }
        let train_loss = loss_sum / train.len() as f64;

        let dev_macro_f1 = if dev.is_empty() {
            None
        } else {
            let meta = meta_for(spec, dataset, config, &head);
            let model = Model::new(meta, head.clone(), Arc::clone(&encoder))?;
            Some(macro_f1(&model, &dev, &space.labels)?)
        };
        log::info!(
            "epoch {epoch}/{}: train loss {train_loss:.6}{}",
            config.epochs,
            dev_macro_f1.map_or(String::new(), |f| format!(", dev macro-F1 {f:.4}"))
        );
        if let (true, Some(f1)) = (config.early_stop, dev_macro_f1) {
            if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                best = Some((f1, head.clone()));
                log.best_epoch = Some(epoch);
            }
        }
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            dev_macro_f1,
        });
    }

    if let Some((_, h)) = best {
        head = h;
    }
    let mut meta = meta_for(spec, dataset, config, &head);
    meta.dataset_provenance_hash = Some(dataset.provenance_hash()?);
    let model = Model::new(meta, head, encoder)?;
    Ok((model, log))
}

fn meta_for(
    spec: &ModelSpec,
    ds: &LabeledDataset,
    config: &TrainConfig,
    head: &LinearHead,
) -> ModelMeta {
    let (style, descriptions) = match (&spec.architecture, &spec.descriptions) {
        (Architecture::OrgModel2, Some((s, d))) => (Some(*s), Some(d.clone())),
        _ => (None, None),
    };
    ModelMeta::new(
        spec.architecture,
        ds.label_space.clone(),
        spec.threshold,
        style,
        descriptions,
        config.clone(),
        spec.encoder.clone(),
        head,
    )
}

fn macro_f1(model: &Model, examples: &[&Example], labels: &[String]) -> Result<f64> {
    let golds: Vec<BTreeSet<String>> = examples.iter().map(|e| e.labels.clone()).collect();
    let preds = examples
        .iter()
        .map(|e| model.scores(&e.text).map(|s| model.labels_from_scores(&s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(
        report_from_sets(labels, &golds, &preds, MacroF1Mode::MeanOfF1)?
            .macro_
            .f1,
    )
}

/// Loss rows for the training split. Single-text features are cached; pair
/// features are recomputed per batch to keep memory at O(batch × n × H).
struct Rows<'a> {
    encoder: &'a dyn TextEncoder,
    examples: &'a [&'a Example],
    targets: &'a [Target],
    cached: Vec<Vec<f64>>,
    descriptions: Option<&'a [String]>,
    per_example: usize,
}

impl<'a> Rows<'a> {
    fn new(
        encoder: &'a dyn TextEncoder,
        examples: &'a [&'a Example],
        targets: &'a [Target],
        descriptions: Option<&'a [String]>,
        n: usize,
    ) -> Result<Self> {
        let cached = if descriptions.is_none() {
            let texts: Vec<&str> = examples.iter().map(|e| e.text.as_str()).collect();
            encoder.encode_batch(&texts)?
        } else {
            Vec::new()
        };
        Ok(Self {
            encoder,
            examples,
            targets,
            cached,
            descriptions,
            per_example: if descriptions.is_some() { n } else { 1 },
        })
    }

    fn batch(&self, idx: &[usize]) -> Result<(Vec<Vec<f64>>, Vec<Target>)> {
        let Some(descriptions) = self.descriptions else {
            return Ok((
                idx.iter().map(|&i| self.cached[i].clone()).collect(),
                idx.iter().map(|&i| self.targets[i].clone()).collect(),
            ));
        };
        let mut xs = Vec::with_capacity(idx.len() * descriptions.len());
        let mut ts = Vec::with_capacity(xs.capacity());
        for &i in idx {
            let gold: Vec<f64> = match &self.targets[i] {
                Target::MultiHot(v) => v.clone(),
                Target::Index(k) => (0..descriptions.len())
                    .map(|j| f64::from(u8::from(j == *k)))
                    .collect(),
            };
            for (d, y) in descriptions.iter().zip(gold) {
                xs.push(self.encoder.encode_pair(&self.examples[i].text, d)?);
                ts.push(Target::MultiHot(vec![y]));
            }
        }
        Ok((xs, ts))
    }
}
