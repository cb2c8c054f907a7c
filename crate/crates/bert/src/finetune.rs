use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use candle_core::{DType, Device, Tensor, Var};
use candle_nn::{Init, Optimizer, ParamsAdamW, VarBuilder, VarMap};
use candle_transformers::models::bert::BertModel;
use orgclass::datasets::{encode_targets, DatasetRng, Example, LabeledDataset, Split, Target};
use orgclass::metrics::{report_from_sets, MacroF1Mode};
use orgclass::models::{
    Architecture, EncoderKind, EpochLog, LinearHead, LossKind, Model, ModelError, ModelMeta,
    ModelSpec, TaskMode, TrainConfig, TrainLog,
};

use crate::pretrained::{map_checkpoint_name, read_tensors, PretrainedDir};
use crate::{BertError, BertTextEncoder, Result};

pub const ENCODER_WEIGHTS_FILE: &str = "encoder.safetensors";

/// A fine-tuned classifier plus the variables backing its encoder.
pub struct FineTuned {
    pub model: Model,
    varmap: VarMap,
}

impl FineTuned {
    /// Writes `model.json`, `head.bin` and the encoder weights.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.model.save(dir)?;
        let tensors: HashMap<String, Tensor> = self
            .varmap
            .data()
            .lock()
            .expect("varmap lock")
            .iter()
            .filter(|(k, _)| k.starts_with("bert."))
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect();
        let tmp = dir.join(format!(".{ENCODER_WEIGHTS_FILE}.tmp"));
        candle_core::safetensors::save(&tensors, &tmp)?;
        std::fs::rename(tmp, dir.join(ENCODER_WEIGHTS_FILE))?;
        Ok(())
    }
}

struct Network {
    varmap: VarMap,
    encoder: Arc<BertTextEncoder>,
    head_w: Tensor,
    head_b: Tensor,
}

fn build_network(
    pretrained: &PretrainedDir,
    weights: &Path,
    max_tokens: usize,
    head: &LinearHead,
    device: &Device,
) -> Result<Network> {
    let varmap = VarMap::new();
    let vb = VarBuilder::from_varmap(&varmap, DType::F32, device);
    let bert = BertModel::load(vb.pp("bert"), &pretrained.config)?;
    let head_w = vb.get_with_hints((head.outputs, head.inputs), "head.weight", Init::Const(0.0))?;
    let head_b = vb.get_with_hints(head.outputs, "head.bias", Init::Const(0.0))?;

    let checkpoint = read_tensors(weights, device)?;
    let mut missing = Vec::new();
    {
        let vars = varmap.data().lock().expect("varmap lock");
        for (name, var) in vars.iter().filter(|(k, _)| k.starts_with("bert.")) {
            match map_checkpoint_name(name)
                .iter()
                .find_map(|c| checkpoint.get(c))
            {
                Some(t) => var.set(&t.to_dtype(DType::F32)?)?,
                None => missing.push(name.clone()),
            }
        }
        vars["head.weight"].set(&Tensor::from_vec(
            head.weights.iter().map(|&v| v as f32).collect::<Vec<_>>(),
            (head.outputs, head.inputs),
            device,
        )?)?;
        vars["head.bias"].set(&Tensor::from_vec(
            head.bias.iter().map(|&v| v as f32).collect::<Vec<_>>(),
            head.outputs,
            device,
        )?)?;
    }
    if !missing.is_empty() {
        missing.sort();
        return Err(BertError::MissingTensors(missing));
    }
    let tokenizer = pretrained.tokenizer()?;
    let encoder = BertTextEncoder::new(
        Arc::new(bert),
        &tokenizer,
        pretrained.config.hidden_size,
        max_tokens,
        device.clone(),
    )?;
    Ok(Network {
        varmap,
        encoder: Arc::new(encoder),
        head_w,
        head_b,
    })
}

impl Network {
    fn logits(&self, summary: &Tensor) -> Result<Tensor> {
        Ok(summary
            .matmul(&self.head_w.t()?)?
            .broadcast_add(&self.head_b)?)
    }

    fn head(&self) -> Result<LinearHead> {
        let (outputs, inputs) = self.head_w.dims2()?;
        let w = self
            .head_w
            .to_dtype(DType::F64)?
            .flatten_all()?
            .to_vec1::<f64>()?;
        let b = self.head_b.to_dtype(DType::F64)?.to_vec1::<f64>()?;
        Ok(LinearHead::from_parts(inputs, outputs, w, b)?)
    }

    fn snapshot(&self) -> Result<Vec<(Var, Tensor)>> {
        let vars = self.varmap.data().lock().expect("varmap lock");
        vars.values()
            .map(|v| Ok((v.clone(), v.as_tensor().copy()?)))
            .collect()
    }
}

/// Numerically stable mean binary cross-entropy on logits.
fn bce_with_logits(z: &Tensor, y: &Tensor) -> candle_core::Result<Tensor> {
    let softplus_neg_abs = (z.abs()?.neg()?.exp()? + 1.0)?.log()?;
    (z.relu()? - (z * y)? + softplus_neg_abs)?.mean_all()
}

fn check_spec(spec: &ModelSpec, pretrained: &PretrainedDir) -> Result<()> {
    let enc = &spec.encoder;
    enc.validate()?;
    if enc.kind != EncoderKind::PretrainedTransformer {
        return Err(ModelError::InvalidConfig(format!(
            "fine-tuning needs a pretrained encoder, got {}",
            enc.kind
        ))
        .into());
    }
    if enc.hidden_size != pretrained.config.hidden_size {
        return Err(ModelError::DimensionMismatch {
            what: "encoder hidden_size",
            expected: pretrained.config.hidden_size,
            got: enc.hidden_size,
        }
        .into());
    }
    if enc.max_tokens > pretrained.config.max_position_embeddings {
        return Err(ModelError::InvalidConfig(format!(
            "max_tokens {} exceeds the checkpoint's {} positions",
            enc.max_tokens, pretrained.config.max_position_embeddings
        ))
        .into());
    }
    Ok(())
}

/// Fine-tunes encoder and head together with mini-batch AdamW.
pub fn fine_tune(
    pretrained_dir: &Path,
    spec: &ModelSpec,
    dataset: &LabeledDataset,
    config: &TrainConfig,
    device: &Device,
) -> Result<(FineTuned, TrainLog)> {
    let pretrained = PretrainedDir::open(pretrained_dir)?;
    check_spec(spec, &pretrained)?;
    let space = &dataset.label_space;
    let mode = TaskMode::from(space.task);
    config.validate(spec.architecture, mode)?;
    let descriptions: Option<&[String]> = match (spec.architecture, &spec.descriptions) {
        (Architecture::OrgModel1, _) => None,
        (Architecture::OrgModel2, Some((_, d))) if d.len() == space.n() => Some(d),
        (Architecture::OrgModel2, d) => {
            return Err(ModelError::DescriptionCount {
                expected: space.n(),
                got: d.as_ref().map_or(0, |(_, d)| d.len()),
            }
            .into())
        }
    };
    let train: Vec<&Example> = dataset.split(Split::Train).collect();
    if train.is_empty() {
        return Err(ModelError::EmptyTrainSplit.into());
    }
    let dev: Vec<&Example> = dataset.split(Split::Dev).collect();
    let targets = train
        .iter()
        .map(|e| encode_targets(e, space))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let outputs = if descriptions.is_some() { 1 } else { space.n() };
    let init = LinearHead::init(pretrained.config.hidden_size, outputs, config.seed);
    let net = build_network(
        &pretrained,
        &pretrained.weights_file()?,
        spec.encoder.max_tokens,
        &init,
        device,
    )?;
    let mut opt = candle_nn::AdamW::new(
        net.varmap.all_vars(),
        ParamsAdamW {
            lr: config.learning_rate,
            weight_decay: config.weight_decay,
            ..Default::default()
        },
    )?;

    let mut rng = DatasetRng::new(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let per_example = descriptions.map_or(1, <[String]>::len);
    let mut log = TrainLog {
        train_examples: train.len(),
        rows_per_epoch: train.len() * per_example,
        epochs: Vec::with_capacity(config.epochs),
        best_epoch: None,
    };
    let mut best: Option<(f64, Vec<(Var, Tensor)>)> = None;

    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let loss = batch_loss(
                &net,
                &train,
                &targets,
                batch,
                descriptions,
                config.loss,
                device,
            )?;
            let value = f64::from(loss.to_scalar::<f32>()?);
            if !value.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    batch: b + 1,
                    learning_rate: config.learning_rate,
                }
                .into());
            }
            loss_sum += value * batch.len() as f64;
            opt.backward_step(&loss)?;
        }
        let train_loss = loss_sum / train.len() as f64;
        let dev_macro_f1 = if dev.is_empty() {
            None
        } else {
            let model = assemble(spec, dataset, config, &net)?;
            Some(dev_f1(&model, &dev, &space.labels)?)
        };
        log::info!(
            "epoch {epoch}/{}: train loss {train_loss:.6}",
            config.epochs
        );
        if let (true, Some(f1)) = (config.early_stop, dev_macro_f1) {
            if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                best = Some((f1, net.snapshot()?));
                log.best_epoch = Some(epoch);
            }
        }
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            dev_macro_f1,
        });
    }
    if let Some((_, snapshot)) = best {
        for (var, t) in snapshot {
            var.set(&t)?;
        }
    }
    let mut model = assemble(spec, dataset, config, &net)?;
    model.meta.dataset_provenance_hash = Some(dataset.provenance_hash()?);
    Ok((
        FineTuned {
            model,
            varmap: net.varmap,
        },
        log,
    ))
}

fn batch_loss(
    net: &Network,
    train: &[&Example],
    targets: &[Target],
    batch: &[usize],
    descriptions: Option<&[String]>,
    loss: LossKind,
    device: &Device,
) -> Result<Tensor> {
    match descriptions {
        None => {
            let texts: Vec<&str> = batch.iter().map(|&i| train[i].text.as_str()).collect();
            let z = net.logits(&net.encoder.summary(&net.encoder.tokenize(&texts)?)?)?;
            match loss {
                LossKind::BinaryCrossEntropy => {
                    let mut y = Vec::new();
                    for &i in batch {
                        if let Target::MultiHot(v) = &targets[i] {
                            y.extend(v.iter().map(|&x| x as f32));
                        }
                    }
                    let y = Tensor::from_vec(y, z.dims2()?, device)?;
                    Ok(bce_with_logits(&z, &y)?)
                }
                LossKind::CrossEntropy => {
                    let y: Vec<u32> = batch
                        .iter()
                        .map(|&i| match targets[i] {
                            Target::Index(k) => k as u32,
                            Target::MultiHot(_) => 0,
                        })
                        .collect();
                    let y = Tensor::from_vec(y, batch.len(), device)?;
                    Ok(candle_nn::loss::cross_entropy(&z, &y)?)
                }
            }
        }
        Some(descs) => {
            let mut pairs = Vec::with_capacity(batch.len() * descs.len());
            let mut y = Vec::with_capacity(pairs.capacity());
            for &i in batch {
                for (j, d) in descs.iter().enumerate() {
                    pairs.push((train[i].text.as_str(), d.as_str()));
                    y.push(match &targets[i] {
                        Target::MultiHot(v) => v[j] as f32,
                        Target::Index(k) => f32::from(u8::from(*k == j)),
                    });
                }
            }
            let z = net.logits(&net.encoder.summary(&net.encoder.tokenize_pairs(&pairs)?)?)?;
            let y = Tensor::from_vec(y, (pairs.len(), 1), device)?;
            Ok(bce_with_logits(&z, &y)?)
        }
    }
}

fn assemble(
    spec: &ModelSpec,
    ds: &LabeledDataset,
    config: &TrainConfig,
    net: &Network,
) -> Result<Model> {
    let head = net.head()?;
    let (style, descriptions) = match (&spec.architecture, &spec.descriptions) {
        (Architecture::OrgModel2, Some((s, d))) => (Some(*s), Some(d.clone())),
        _ => (None, None),
    };
    let mut meta = ModelMeta::new(
        spec.architecture,
        ds.label_space.clone(),
        spec.threshold,
        style,
        descriptions,
        config.clone(),
        spec.encoder.clone(),
        &head,
    );
    meta.encoder_weights = Some(ENCODER_WEIGHTS_FILE.into());
    Ok(Model::new(meta, head, net.encoder.clone())?)
}

fn dev_f1(model: &Model, dev: &[&Example], labels: &[String]) -> Result<f64> {
    let golds: Vec<BTreeSet<String>> = dev.iter().map(|e| e.labels.clone()).collect();
    let preds = dev
        .iter()
        .map(|e| model.scores(&e.text).map(|s| model.labels_from_scores(&s)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let report = report_from_sets(labels, &golds, &preds, MacroF1Mode::MeanOfF1)
        .map_err(ModelError::from)?;
    Ok(report.macro_.f1)
}

/// Loads a fine-tuned artifact. `pretrained_dir` overrides the checkpoint
/// directory recorded in the artifact (config and tokenizer come from it).
pub fn load_model(dir: &Path, pretrained_dir: Option<&Path>, device: &Device) -> Result<Model> {
    let (meta, head) = ModelMeta::load(dir)?;
    let recorded = meta.encoder.pretrained_dir.clone().unwrap_or_default();
    let pretrained = PretrainedDir::open(pretrained_dir.unwrap_or(Path::new(&recorded)))?;
    let weights = match &meta.encoder_weights {
        Some(f) => dir.join(f),
        None => pretrained.weights_file()?,
    };
    let net = build_network(
        &pretrained,
        &weights,
        meta.encoder.max_tokens,
        &head,
        device,
    )?;
    Ok(Model::new(meta, head, net.encoder)?)
}
