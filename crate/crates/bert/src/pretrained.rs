use std::collections::HashMap;
use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use candle_transformers::models::bert::Config;
use tokenizers::models::wordpiece::WordPiece;
use tokenizers::normalizers::BertNormalizer;
use tokenizers::pre_tokenizers::bert::BertPreTokenizer;
use tokenizers::processors::bert::BertProcessing;
use tokenizers::Tokenizer;

use crate::{BertError, Result};

/// A checkpoint directory in the usual Hugging Face layout.
#[derive(Debug, Clone)]
pub struct PretrainedDir {
    pub path: PathBuf,
    pub config: Config,
}

impl PretrainedDir {
    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            config: load_config(path)?,
        })
    }

    pub fn tokenizer(&self) -> Result<Tokenizer> {
        load_tokenizer(&self.path)
    }

    /// Path of the weight file, preferring safetensors.
    pub fn weights_file(&self) -> Result<PathBuf> {
        ["model.safetensors", "pytorch_model.bin"]
            .iter()
            .map(|f| self.path.join(f))
            .find(|p| p.is_file())
            .ok_or_else(|| BertError::Pretrained {
                path: self.path.display().to_string(),
                message: "no model.safetensors or pytorch_model.bin".into(),
            })
    }
}

pub fn load_config(dir: &Path) -> Result<Config> {
    let path = dir.join("config.json");
    let text = std::fs::read_to_string(&path).map_err(|e| BertError::Pretrained {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// `tokenizer.json` if present, otherwise an uncased/cased BERT WordPiece
/// pipeline over `vocab.txt` (casing read from `tokenizer_config.json`).
pub fn load_tokenizer(dir: &Path) -> Result<Tokenizer> {
    let json = dir.join("tokenizer.json");
    if json.is_file() {
        return Tokenizer::from_file(&json).map_err(|e| BertError::Tokenizer(e.to_string()));
    }
    let vocab = dir.join("vocab.txt");
    let lowercase = std::fs::read_to_string(dir.join("tokenizer_config.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v.get("do_lower_case").and_then(|b| b.as_bool()))
        .unwrap_or(true);
    let wordpiece = WordPiece::from_file(&vocab.to_string_lossy())
        .unk_token("[UNK]".into())
        .build()
        .map_err(|e| BertError::Tokenizer(format!("{}: {e}", vocab.display())))?;
    let mut tok = Tokenizer::new(wordpiece);
    let id = |t: &str| {
        tok.token_to_id(t)
            .ok_or_else(|| BertError::Tokenizer(format!("vocabulary lacks {t}")))
    };
    let (cls, sep) = (id("[CLS]")?, id("[SEP]")?);
    tok.with_normalizer(Some(BertNormalizer::new(true, true, None, lowercase)));
    tok.with_pre_tokenizer(Some(BertPreTokenizer));
    tok.with_post_processor(Some(BertProcessing::new(
        ("[SEP]".into(), sep),
        ("[CLS]".into(), cls),
    )));
    Ok(tok)
}

/// Checkpoint names to try for a model variable, covering the optional
/// `bert.` prefix and the older `gamma`/`beta` LayerNorm names.
pub fn map_checkpoint_name(var: &str) -> Vec<String> {
    let bare = var.strip_prefix("bert.").unwrap_or(var);
    let mut out = vec![var.to_string(), bare.to_string()];
    if var.contains("LayerNorm.") {
        let legacy = |n: &str| {
            n.replace("LayerNorm.weight", "LayerNorm.gamma")
                .replace("LayerNorm.bias", "LayerNorm.beta")
        };
        out.push(legacy(var));
        out.push(legacy(bare));
    }
    out.dedup();
    out
}

pub(crate) fn read_tensors(path: &Path, device: &Device) -> Result<HashMap<String, Tensor>> {
    if path.extension().is_some_and(|e| e == "bin") {
        Ok(candle_core::pickle::read_all(path)?
            .into_iter()
            .map(|(k, t)| Ok((k, t.to_device(device)?)))
            .collect::<candle_core::Result<_>>()?)
    } else {
        Ok(candle_core::safetensors::load(path, device)?)
    }
}
