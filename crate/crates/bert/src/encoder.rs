use std::sync::Arc;

use candle_core::{DType, Device, Tensor};
use candle_transformers::models::bert::BertModel;
use orgclass::models::{ModelError, TextEncoder};
use tokenizers::utils::truncation::{TruncationParams, TruncationStrategy};
use tokenizers::{Encoding, Tokenizer};

use crate::{BertError, Result};

/// First-token summary vectors from a BERT encoder.
pub struct BertTextEncoder {
    model: Arc<BertModel>,
    single: Tokenizer,
    pair_first: Tokenizer,
    pair_longest: Tokenizer,
    device: Device,
    hidden: usize,
    pad_id: u32,
}

fn truncating(
    tok: &Tokenizer,
    max_tokens: usize,
    strategy: TruncationStrategy,
) -> Result<Tokenizer> {
    let mut t = tok.clone();
    t.with_padding(None);
    t.with_truncation(Some(TruncationParams {
        max_length: max_tokens,
        strategy,
        ..Default::default()
    }))
    .map_err(|e| BertError::Tokenizer(e.to_string()))?;
    Ok(t)
}

impl BertTextEncoder {
    pub fn new(
        model: Arc<BertModel>,
        tokenizer: &Tokenizer,
        hidden: usize,
        max_tokens: usize,
        device: Device,
    ) -> Result<Self> {
        let pad_id = tokenizer.token_to_id("[PAD]").unwrap_or(0);
        Ok(Self {
            model,
            single: truncating(tokenizer, max_tokens, TruncationStrategy::LongestFirst)?,
            pair_first: truncating(tokenizer, max_tokens, TruncationStrategy::OnlyFirst)?,
            pair_longest: truncating(tokenizer, max_tokens, TruncationStrategy::LongestFirst)?,
            device,
            hidden,
            pad_id,
        })
    }

    pub fn tokenize(&self, texts: &[&str]) -> Result<Vec<Encoding>> {
        texts
            .iter()
            .map(|t| {
                self.single
                    .encode(*t, true)
                    .map_err(|e| BertError::Tokenizer(e.to_string()))
            })
            .collect()
    }

    /// Packs `[CLS] a [SEP] b [SEP]`, cutting `a` first; falls back to
    /// longest-first when `b` alone exceeds the budget.
    pub fn tokenize_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<Encoding>> {
        pairs
            .iter()
            .map(|&(a, b)| {
                self.pair_first
                    .encode((a, b), true)
                    .or_else(|_| self.pair_longest.encode((a, b), true))
                    .map_err(|e| BertError::Tokenizer(e.to_string()))
            })
            .collect()
    }

    /// `(batch, hidden)` first-token vectors, differentiable.
    pub fn summary(&self, encodings: &[Encoding]) -> Result<Tensor> {
        let len = encodings
            .iter()
            .map(|e| e.get_ids().len())
            .max()
            .unwrap_or(0)
            .max(1);
        let (mut ids, mut types, mut mask) = (Vec::new(), Vec::new(), Vec::new());
        for e in encodings {
            let pad = len - e.get_ids().len();
            ids.extend(
                e.get_ids()
                    .iter()
                    .copied()
                    .chain(std::iter::repeat_n(self.pad_id, pad)),
            );
            types.extend(
                e.get_type_ids()
                    .iter()
                    .copied()
                    .chain(std::iter::repeat_n(0, pad)),
            );
            mask.extend(
                e.get_attention_mask()
                    .iter()
                    .copied()
                    .chain(std::iter::repeat_n(0, pad)),
            );
        }
        let shape = (encodings.len(), len);
        let ids = Tensor::from_vec(ids, shape, &self.device)?;
        let types = Tensor::from_vec(types, shape, &self.device)?;
        let mask = Tensor::from_vec(mask, shape, &self.device)?;
        let hidden = self.model.forward(&ids, &types, Some(&mask))?;
        Ok(hidden.narrow(1, 0, 1)?.squeeze(1)?)
    }

    fn rows(&self, encodings: &[Encoding]) -> Result<Vec<Vec<f64>>> {
        let t = self.summary(encodings)?.to_dtype(DType::F64)?;
        Ok(t.to_vec2::<f64>()?)
    }
}

impl TextEncoder for BertTextEncoder {
    fn dim(&self) -> usize {
        self.hidden
    }

    fn encode(&self, text: &str) -> orgclass::models::Result<Vec<f64>> {
        Ok(self.encode_batch(&[text])?.remove(0))
    }

    fn encode_pair(&self, a: &str, b: &str) -> orgclass::models::Result<Vec<f64>> {
        let enc = self.tokenize_pairs(&[(a, b)])?;
        Ok(self.rows(&enc)?.remove(0))
    }

    fn encode_batch(&self, texts: &[&str]) -> orgclass::models::Result<Vec<Vec<f64>>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let enc = self.tokenize(texts)?;
        self.rows(&enc).map_err(ModelError::from)
    }
}
