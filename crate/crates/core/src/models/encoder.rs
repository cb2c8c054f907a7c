use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use super::{string_enum, ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    PretrainedTransformer,
    HashedNgramBaseline,
}
string_enum!(EncoderKind {
    PretrainedTransformer => "pretrained_transformer",
    HashedNgramBaseline => "hashed_ngram_baseline",
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub hidden_size: usize,
    pub max_tokens: usize,
    /// Always the first-token summary vector; recorded for the artifact.
    #[serde(default = "default_pooling")]
    pub pooling: String,
    /// Largest n-gram order for the baseline (1 or 2).
    #[serde(default = "default_ngram")]
    pub ngram_max: usize,
    /// Directory with `config.json`, `vocab.txt` and weights for the
    /// pretrained backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrained_dir: Option<String>,
}

fn default_pooling() -> String {
    "first_token".into()
}

fn default_ngram() -> usize {
    2
}

impl EncoderConfig {
    pub fn baseline() -> Self {
        Self {
            kind: EncoderKind::HashedNgramBaseline,
            hidden_size: 1024,
            max_tokens: 512,
            pooling: default_pooling(),
            ngram_max: default_ngram(),
            pretrained_dir: None,
        }
    }

    pub fn pretrained(dir: impl Into<String>) -> Self {
        Self {
            kind: EncoderKind::PretrainedTransformer,
            hidden_size: 768,
            max_tokens: 512,
            pooling: default_pooling(),
            ngram_max: default_ngram(),
            pretrained_dir: Some(dir.into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.max_tokens == 0 {
            return Err(ModelError::InvalidConfig(
                "encoder hidden_size and max_tokens must be positive".into(),
            ));
        }
        if self.kind == EncoderKind::HashedNgramBaseline && !(1..=2).contains(&self.ngram_max) {
            return Err(ModelError::InvalidConfig(format!(
                "ngram_max must be 1 or 2, got {}",
                self.ngram_max
            )));
        }
        if self.kind == EncoderKind::PretrainedTransformer && self.pretrained_dir.is_none() {
            return Err(ModelError::InvalidConfig(
                "pretrained_transformer needs pretrained_dir".into(),
            ));
        }
        Ok(())
    }
}

/// Maps text to a fixed-length summary vector.
///
/// Implementations must be pure for fixed weights: equal inputs give equal
/// outputs, and every output has length [`dim`](TextEncoder::dim).
pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;

    fn encode(&self, text: &str) -> Result<Vec<f64>>;

    /// Joint encoding of a (text, description) pair. When the pair exceeds
    /// the token budget, `a` is truncated first.
    fn encode_pair(&self, a: &str, b: &str) -> Result<Vec<f64>>;

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        texts.iter().map(|t| self.encode(t)).collect()
    }
}

/// Signed feature hashing of word uni- and bigrams, L2-normalized.
#[derive(Debug, Clone)]
pub struct HashedNgramEncoder {
    dim: usize,
    max_tokens: usize,
    ngram_max: usize,
}

impl HashedNgramEncoder {
    pub fn new(config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        if config.kind != EncoderKind::HashedNgramBaseline {
            return Err(ModelError::InvalidConfig(format!(
                "expected a hashed_ngram_baseline encoder config, got {}",
                config.kind
            )));
        }
        Ok(Self {
            dim: config.hidden_size,
            max_tokens: config.max_tokens,
            ngram_max: config.ngram_max,
        })
    }

    pub fn tokenize(text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect()
    }

    fn hashed(&self, tokens: &[String]) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let mut add = |parts: &[&str]| {
            let mut h = FnvHasher::default();
            for (i, p) in parts.iter().enumerate() {
                if i > 0 {
                    h.write_u8(0x1f);
                }
                h.write(p.as_bytes());
            }
            let h = h.finish();
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        };
        for t in tokens {
            add(&[t]);
        }
        if self.ngram_max >= 2 {
            for w in tokens.windows(2) {
                add(&[&w[0], &w[1]]);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl TextEncoder for HashedNgramEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        let mut tokens = Self::tokenize(text);
        tokens.truncate(self.max_tokens);
        Ok(self.hashed(&tokens))
    }

    /// Element-wise product of the two bag vectors, so the head can weight
    /// features the text and the description share.
    fn encode_pair(&self, a: &str, b: &str) -> Result<Vec<f64>> {
        let mut tb = Self::tokenize(b);
        tb.truncate(self.max_tokens);
        let mut ta = Self::tokenize(a);
        ta.truncate(self.max_tokens.saturating_sub(tb.len()));
        let (va, vb) = (self.hashed(&ta), self.hashed(&tb));
        Ok(va.iter().zip(&vb).map(|(x, y)| x * y).collect())
    }
}
