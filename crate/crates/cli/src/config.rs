//! Flat TOML pipeline configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use orgclass::datasets::{SplitSizes, Task};
use orgclass::fsutil;
use orgclass::metrics::MacroF1Mode;
use orgclass::models::{
    Architecture, EncoderConfig, EncoderKind, LossKind, TaskMode, TrainConfig, DEFAULT_THRESHOLD,
};
use orgclass::taxonomy::DescriptionStyle;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchProviderKind {
    Fixture,
    Serpapi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextSourceKind {
    Item1,
    Pseudodoc,
}

/// One run's settings. Relative paths resolve against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub task: Task,
    pub output_dir: PathBuf,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,

    #[serde(default = "default_issues_taxonomy")]
    pub issues_taxonomy: PathBuf,
    #[serde(default = "default_sic_taxonomy")]
    pub sic_taxonomy: PathBuf,
    /// Issues task input: JSONL rows `{"org_id", "name", "components"}`.
    #[serde(default)]
    pub organizations: Option<PathBuf>,

    // ingestion
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    #[serde(default = "default_rate_limit")]
    pub rate_limit: f64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub offline: bool,
    #[serde(default)]
    pub user_agent: Option<String>,
    #[serde(default)]
    pub cik_source: Option<String>,
    #[serde(default)]
    pub cik_limit: Option<usize>,
    #[serde(default)]
    pub edgar_data_base: Option<String>,
    #[serde(default)]
    pub edgar_archives_base: Option<String>,
    #[serde(default = "default_provider")]
    pub search_provider: SearchProviderKind,
    #[serde(default)]
    pub search_fixture: Option<PathBuf>,

    // datasets
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    #[serde(default = "default_per_class")]
    pub min_class: usize,
    #[serde(default = "default_text_source")]
    pub text_source: TextSourceKind,
    #[serde(default)]
    pub split_train: Option<usize>,
    #[serde(default)]
    pub split_dev: Option<usize>,
    #[serde(default)]
    pub split_test: Option<usize>,

    // models
    #[serde(default = "default_architecture")]
    pub architecture: Architecture,
    #[serde(default = "default_encoder")]
    pub encoder: EncoderKind,
    #[serde(default)]
    pub hidden_size: Option<usize>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    #[serde(default = "default_ngram_max")]
    pub ngram_max: usize,
    #[serde(default)]
    pub pretrained_dir: Option<PathBuf>,
    #[serde(default = "default_style")]
    pub description_style: DescriptionStyle,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub loss: Option<LossKind>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default)]
    pub early_stop: bool,

    // metrics
    #[serde(default)]
    pub macro_f1_mode: MacroF1Mode,
}

fn default_cache_dir() -> PathBuf {
    "cache".into()
}
fn default_issues_taxonomy() -> PathBuf {
    "taxonomy/issues.json".into()
}
fn default_sic_taxonomy() -> PathBuf {
    "taxonomy/sic.json".into()
}
fn default_top_n() -> usize {
    10
}
fn default_rate_limit() -> f64 {
    1.0
}
fn default_max_in_flight() -> usize {
    4
}
fn default_provider() -> SearchProviderKind {
    SearchProviderKind::Fixture
}
fn default_k() -> usize {
    15
}
fn default_per_class() -> usize {
    200
}
fn default_text_source() -> TextSourceKind {
    TextSourceKind::Item1
}
fn default_architecture() -> Architecture {
    Architecture::OrgModel1
}
fn default_encoder() -> EncoderKind {
    EncoderKind::HashedNgramBaseline
}
fn default_max_tokens() -> usize {
    512
}
fn default_ngram_max() -> usize {
    2
}
fn default_style() -> DescriptionStyle {
    DescriptionStyle::Long
}
fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}
fn default_epochs() -> usize {
    4
}
fn default_batch_size() -> usize {
    16
}
fn default_learning_rate() -> f64 {
    2e-5
}
fn default_weight_decay() -> f64 {
    0.01
}

impl PipelineConfig {
    /// Parses, resolves relative paths against `path`'s directory and
    /// validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.cache_dir);
        fix(&mut self.issues_taxonomy);
        fix(&mut self.sic_taxonomy);
        for p in [
            &mut self.organizations,
            &mut self.search_fixture,
            &mut self.pretrained_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        if let Some(src) = &mut self.cik_source {
            if !src.starts_with("http://")
                && !src.starts_with("https://")
                && Path::new(src).is_relative()
            {
                *src = base.join(&*src).to_string_lossy().into_owned();
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_n == 0 {
            bail!("top_n must be positive");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            bail!("threshold must lie in (0, 1), got {}", self.threshold);
        }
        if self.max_in_flight == 0 {
            bail!("max_in_flight must be positive");
        }
        if !(self.rate_limit.is_finite() && self.rate_limit >= 0.0) {
            bail!("rate_limit must be a non-negative number");
        }
        if self.k == 0 || self.per_class == 0 {
            bail!("k and per_class must be positive");
        }
        self.encoder_config()?.validate()?;
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .context("seed is required for this stage (set `seed` in the config or pass --seed)")
    }

    pub fn split_sizes(&self, examples: usize) -> Result<SplitSizes> {
        match (self.split_train, self.split_dev, self.split_test) {
            (Some(tr), dev, Some(te)) => Ok(SplitSizes::new(tr, dev.unwrap_or(0), te)),
            (None, None, None) => {
                bail!("split_train and split_test are required to split {examples} examples")
            }
            _ => bail!("set both split_train and split_test (split_dev defaults to 0)"),
        }
    }

    pub fn encoder_config(&self) -> Result<EncoderConfig> {
        Ok(match self.encoder {
            EncoderKind::HashedNgramBaseline => EncoderConfig {
                hidden_size: self.hidden_size.unwrap_or(1024),
                max_tokens: self.max_tokens,
                ngram_max: self.ngram_max,
                ..EncoderConfig::baseline()
            },
            EncoderKind::PretrainedTransformer => {
                let dir = self
                    .pretrained_dir
                    .as_ref()
                    .context("pretrained_transformer needs pretrained_dir")?;
                EncoderConfig {
                    hidden_size: self.hidden_size.unwrap_or(768),
                    max_tokens: self.max_tokens,
                    ..EncoderConfig::pretrained(dir.to_string_lossy())
                }
            }
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mode = TaskMode::from(self.task);
        Ok(TrainConfig {
            loss: self
                .loss
                .unwrap_or_else(|| TrainConfig::required_loss(self.architecture, mode)),
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            seed: self.require_seed()?,
            early_stop: self.early_stop,
        })
    }

    /// SHA-256 of the canonical JSON form (after overrides and path
    /// resolution).
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        fsutil::sha256_hex(&json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PipelineConfig> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, text).unwrap();
        PipelineConfig::load(&path)
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let c = parse("task = \"issues\"\noutput_dir = \"out\"\n").unwrap();
        assert_eq!(c.top_n, 10);
        assert_eq!(c.threshold, 0.5);
        assert_eq!(c.k, 15);
        assert_eq!(c.macro_f1_mode, MacroF1Mode::MeanOfF1);
        assert!(c.output_dir.ends_with("out") && c.output_dir.is_absolute());
        assert!(c.require_seed().is_err());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse("task = \"issues\"\noutput_dir = \"o\"\nfoo = 1\n").unwrap_err();
        assert!(format!("{err:#}").contains("foo"), "{err:#}");
    }

    #[test]
    fn missing_required_field() {
        let err = parse("output_dir = \"o\"\n").unwrap_err();
        assert!(format!("{err:#}").contains("task"), "{err:#}");
    }

    #[test]
    fn loss_defaults_follow_architecture() {
        let c = parse("task = \"sic2\"\noutput_dir = \"o\"\nseed = 1\n").unwrap();
        assert_eq!(c.train_config().unwrap().loss, LossKind::CrossEntropy);
        let c =
            parse("task = \"sic2\"\noutput_dir = \"o\"\nseed = 1\narchitecture = \"orgmodel2\"\n")
                .unwrap();
        assert_eq!(c.train_config().unwrap().loss, LossKind::BinaryCrossEntropy);
    }

    #[test]
    fn hash_tracks_content() {
        let a = parse("task = \"issues\"\noutput_dir = \"o\"\nseed = 1\n").unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = Some(2);
        assert_ne!(a.hash(), b.hash());
    }
}
