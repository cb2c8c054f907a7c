//! One function per subcommand. Stages communicate only through files in
//! the output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use orgclass::datasets::{
    build_env_dataset, build_sic_dataset, split_dataset, Example, LabeledDataset, SicBuildConfig,
    Split, Task, TextSource, DATASET_FILE, LABELSPACE_FILE,
};
use orgclass::fsutil;
use orgclass::ingestion::edgar::{ARCHIVES_BASE_URL, CIK_INDEX_URL, DATA_BASE_URL};
use orgclass::ingestion::http::{
    CachedClient, HttpClient, OfflineClient, PoliteClient, Politeness, ReqwestClient,
};
use orgclass::ingestion::pool::map_bounded;
use orgclass::ingestion::{
    build_pseudodoc, fetch_cik_index, CompanyRecord, EdgarClient, FixtureProvider, IngestError,
    PseudoDoc, SearchProvider, SerpApiProvider, CACHE_DIR_ENV, RATE_LIMIT_ENV, SEARCH_API_KEY_ENV,
};
use orgclass::metrics::{self, render_table, MacroF1Mode};
use orgclass::models::{
    train_frozen, Architecture, EncoderKind, HashedNgramEncoder, Model, ModelSpec, Prediction,
    TaskMode, TextEncoder, TRAIN_LOG_FILE,
};
use orgclass::taxonomy::{IssueTaxonomy, LabelSource, SicHierarchy};
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, SearchProviderKind, TextSourceKind};
use crate::manifest::StageRun;
use crate::{Cli, Command};

pub const COMPANIES_FILE: &str = "companies.jsonl";
pub const PSEUDODOCS_FILE: &str = "pseudodocs.jsonl";
pub const MODEL_DIR: &str = "model";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";

/// Bad invocation or configuration (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: impl fmt::Display) -> anyhow::Error {
    UsageError(e.to_string()).into()
}

/// Row of the issues-task organizations file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrgRow {
    pub org_id: String,
    pub name: String,
    #[serde(default)]
    pub components: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitFilter {
    All,
    Only(Split),
}

impl FromStr for SplitFilter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "all" {
            Ok(SplitFilter::All)
        } else {
            s.parse().map(SplitFilter::Only)
        }
    }
}

impl SplitFilter {
    fn keeps(self, e: &Example) -> bool {
        match self {
            SplitFilter::All => true,
            SplitFilter::Only(s) => e.split == Some(s),
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => {
            let mut cfg = PipelineConfig::load(path).map_err(|e| usage(format!("{e:#}")))?;
            if let Some(seed) = cli.seed {
                cfg.seed = Some(seed);
            }
            if let Some(cache) = &cli.cache {
                cfg.cache_dir = cache.clone();
            } else if let Ok(dir) = std::env::var(CACHE_DIR_ENV) {
                cfg.cache_dir = dir.into();
            }
            if let Ok(rate) = std::env::var(RATE_LIMIT_ENV) {
                cfg.rate_limit = rate.parse().map_err(|_| {
                    usage(format!("{RATE_LIMIT_ENV} must be a number, got {rate:?}"))
                })?;
            }
            Some(cfg)
        }
        None => None,
    };
    let need = |name: &str| {
        config
            .clone()
            .ok_or_else(|| usage(format!("{name} needs --config")))
    };
    match cli.command {
        Command::FetchEdgar => fetch_edgar(&need("fetch-edgar")?),
        Command::FetchSnippets => fetch_snippets(&need("fetch-snippets")?),
        Command::BuildDataset { task } => {
            let mut cfg = need("build-dataset")?;
            if let Some(t) = task {
                cfg.task = t;
            }
            build_dataset(&cfg)
        }
        Command::Train => train(&need("train")?),
        Command::Predict { split } => predict(&need("predict")?, split),
        Command::Evaluate {
            gold,
            pred,
            split,
            labelspace,
            macro_f1_mode,
            out,
        } => evaluate(
            config.as_ref(),
            EvaluateArgs {
                gold,
                pred,
                split,
                labelspace,
                macro_f1_mode,
                out,
            },
        ),
    }
}

fn http_stack(cfg: &PipelineConfig) -> Result<Arc<dyn HttpClient>> {
    let cache = cfg.cache_dir.join("http");
    if cfg.offline {
        return Ok(Arc::new(CachedClient::new(OfflineClient, cache)));
    }
    let agent = cfg.user_agent.as_deref().ok_or_else(|| {
        usage("user_agent is required for network access (EDGAR asks for a contact address)")
    })?;
    let client = ReqwestClient::new(agent, Duration::from_secs(30))?;
    let policy = Politeness {
        max_in_flight: cfg.max_in_flight,
        ..Politeness::default()
    }
    .with_rate(cfg.rate_limit);
    Ok(Arc::new(CachedClient::new(
        PoliteClient::new(client, policy),
        cache,
    )))
}

fn fetch_edgar(cfg: &PipelineConfig) -> Result<()> {
    let mut stage = StageRun::start("fetch-edgar", Some(cfg.hash()), cfg.seed);
    let http = http_stack(cfg)?;
    let source = cfg.cik_source.as_deref().unwrap_or(CIK_INDEX_URL);
    if Path::new(source).is_file() {
        stage.input(Path::new(source))?;
    }
    let index = fetch_cik_index(source, http.as_ref())?;
    let mut ciks: Vec<u64> = index
        .entries
        .iter()
        .map(|e| e.cik)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if let Some(limit) = cfg.cik_limit {
        ciks.truncate(limit);
    }
    log::info!(
        "fetching {} companies ({} index lines skipped)",
        ciks.len(),
        index.skipped
    );
    let edgar = EdgarClient::with_bases(
        Arc::clone(&http),
        cfg.edgar_data_base.as_deref().unwrap_or(DATA_BASE_URL),
        cfg.edgar_archives_base
            .as_deref()
            .unwrap_or(ARCHIVES_BASE_URL),
    );
    let results = map_bounded(&ciks, cfg.max_in_flight, |&cik| {
        (cik, edgar.fetch_company_record(cik))
    });
    let (mut records, mut not_found, mut failed) = (Vec::new(), 0, 0);
    for (cik, r) in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(IngestError::NotFound(_)) => not_found += 1,
            Err(e) => {
                failed += 1;
                log::warn!("CIK {cik}: {e}");
            }
        }
    }
    if records.is_empty() && !ciks.is_empty() {
        bail!("no company records could be fetched ({failed} failures, {not_found} not found)");
    }
    records.sort_by_key(|r| r.cik);
    let out = cfg.output_dir.join(COMPANIES_FILE);
    fsutil::write_jsonl(&out, &records)?;
    stage.output(&out)?;
    stage.count("companies", records.len());
    stage.count(
        "complete",
        records.iter().filter(|r| r.is_complete()).count(),
    );
    stage.count(
        "empty_item1",
        records.iter().filter(|r| r.filing_text.is_empty()).count(),
    );
    stage.count("not_found", not_found);
    stage.count("failed", failed);
    stage.finish(&cfg.output_dir)
}

fn search_provider(cfg: &PipelineConfig) -> Result<Box<dyn SearchProvider>> {
    match cfg.search_provider {
        SearchProviderKind::Fixture => {
            let path = cfg
                .search_fixture
                .as_ref()
                .ok_or_else(|| usage("search_provider = \"fixture\" needs search_fixture"))?;
            Ok(Box::new(FixtureProvider::from_file(path)?))
        }
        SearchProviderKind::Serpapi => {
            let key = std::env::var(SEARCH_API_KEY_ENV)
                .map_err(|_| usage(format!("set {SEARCH_API_KEY_ENV} for the serpapi provider")))?;
            Ok(Box::new(SerpApiProvider::new(
                http_stack(cfg)?,
                key,
                cfg.top_n,
            )))
        }
    }
}

fn organizations(cfg: &PipelineConfig, stage: &mut StageRun) -> Result<Vec<OrgRow>> {
    match cfg.task {
        Task::Issues => {
            let path = cfg
                .organizations
                .as_ref()
                .ok_or_else(|| usage("the issues task needs `organizations`"))?;
            stage.input(path)?;
            fsutil::read_jsonl(path).with_context(|| format!("reading {}", path.display()))
        }
        Task::Sic2 => {
            let path = cfg.output_dir.join(COMPANIES_FILE);
            stage.input(&path)?;
            let companies: Vec<CompanyRecord> = fsutil::read_jsonl(&path)?;
            Ok(companies
                .into_iter()
                .map(|c| OrgRow {
                    org_id: c.cik.to_string(),
                    name: c.name,
                    components: BTreeSet::new(),
                })
                .collect())
        }
    }
}

fn fetch_snippets(cfg: &PipelineConfig) -> Result<()> {
    let mut stage = StageRun::start("fetch-snippets", Some(cfg.hash()), cfg.seed);
    let orgs = organizations(cfg, &mut stage)?;
    let provider = search_provider(cfg)?;
    if let Some(f) = &cfg.search_fixture {
        stage.input(f)?;
    }
    let results = map_bounded(&orgs, cfg.max_in_flight, |o| {
        (
            o.org_id.clone(),
            build_pseudodoc(&o.org_id, &o.name, provider.as_ref(), cfg.top_n),
        )
    });
    let mut docs: Vec<PseudoDoc> = Vec::with_capacity(orgs.len());
    let mut failed = 0;
    for (id, r) in results {
        match r {
            Ok(d) => docs.push(d),
            Err(e) => {
                failed += 1;
                log::warn!("{id}: {e}");
            }
        }
    }
    docs.sort_by(|a, b| a.org_id.cmp(&b.org_id));
    let out = cfg.output_dir.join(PSEUDODOCS_FILE);
    fsutil::write_jsonl(&out, &docs)?;
    stage.output(&out)?;
    stage.count("pseudodocs", docs.len());
    stage.count("unusable", docs.iter().filter(|d| !d.usable).count());
    stage.count("failed", failed);
    stage.finish(&cfg.output_dir)
}

fn load_pseudodocs(
    cfg: &PipelineConfig,
    stage: &mut StageRun,
) -> Result<BTreeMap<String, PseudoDoc>> {
    let path = cfg.output_dir.join(PSEUDODOCS_FILE);
    stage.input(&path)?;
    let docs: Vec<PseudoDoc> =
        fsutil::read_jsonl(&path).with_context(|| "run fetch-snippets first".to_string())?;
    Ok(docs.into_iter().map(|d| (d.org_id.clone(), d)).collect())
}

fn build_dataset(cfg: &PipelineConfig) -> Result<()> {
    let seed = cfg.require_seed().map_err(usage)?;
    let mut stage = StageRun::start("build-dataset", Some(cfg.hash()), Some(seed));
    let dataset = match cfg.task {
        Task::Issues => {
            let orgs = organizations(cfg, &mut stage)?;
            let labels: BTreeMap<String, BTreeSet<String>> =
                orgs.into_iter().map(|o| (o.org_id, o.components)).collect();
            stage.input(&cfg.issues_taxonomy)?;
            let tax = IssueTaxonomy::load(&cfg.issues_taxonomy)?;
            let docs = load_pseudodocs(cfg, &mut stage)?;
            build_env_dataset(&labels, &tax, &docs, cfg.k)?
        }
        Task::Sic2 => {
            let path = cfg.output_dir.join(COMPANIES_FILE);
            stage.input(&path)?;
            let companies: Vec<CompanyRecord> =
                fsutil::read_jsonl(&path).context("run fetch-edgar first")?;
            let docs;
            let source = match cfg.text_source {
                TextSourceKind::Item1 => TextSource::Item1,
                TextSourceKind::Pseudodoc => {
                    docs = load_pseudodocs(cfg, &mut stage)?;
                    TextSource::PseudoDocs(&docs)
                }
            };
            let build = SicBuildConfig {
                per_class: cfg.per_class,
                min_class: cfg.min_class,
                seed,
            };
            build_sic_dataset(&companies, source, build)?
        }
    };
    let sizes = cfg.split_sizes(dataset.examples.len()).map_err(usage)?;
    let dataset = split_dataset(&dataset, sizes, seed)?;
    dataset.save(&cfg.output_dir)?;
    for f in [DATASET_FILE, LABELSPACE_FILE] {
        stage.output(&cfg.output_dir.join(f))?;
    }
    for (k, v) in &dataset.provenance.counts {
        stage.count(k, *v);
    }
    log::info!(
        "{} examples over {} labels (train {}, dev {}, test {})",
        dataset.examples.len(),
        dataset.label_space.n(),
        dataset.split_len(Split::Train),
        dataset.split_len(Split::Dev),
        dataset.split_len(Split::Test)
    );
    stage.finish(&cfg.output_dir)
}

fn load_dataset(cfg: &PipelineConfig, stage: &mut StageRun) -> Result<LabeledDataset> {
    let ds = LabeledDataset::load(&cfg.output_dir).context("run build-dataset first")?;
    for f in [DATASET_FILE, LABELSPACE_FILE] {
        stage.input(&cfg.output_dir.join(f))?;
    }
    if ds.label_space.task != cfg.task {
        return Err(usage(format!(
            "dataset in {} is for task {}, config says {}",
            cfg.output_dir.display(),
            ds.label_space.task,
            cfg.task
        )));
    }
    Ok(ds)
}

fn descriptions(
    cfg: &PipelineConfig,
    labels: &[String],
    stage: &mut StageRun,
) -> Result<Vec<String>> {
    let described = match cfg.task {
        Task::Issues => {
            stage.input(&cfg.issues_taxonomy)?;
            IssueTaxonomy::load(&cfg.issues_taxonomy)?
                .describe_all(labels, cfg.description_style)?
        }
        Task::Sic2 => {
            stage.input(&cfg.sic_taxonomy)?;
            SicHierarchy::load(&cfg.sic_taxonomy)?.describe_all(labels, cfg.description_style)?
        }
    };
    Ok(described.into_iter().map(|d| d.text).collect())
}

fn train(cfg: &PipelineConfig) -> Result<()> {
    let train_cfg = cfg.train_config().map_err(usage)?;
    train_cfg
        .validate(cfg.architecture, TaskMode::from(cfg.task))
        .map_err(usage)?;
    let encoder = cfg.encoder_config().map_err(usage)?;
    let mut stage = StageRun::start("train", Some(cfg.hash()), Some(train_cfg.seed));
    let dataset = load_dataset(cfg, &mut stage)?;
    let descriptions = match cfg.architecture {
        Architecture::OrgModel1 => None,
        Architecture::OrgModel2 => Some((
            cfg.description_style,
            descriptions(cfg, &dataset.label_space.labels, &mut stage)?,
        )),
    };
    let spec = ModelSpec {
        architecture: cfg.architecture,
        threshold: cfg.threshold,
        encoder: encoder.clone(),
        descriptions,
    };
    let dir = cfg.output_dir.join(MODEL_DIR);
    std::fs::create_dir_all(&dir)?;
    let log = match encoder.kind {
        EncoderKind::HashedNgramBaseline => {
            let enc: Arc<dyn TextEncoder> = Arc::new(HashedNgramEncoder::new(&encoder)?);
            let (model, log) = train_frozen(enc, &spec, &dataset, &train_cfg)?;
            model.save(&dir)?;
            log
        }
        EncoderKind::PretrainedTransformer => {
            let pretrained = cfg.pretrained_dir.as_ref().expect("validated");
            let (tuned, log) = orgclass_bert::fine_tune(
                pretrained,
                &spec,
                &dataset,
                &train_cfg,
                &candle_core::Device::Cpu,
            )?;
            tuned.save(&dir)?;
            log
        }
    };
    fsutil::write_json_pretty(&dir.join(TRAIN_LOG_FILE), &log)?;
    stage.output(&dir)?;
    stage.count("train_examples", log.train_examples);
    stage.count("rows_per_epoch", log.rows_per_epoch);
    stage.finish(&cfg.output_dir)
}

fn load_model(cfg: &PipelineConfig) -> Result<Model> {
    let dir = cfg.output_dir.join(MODEL_DIR);
    let (meta, _) = orgclass::models::ModelMeta::load(&dir).context("run train first")?;
    Ok(match meta.encoder.kind {
        EncoderKind::HashedNgramBaseline => Model::load_baseline(&dir)?,
        EncoderKind::PretrainedTransformer => orgclass_bert::load_model(
            &dir,
            cfg.pretrained_dir.as_deref(),
            &candle_core::Device::Cpu,
        )?,
    })
}

fn predict(cfg: &PipelineConfig, split: SplitFilter) -> Result<()> {
    let mut stage = StageRun::start("predict", Some(cfg.hash()), cfg.seed);
    let dataset = load_dataset(cfg, &mut stage)?;
    let model = load_model(cfg)?;
    stage.input(&cfg.output_dir.join(MODEL_DIR))?;
    if model.meta.label_space != dataset.label_space {
        bail!("model label space differs from the dataset's");
    }
    let predictions = dataset
        .examples
        .iter()
        .filter(|e| split.keeps(e))
        .map(|e| model.predict(&e.org_id, &e.text))
        .collect::<std::result::Result<Vec<Prediction>, _>>()?;
    let out = cfg.output_dir.join(PREDICTIONS_FILE);
    fsutil::write_jsonl(&out, &predictions)?;
    stage.output(&out)?;
    stage.count("predictions", predictions.len());
    stage.finish(&cfg.output_dir)
}

pub struct EvaluateArgs {
    pub gold: Option<PathBuf>,
    pub pred: Option<PathBuf>,
    pub split: SplitFilter,
    pub labelspace: Option<PathBuf>,
    pub macro_f1_mode: Option<MacroF1Mode>,
    pub out: Option<PathBuf>,
}

fn evaluate(cfg: Option<&PipelineConfig>, args: EvaluateArgs) -> Result<()> {
    let from_output = |file: &str| cfg.map(|c| c.output_dir.join(file));
    let gold_path = args
        .gold
        .or_else(|| from_output(DATASET_FILE))
        .ok_or_else(|| usage("evaluate needs --gold or --config"))?;
    let pred_path = args
        .pred
        .or_else(|| from_output(PREDICTIONS_FILE))
        .ok_or_else(|| usage("evaluate needs --pred or --config"))?;
    let mode = args
        .macro_f1_mode
        .or(cfg.map(|c| c.macro_f1_mode))
        .unwrap_or_default();
    let out_dir = args
        .out
        .or_else(|| cfg.map(|c| c.output_dir.clone()))
        .unwrap_or_else(|| pred_path.parent().unwrap_or(Path::new(".")).to_path_buf());

    let mut stage = StageRun::start("evaluate", cfg.map(PipelineConfig::hash), None);
    stage.input(&gold_path)?;
    stage.input(&pred_path)?;
    let gold: Vec<Example> = fsutil::read_jsonl(&gold_path)
        .with_context(|| format!("reading {}", gold_path.display()))?;
    let preds: Vec<Prediction> = fsutil::read_jsonl(&pred_path)
        .with_context(|| format!("reading {}", pred_path.display()))?;
    let has_splits = gold.iter().any(|e| e.split.is_some());
    let gold: Vec<(String, BTreeSet<String>)> = gold
        .into_iter()
        .filter(|e| !has_splits || args.split.keeps(e))
        .map(|e| (e.org_id, e.labels))
        .collect();

    let sidecar = args.labelspace.or_else(|| {
        gold_path
            .parent()
            .map(|p| p.join(LABELSPACE_FILE))
            .filter(|p| p.is_file())
    });
    let labels: Vec<String> = match sidecar {
        Some(path) => {
            stage.input(&path)?;
            let ls: orgclass::datasets::LabelSpaceFile = fsutil::read_json(&path)?;
            ls.labels
        }
        None => gold
            .iter()
            .flat_map(|(_, l)| l.iter().cloned())
            .chain(preds.iter().flat_map(|p| p.labels.iter().cloned()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let predicted: Vec<(String, BTreeSet<String>)> =
        preds.into_iter().map(|p| (p.org_id, p.labels)).collect();
    let report = metrics::evaluate(&labels, &gold, &predicted, mode)?;
    let table = render_table(&report);
    print!("{table}");
    std::fs::create_dir_all(&out_dir)?;
    let json_path = out_dir.join(REPORT_JSON);
    let txt_path = out_dir.join(REPORT_TXT);
    fsutil::write_json_pretty(&json_path, &report)?;
    fsutil::write_atomic(&txt_path, table.as_bytes())?;
    stage.output(&json_path)?;
    stage.output(&txt_path)?;
    stage.count("examples", gold.len());
    stage.finish(&out_dir)
}
