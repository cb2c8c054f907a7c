use std::path::{Path, PathBuf};

use clap::Parser;
use serde_json::{json, Value};

use crate::{exit_code, stages, Cli};

/// Exit code and error text of one in-process invocation.
struct Outcome {
    code: u8,
    message: String,
}

fn orgclass(args: &[&str]) -> Outcome {
    let argv = std::iter::once("orgclass").chain(args.iter().copied());
    match Cli::try_parse_from(argv) {
        Err(e) => Outcome {
            code: if e.use_stderr() { 1 } else { 0 },
            message: e.to_string(),
        },
        Ok(cli) => match stages::run(cli) {
            Ok(()) => Outcome {
                code: 0,
                message: String::new(),
            },
            Err(e) => Outcome {
                code: exit_code(&e),
                message: format!("{e:#}"),
            },
        },
    }
}

fn write(path: &Path, text: &str) -> PathBuf {
    std::fs::write(path, text).unwrap();
    path.to_path_buf()
}

fn jsonl(path: &Path, rows: &[Value]) {
    let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
    std::fs::write(path, text).unwrap();
}

/// A tiny issues project: three integrated issues, twelve organizations and
/// a search fixture whose snippets use disjoint vocabularies per issue.
fn issues_project(dir: &Path, extra: &str) -> PathBuf {
    let tax = json!({
        "integrated": [
            {"name": "Water", "description": "Rivers, lakes, aquifers and drinking water."},
            {"name": "Energy", "description": "Power generation and fuel use."},
            {"name": "Soil", "description": "Farmland soils, erosion and fertility."}
        ],
        "components": [
            {"name": "Watersheds", "parents": ["Water"]},
            {"name": "Renewables", "parents": ["Energy"]},
            {"name": "Erosion", "parents": ["Soil"]},
            {"name": "Irrigation", "parents": ["Water", "Soil"]}
        ]
    });
    write(&dir.join("issues.json"), &tax.to_string());
    let vocab = [
        ("Watersheds", "river lake aquifer wetland stream"),
        ("Renewables", "solar wind turbine battery grid"),
        ("Erosion", "topsoil compost tillage cover crop"),
    ];
    let mut orgs = Vec::new();
    let mut search = serde_json::Map::new();
    for i in 0..12 {
        let (component, words) = vocab[i % 3];
        let name = format!("Org {i}");
        orgs.push(json!({"org_id": format!("o{i:02}"), "name": name, "components": [component]}));
        search.insert(
            name.clone(),
            json!([
                {"title": name, "url": format!("https://o{i}.example/"), "snippet": format!("{name} works on {words}")},
                {"title": "news", "url": format!("https://news.example/{i}"), "snippet": words}
            ]),
        );
    }
    jsonl(&dir.join("orgs.jsonl"), &orgs);
    write(&dir.join("search.json"), &Value::Object(search).to_string());
    write(
        &dir.join("pipeline.toml"),
        &format!(
            "task = \"issues\"\noutput_dir = \"out\"\nissues_taxonomy = \"issues.json\"\n\
             organizations = \"orgs.jsonl\"\nsearch_fixture = \"search.json\"\nk = 3\n\
             split_train = 9\nsplit_test = 3\nhidden_size = 256\nepochs = 30\nbatch_size = 4\n\
             learning_rate = 0.1\n{extra}"
        ),
    )
}

fn ok(out: &Outcome) {
    assert_eq!(out.code, 0, "{}", out.message);
}

#[test]
fn help_and_bad_subcommand_exit_codes() {
    assert_eq!(orgclass(&["--help"]).code, 0);
    assert_eq!(orgclass(&["frobnicate"]).code, 1);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = issues_project(dir.path(), "seed = 1\nlearning_rat = 0.1\n");
    let out = orgclass(&["--config", cfg.to_str().unwrap(), "build-dataset"]);
    assert_eq!(out.code, 1);
    assert!(out.message.contains("learning_rat"), "{}", out.message);
}

#[test]
fn seeded_stages_need_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = issues_project(dir.path(), "");
    let cfg = cfg.to_str().unwrap();
    ok(&orgclass(&["--config", cfg, "fetch-snippets"]));
    let out = orgclass(&["--config", cfg, "build-dataset"]);
    assert_eq!(out.code, 1);
    assert!(out.message.contains("seed"), "{}", out.message);
    ok(&orgclass(&[
        "--config",
        cfg,
        "--seed",
        "5",
        "build-dataset",
    ]));
}

#[test]
fn multilabel_task_rejects_cross_entropy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = issues_project(dir.path(), "seed = 1\nloss = \"cross_entropy\"\n");
    let cfg = cfg.to_str().unwrap();
    ok(&orgclass(&["--config", cfg, "fetch-snippets"]));
    ok(&orgclass(&["--config", cfg, "build-dataset"]));
    let out = orgclass(&["--config", cfg, "train"]);
    assert_ne!(out.code, 0);
    assert!(
        out.message.contains("binary_cross_entropy"),
        "{}",
        out.message
    );
    assert!(!dir.path().join("out/model/model.json").exists());
}

#[test]
fn evaluate_perfect_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.jsonl");
    let pred = dir.path().join("pred.jsonl");
    jsonl(
        &gold,
        &[
            json!({"org_id": "a", "text": "x", "labels": ["Water", "Soil"]}),
            json!({"org_id": "b", "text": "y", "labels": ["Energy"]}),
        ],
    );
    jsonl(
        &pred,
        &[
            json!({"org_id": "b", "scores": [], "labels": ["Energy"]}),
            json!({"org_id": "a", "scores": [], "labels": ["Soil", "Water"]}),
        ],
    );
    let report_dir = dir.path().join("report");
    let out = orgclass(&[
        "evaluate",
        "--gold",
        gold.to_str().unwrap(),
        "--pred",
        pred.to_str().unwrap(),
        "--macro-f1-mode",
        "hmean_of_macro_pr",
        "--out",
        report_dir.to_str().unwrap(),
    ]);
    ok(&out);
    let report: Value =
        serde_json::from_slice(&std::fs::read(report_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["macro_f1_mode"], "hmean_of_macro_pr");
    assert_eq!(report["per_class"].as_array().unwrap().len(), 3);
    for agg in [&report["micro"], &report["macro"]] {
        for k in ["precision", "recall", "f1"] {
            assert_eq!(agg[k], 1.0);
        }
    }
    let table = std::fs::read_to_string(report_dir.join("report.txt")).unwrap();
    assert!(table.contains("Macro Average") && table.contains("100.0"));
}

#[test]
fn evaluate_reports_missing_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.jsonl");
    let pred = dir.path().join("pred.jsonl");
    jsonl(
        &gold,
        &[json!({"org_id": "a", "text": "x", "labels": ["Water"]})],
    );
    jsonl(&pred, &[]);
    let out = orgclass(&[
        "evaluate",
        "--gold",
        gold.to_str().unwrap(),
        "--pred",
        pred.to_str().unwrap(),
    ]);
    assert_eq!(out.code, 2);
    assert!(out.message.contains("no prediction"), "{}", out.message);
}

#[test]
fn issues_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = issues_project(dir.path(), "seed = 3\n");
    let cfg = cfg.to_str().unwrap();
    for stage in ["fetch-snippets", "build-dataset", "train"] {
        ok(&orgclass(&["--config", cfg, stage]));
    }
    ok(&orgclass(&["--config", cfg, "predict", "--split", "all"]));
    ok(&orgclass(&["--config", cfg, "evaluate", "--split", "all"]));
    let out = dir.path().join("out");
    let report: Value =
        serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["macro"]["f1"], 1.0, "{report}");
    let run: Value = serde_json::from_slice(&std::fs::read(out.join("run.json")).unwrap()).unwrap();
    for stage in [
        "fetch-snippets",
        "build-dataset",
        "train",
        "predict",
        "evaluate",
    ] {
        let rec = &run["stages"][stage];
        assert!(rec["config_hash"].is_string(), "{stage}: {rec}");
        assert!(
            rec["outputs"].as_object().is_some_and(|o| !o.is_empty()),
            "{stage}: {rec}"
        );
    }
    assert_eq!(run["stages"]["build-dataset"]["seed"], 3);
    assert_eq!(run["stages"]["build-dataset"]["counts"]["examples"], 12);
}
