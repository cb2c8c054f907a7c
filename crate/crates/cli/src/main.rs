mod config;
mod manifest;
mod stages;
#[cfg(test)]
mod tests;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use orgclass::datasets::Task;

/// Organization classification pipeline.
#[derive(Debug, Parser)]
#[command(name = "orgclass", version)]
struct Cli {
    /// Pipeline config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the response cache directory.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fetch EDGAR company records and 10-K Item 1 text.
    FetchEdgar,
    /// Build search-snippet pseudo-documents for each organization.
    FetchSnippets,
    /// Build and split the labeled dataset.
    BuildDataset {
        /// Overrides the config's task.
        #[arg(long)]
        task: Option<Task>,
    },
    /// Train a classifier on the dataset's train split.
    Train,
    /// Score a dataset split with the trained model.
    Predict {
        /// train, dev, test or all.
        #[arg(long, default_value = "test")]
        split: stages::SplitFilter,
    },
    /// Compare predictions with gold labels.
    Evaluate {
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
        /// train, dev, test or all. Gold files without splits use all rows.
        #[arg(long, default_value = "test")]
        split: stages::SplitFilter,
        #[arg(long)]
        labelspace: Option<PathBuf>,
        /// mean_of_f1 or hmean_of_macro_pr.
        #[arg(long)]
        macro_f1_mode: Option<orgclass::metrics::MacroF1Mode>,
        /// Directory for report.json and report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match stages::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 for usage and configuration errors, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.is::<stages::UsageError>() {
        1
    } else {
        2
    }
}
