//! `textomet`: starred-corpus textometry and sociolinguistic label transfer.
//!
//! Exit codes: 0 on success, 1 on stage failure, 2 on usage or parse errors.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Failure;
use config::FileConfig;

#[derive(Parser)]
#[command(
    name = "textomet",
    version,
    about = "Corpus statistics, lexical specificity, descending hierarchical classification,\n\
             and majority-vote label transfer over starred corpora"
)]
struct Cli {
    /// TOML configuration file; command-line flags win over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (defaults to the number of cores). Output never
    /// depends on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus size report: texts, forms, occurrences, lemmas (CSV on stdout).
    Stats {
        /// Starred corpus file.
        corpus: PathBuf,
    },
    /// Signed hypergeometric specificity of each form for each part.
    Specificity {
        corpus: PathBuf,
        /// Partition the corpus by this starred variable.
        #[arg(long)]
        var: String,
        /// Keep only the top N rows per part.
        #[arg(long)]
        banner: Option<usize>,
    },
    /// Descending hierarchical classification with term and variable
    /// profiles and a DOT dendrogram.
    Chd {
        corpus: PathBuf,
        /// Maximum number of terminal classes.
        #[arg(long)]
        max_classes: Option<usize>,
        /// Terminal classes smaller than this are reported unclassified.
        #[arg(long)]
        min_class_size: Option<usize>,
        /// Also write the document-term matrix (`dtm.csv` coordinate list
        /// plus `vocabulary.csv`).
        #[arg(long)]
        export_dtm: bool,
    },
    /// Train the three classifiers for one or more target variables.
    Train {
        /// Labeled starred corpus.
        corpus: PathBuf,
        /// Target variable; repeatable.
        #[arg(long = "target", required = true)]
        targets: Vec<String>,
    },
    /// Apply trained models to a corpus, producing predictions.csv.
    Predict {
        corpus: PathBuf,
        /// Directory holding `embedding.vec` and per-target models
        /// (as written by `train` under OUT/models).
        #[arg(long)]
        models: PathBuf,
        /// Restrict to these targets (default: everything trained).
        #[arg(long = "target")]
        targets: Vec<String>,
    },
    /// Add majority-vote predictions to a corpus as starred pseudo-variables.
    Inject {
        corpus: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Prefix of the injected variable names.
        #[arg(long, default_value = "pred_")]
        prefix: String,
    },
    /// Confusion-matrix metrics of predictions against a labeled corpus.
    Evaluate {
        /// Gold labeled corpus.
        corpus: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
    },
    /// End-to-end run: train, predict, vote, inject, specificity, chd,
    /// reports, manifest.
    Pipeline,
}

fn effective_config(cli: &Cli) -> Result<FileConfig, Failure> {
    match &cli.config {
        Some(path) => FileConfig::load(path).map_err(commands::usage_failure),
        None => Ok(FileConfig::default()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| commands::usage_failure(e.into()))?;
    }
    let mut config = effective_config(&cli)?;
    let seed = cli.seed.unwrap_or(config.pipeline.seed);

    match &cli.command {
        Command::Stats { corpus } => {
            let csv = commands::cmd_stats(corpus, &config)?;
            print!("{csv}");
            Ok(())
        }
        Command::Specificity { corpus, var, banner } => {
            if let Some(csv) =
                commands::cmd_specificity(corpus, var, *banner, &config, cli.out.as_deref())?
            {
                print!("{csv}");
            }
            Ok(())
        }
        Command::Chd { corpus, max_classes, min_class_size, export_dtm } => {
            if let Some(n) = max_classes {
                config.chd.max_classes = *n;
            }
            if let Some(n) = min_class_size {
                config.chd.min_class_size = *n;
            }
            let out = cli.out.clone().ok_or_else(|| {
                commands::usage_failure(anyhow::anyhow!("chd requires --out DIR"))
            })?;
            commands::cmd_chd(corpus, &config, *export_dtm, &out)
        }
        Command::Train { corpus, targets } => {
            let out = cli.out.clone().ok_or_else(|| {
                commands::usage_failure(anyhow::anyhow!("train requires --out DIR"))
            })?;
            commands::cmd_train(corpus, targets, &config, seed, &out)
        }
        Command::Predict { corpus, models, targets } => {
            let out = cli.out.clone().ok_or_else(|| {
                commands::usage_failure(anyhow::anyhow!("predict requires --out DIR"))
            })?;
            commands::cmd_predict(corpus, models, targets, &config, &out)
        }
        Command::Inject { corpus, predictions, prefix } => {
            let out = cli.out.clone().ok_or_else(|| {
                commands::usage_failure(anyhow::anyhow!("inject requires --out DIR"))
            })?;
            commands::cmd_inject(corpus, predictions, prefix, &out)
        }
        Command::Evaluate { corpus, predictions } => {
            if let Some(csv) = commands::cmd_evaluate(corpus, predictions, cli.out.as_deref())? {
                print!("{csv}");
            }
            Ok(())
        }
        Command::Pipeline => commands::cmd_pipeline(&config, cli.seed, cli.out.clone()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
