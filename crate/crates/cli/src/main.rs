//! `slgcn` command line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use log::info;
use slgcn::bench::{benchmark_costs, BenchmarkConfig};
use slgcn::config::KEYS;
use slgcn::pipeline::{self, compare_sampling, run_pipeline, write_report};
use slgcn::{Error, ErrorKind, ExperimentConfig, Strategy};

#[derive(Debug, Parser)]
#[command(name = "slgcn", version, about = "Single-layer graph convolution recommender")]
struct Cli {
    /// Configuration file of `section.key = value` lines.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override one configuration key; repeatable.
    #[arg(short, long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Output directory, same as `--set run.output_dir=DIR`.
    #[arg(short, long, global = true)]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load, label and split the data.
    Ingest,
    /// Write candidate similarity scores of the configured strategy.
    Similarity,
    /// Sample the neighbor subgraph.
    Sample,
    /// Aggregate once and train, writing the checkpoint.
    Train,
    /// Score the checkpoint on the test split.
    Evaluate,
    /// Run every listed sampling strategy on a shared split and features.
    CompareSampling {
        #[arg(long, value_delimiter = ',', default_value = "random,1ord,2ord,da")]
        strategies: Vec<String>,
    },
    /// Count and time aggregate-once training against a recursive baseline.
    Benchmark {
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        /// Epochs actually timed; the rest are extrapolated.
        #[arg(long, default_value_t = 1)]
        timed_epochs: usize,
    },
    /// Collect the results in the output directory into report.txt.
    Report,
    /// Run every stage end to end.
    Run,
    /// Write the configured synthetic dataset as an interaction file.
    Synth { path: PathBuf },
    /// Print the effective configuration.
    Config,
}

fn keys_help() -> String {
    let width = KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::from("Configuration keys:\n");
    for (k, doc) in KEYS {
        s.push_str(&format!("  {k:width$}  {doc}\n"));
    }
    s.push_str("\nExit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.");
    s
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| match e {
            Error::Io { .. } => Error::Config(e.to_string()),
            e => e,
        })?,
        None => ExperimentConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(dir) = &cli.output_dir {
        cfg.run.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let cfg = resolve(cli)?;
    let dir = cfg.run.output_dir.clone();
    match &cli.command {
        Command::Ingest => {
            let split = pipeline::ingest_stage(&cfg)?;
            println!(
                "train={} validation={} test={}",
                split.train.len(),
                split.validation.len(),
                split.test.len()
            );
        }
        Command::Similarity => pipeline::similarity_stage(&cfg)?,
        Command::Sample => {
            let sub = pipeline::sample_stage(&cfg)?;
            println!("edges={}", sub.edge_count());
        }
        Command::Train => {
            let t = pipeline::train_stage(&cfg)?;
            println!("epochs_run={} aggregations={}", t.epochs_run, t.aggregations);
            if let Some(v) = t.best_val_auc {
                println!("best_val_auc={v}");
            }
        }
        Command::Evaluate => {
            let r = pipeline::evaluate_stage(&cfg)?;
            println!("auc={} ndcg10={}", r.auc, r.ndcg_at_10);
        }
        Command::CompareSampling { strategies } => {
            let strategies = strategies
                .iter()
                .map(|s| s.trim().parse::<Strategy>())
                .collect::<Result<Vec<_>, _>>()?;
            compare_sampling(&cfg, &strategies)?;
            print!(
                "{}",
                std::fs::read_to_string(dir.join(pipeline::SAMPLING_TABLE_FILE)).context("reading the sampling table")?
            );
        }
        Command::Benchmark {
            layers,
            epochs,
            timed_epochs,
        } => {
            let bench = BenchmarkConfig {
                layers: *layers,
                epochs: *epochs,
                timed_epochs: *timed_epochs,
            };
            print!("{}", benchmark_costs(&cfg, &bench)?.to_text());
        }
        Command::Report => print!("{}", write_report(&dir)?),
        Command::Run => {
            let s = run_pipeline(&cfg)?;
            info!("wrote {}", s.output_dir.display());
            println!("auc={} ndcg10={}", s.report.auc, s.report.ndcg_at_10);
        }
        Command::Synth { path } => {
            let data = pipeline::load_dataset(&cfg)?;
            slgcn::synth::write_interactions(&data.graph, path)?;
        }
        Command::Config => {
            cfg.validate()?;
            print!("{}", cfg.to_text());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>().map(Error::kind) {
        Some(ErrorKind::Data) => 3,
        Some(ErrorKind::Numeric) => 4,
        Some(ErrorKind::Config) | None => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let matches = Cli::command().after_long_help(keys_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // core errors already carry their causes in the message
            if e.downcast_ref::<Error>().is_some() {
                eprintln!("error: {e}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
