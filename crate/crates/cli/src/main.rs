use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use wmse_cli::commands::{self, Analysis};
use wmse_cli::config::ExperimentConfig;
use wmse_cli::experiment::{CorpusSize, RunSettings};
use wmse_cli::Overrides;
use wmse_core::data::{Task, DEFAULT_SEGMENT_LENGTH};
use wmse_core::training::TrainConfig;
use wmse_core::{Error, Result};

/// Multichannel waveform-mapping speech enhancement.
#[derive(Parser)]
#[command(name = "wmse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus (float32 WAVs plus manifest.jsonl).
    Generate {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_SEGMENT_LENGTH)]
        segment_length: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model described by a TOML experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Enhance WAV input(s); channels are taken in file order.
    Enhance {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on a generated corpus (utterance_id, stoi, mse).
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "metrics.csv")]
        out: PathBuf,
    },
    /// Export first-layer filter responses or feature maps.
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        what: What,
        /// Input WAV(s) for `features`.
        #[arg(long = "in", num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "analysis")]
        out: PathBuf,
    },
    /// Train and test several models over several seeds.
    Compare {
        #[arg(long)]
        task: Task,
        /// Comma-separated, e.g. `SDFCN,SDFCN(L),SDFCN(R)`.
        #[arg(long)]
        models: String,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
        #[arg(long, default_value_t = 50)]
        n_train: usize,
        #[arg(long, default_value_t = 10)]
        n_test: usize,
        #[arg(long, default_value_t = 16_000)]
        segment_length: usize,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        ddae_hidden: Option<usize>,
        #[arg(long, default_value_t = 180)]
        epochs: usize,
        #[arg(long, default_value_t = 0.001)]
        learning_rate: f64,
        #[arg(long, default_value_t = 4)]
        batch_size: usize,
        #[arg(long, default_value = "comparison.csv")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Filters,
    Features,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            task,
            n,
            seed,
            segment_length,
            out,
        } => {
            let manifest = commands::generate(task, n, seed, segment_length, &out)?;
            println!("{}", manifest.display());
        }
        Command::Train { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let o = commands::train(&cfg)?;
            println!(
                "{} stoi={:.4} mse={:.6}",
                o.checkpoint.display(),
                o.report.mean_stoi(),
                o.report.mean_mse()
            );
        }
        Command::Enhance {
            checkpoint,
            inputs,
            out,
        } => commands::enhance(&checkpoint, &inputs, &out)?,
        Command::Evaluate {
            checkpoint,
            corpus,
            out,
        } => {
            let r = commands::evaluate_corpus(&checkpoint, &corpus, &out)?;
            println!("stoi={:.4} mse={:.6}", r.mean_stoi(), r.mean_mse());
        }
        Command::Analyze {
            checkpoint,
            what,
            inputs,
            out,
        } => {
            let what = match what {
                What::Filters => Analysis::Filters,
                What::Features => Analysis::Features,
            };
            if matches!(what, Analysis::Features) && inputs.is_empty() {
                return Err(Error::InvalidArgument("features need --in WAV(s)".into()));
            }
            commands::analyze(&checkpoint, what, &inputs, &out)?;
        }
        Command::Compare {
            task,
            models,
            seeds,
            n_train,
            n_test,
            segment_length,
            width,
            ddae_hidden,
            epochs,
            learning_rate,
            batch_size,
            out,
        } => {
            let models = commands::parse_model_list(&models)?;
            let settings = RunSettings {
                overrides: Overrides { width, ddae_hidden },
                train: TrainConfig {
                    max_epochs: epochs,
                    learning_rate,
                    batch_size,
                    ..TrainConfig::default()
                },
                ..RunSettings::default()
            };
            let size = CorpusSize {
                n_train,
                n_test,
                segment_length,
            };
            commands::compare_to_csv(task, &models, seeds, size, &settings, &out)?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", commands::error_line(&e));
            ExitCode::FAILURE
        }
    }
}
