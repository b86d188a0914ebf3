//! Implementations behind each subcommand.

use std::path::{Path, PathBuf};

use wmse_core::data::{load_wav, peak_normalize, save_wav, synthesize_corpus, write_corpus, Encoding, Task};
use wmse_core::eval::{analyze_filters, first_layer_features, MetricsReport};
use wmse_core::models::Model;
use wmse_core::numerics::Tensor1D;
use wmse_core::{Error, Result};

use crate::checkpoint;
use crate::config::{ExperimentConfig, Metric};
use crate::enhancer::{Enhancer, Network};
use crate::experiment::{compare, evaluate, train_model, Comparison, CorpusSize, Dataset, RunSettings, TEST_SEED_OFFSET};
use crate::model_id::ModelId;

pub const CHECKPOINT_FILE: &str = "model.wmse";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes a synthetic corpus and returns its manifest path.
pub fn generate(task: Task, n: usize, seed: u64, segment_length: usize, out: &Path) -> Result<PathBuf> {
    if n == 0 {
        return Err(Error::InvalidArgument("--n must be at least 1".into()));
    }
    create_dir(out)?;
    write_corpus(out, &synthesize_corpus(task, n, seed, segment_length)?)
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub report: MetricsReport,
}

/// Trains per the config, then writes the resolved config, checkpoint,
/// training logs and test metrics into the output directory.
pub fn train(config: &ExperimentConfig) -> Result<TrainOutcome> {
    let c = &config.corpus;
    let train_set = match &c.train_dir {
        Some(d) => Dataset::load(d)?,
        None => Dataset::synthetic(config.task, c.n_train, c.seed, c.segment_length)?,
    };
    let test_set = match &c.test_dir {
        Some(d) => Dataset::load(d)?,
        None => Dataset::synthetic(
            config.task,
            c.n_test.max(1),
            c.seed.wrapping_add(TEST_SEED_OFFSET),
            c.segment_length,
        )?,
    };
    let out = &config.output;
    create_dir(out)?;
    let resolved = config.resolved_toml()?;
    let cfg_path = out.join("config.toml");
    std::fs::write(&cfg_path, resolved).map_err(|e| Error::io(&cfg_path, e))?;

    let id = config.model_id()?.qualified(config.task)?;
    let run = train_model(&id, &train_set, &config.run_settings())?;
    for (name, log) in &run.logs {
        let file = if name == "model" {
            "train_log.csv".to_string()
        } else {
            format!("train_log_{name}.csv")
        };
        log.write_csv(&out.join(file))?;
    }
    let ckpt = out.join(CHECKPOINT_FILE);
    checkpoint::save(&ckpt, &run.enhancer)?;
    let mut report = evaluate(&run.enhancer, &test_set, config.train.seed)?;
    if !config.eval.metrics.contains(&Metric::Stoi) {
        report.scores.iter_mut().for_each(|s| s.stoi = f64::NAN);
    }
    if !config.eval.metrics.contains(&Metric::Mse) {
        report.scores.iter_mut().for_each(|s| s.mse = f64::NAN);
    }
    report.write_csv(&out.join("metrics.csv"))?;
    Ok(TrainOutcome {
        checkpoint: ckpt,
        report,
    })
}

/// All channels of the given WAV files, in file order.
pub fn read_inputs(paths: &[PathBuf]) -> Result<Vec<Vec<f64>>> {
    let mut channels = Vec::new();
    for p in paths {
        channels.extend(load_wav(p)?.channels);
    }
    if channels.is_empty() {
        return Err(Error::InvalidArgument("no input audio".into()));
    }
    if channels.iter().any(|c| c.len() != channels[0].len()) {
        return Err(Error::Shape("input channels differ in length".into()));
    }
    Ok(channels)
}

/// Peak-normalizes each input channel, enhances, and writes a float32 WAV.
pub fn enhance(ckpt: &Path, inputs: &[PathBuf], out: &Path) -> Result<()> {
    let mut e = checkpoint::load(ckpt)?;
    let channels: Vec<Vec<f64>> = read_inputs(inputs)?.iter().map(|c| peak_normalize(c)).collect();
    if channels.len() != e.input_channels() {
        return Err(Error::ChannelMismatch {
            expected: e.input_channels(),
            actual: channels.len(),
        });
    }
    let refs: Vec<&[f64]> = channels.iter().map(Vec::as_slice).collect();
    let y = e.enhance(&refs)?;
    save_wav(out, &[&y], Encoding::Float32)
}

pub fn evaluate_corpus(ckpt: &Path, corpus: &Path, out: &Path) -> Result<MetricsReport> {
    let e = checkpoint::load(ckpt)?;
    let report = evaluate(&e, &Dataset::load(corpus)?, 0)?;
    report.write_csv(out)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Analysis {
    Filters,
    Features,
}

/// The network whose first layer is a filter bank: the model itself, or
/// the refiner of a residual composite.
fn filter_bank(e: &Enhancer) -> Result<&Model> {
    match &e.network {
        Network::Plain(m) => Ok(m),
        Network::Residual(c) => Ok(&c.refiner),
        Network::Ddae(_) => Err(Error::InvalidArgument(
            "DDAE has no convolutional first layer".into(),
        )),
    }
}

pub fn analyze(ckpt: &Path, what: Analysis, inputs: &[PathBuf], out: &Path) -> Result<()> {
    let e = checkpoint::load(ckpt)?;
    let model = filter_bank(&e)?;
    create_dir(out)?;
    match what {
        Analysis::Filters => analyze_filters(model)?.write(out),
        Analysis::Features => {
            let channels: Vec<Vec<f64>> = read_inputs(inputs)?.iter().map(|c| peak_normalize(c)).collect();
            let x = Tensor1D::from_channels(&channels)?;
            first_layer_features(model, &x, 160)?.write(out)
        }
    }
}

/// Splits a comma-separated model list, keeping commas inside parentheses.
pub fn parse_model_list(s: &str) -> Result<Vec<ModelId>> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                out.push(cur.trim().parse()?);
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().parse()?);
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("empty model list".into()));
    }
    Ok(out)
}

pub fn compare_to_csv(
    task: Task,
    models: &[ModelId],
    seeds: usize,
    size: CorpusSize,
    settings: &RunSettings,
    out: &Path,
) -> Result<Comparison> {
    let seeds: Vec<u64> = (0..seeds as u64).collect();
    let table = compare(task, models, &seeds, size, settings, |r| {
        eprintln!("{} seed {}: stoi {:.4} mse {:.5}", r.model, r.seed, r.stoi, r.mse);
    })?;
    std::fs::write(out, table.to_csv()).map_err(|e| Error::io(out, e))?;
    Ok(table)
}

/// Stable snake_case name of an error variant.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Shape(_) => "shape",
        Error::InvalidArgument(_) => "invalid_argument",
        Error::NonFinite(_) => "non_finite",
        Error::UnknownModel(_) => "unknown_model",
        Error::ChannelMismatch { .. } => "channel_mismatch",
        Error::UnsupportedAudio(_) => "unsupported_audio",
        Error::TooShort(_) => "too_short",
        Error::Diverged { .. } => "diverged",
        Error::PrimaryNotTrained => "primary_not_trained",
        Error::Checkpoint(_) => "checkpoint",
        Error::Config(_) => "config",
        Error::Io { .. } => "io",
        Error::Wav(_) => "wav",
        Error::Json(_) => "json",
        Error::Png(_) => "png",
    }
}

/// `error kind=<kind>: <message>` on a single line.
pub fn error_line(e: &Error) -> String {
    let text = e.to_string();
    let msg: Vec<&str> = text.split_whitespace().collect();
    format!("error kind={}: {}", error_kind(e), msg.join(" "))
}
