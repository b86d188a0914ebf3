//! Training and evaluation runs shared by the `train` and `compare` commands.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use wmse_core::data::{read_corpus, synthesize_corpus, MultichannelSegment, Task, MANIFEST};
use wmse_core::eval::{mse_metric, stoi, MetricsReport, UtteranceScore};
use wmse_core::training::{
    split_validation, train, train_residual, Example, TrainConfig, TrainLog,
};
use wmse_core::{Error, Result};

use crate::enhancer::{Enhancer, Network, Overrides};
use crate::model_id::ModelId;

/// Offset between a run's training-corpus seed and its test-corpus seed.
pub const TEST_SEED_OFFSET: u64 = 1_000_003;

#[derive(Debug, Clone)]
pub struct Item {
    pub id: String,
    pub segment: MultichannelSegment,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub items: Vec<Item>,
}

impl Dataset {
    pub fn synthetic(task: Task, n: usize, seed: u64, segment_length: usize) -> Result<Self> {
        let items = synthesize_corpus(task, n, seed, segment_length)?
            .into_iter()
            .map(|u| Item {
                id: u.id,
                segment: u.segment,
            })
            .collect();
        Ok(Dataset {
            name: format!("{task}-{seed}"),
            items,
        })
    }

    /// Reads a corpus directory written by `generate`.
    pub fn load(dir: &Path) -> Result<Self> {
        let items = read_corpus(&dir.join(MANIFEST))?
            .into_iter()
            .map(|(e, segment)| Item { id: e.id, segment })
            .collect::<Vec<_>>();
        if items.is_empty() {
            return Err(Error::InvalidArgument(format!("{} holds no utterances", dir.display())));
        }
        Ok(Dataset {
            name: dir.display().to_string(),
            items,
        })
    }

    pub fn channels(&self) -> usize {
        self.items.first().map_or(0, |i| i.segment.channel_count())
    }

    fn selected(&self, channels: &[usize]) -> Result<Vec<MultichannelSegment>> {
        self.items.iter().map(|i| i.segment.select(channels)).collect()
    }
}

/// Everything that shapes a run besides the model id and data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub overrides: Overrides,
    /// Its seed also initializes the network.
    pub train: TrainConfig,
    /// Stage-1 config of residual models; `train` when absent.
    pub primary_train: Option<TrainConfig>,
    pub validation_fraction: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            overrides: Overrides::default(),
            train: TrainConfig::default(),
            primary_train: None,
            validation_fraction: 0.1,
        }
    }
}

impl RunSettings {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        if let Some(p) = &mut self.primary_train {
            p.seed = seed;
        }
        self
    }
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub enhancer: Enhancer,
    /// `("primary", log)` then `("refiner", log)` for residual models.
    pub logs: Vec<(String, TrainLog)>,
}

fn examples(segments: &[MultichannelSegment], idx: &[usize]) -> Vec<Example> {
    idx.iter()
        .map(|&i| Example::new(segments[i].input(), segments[i].target()))
        .collect()
}

/// Builds and trains `id` on `data`, holding out a hashed validation split.
pub fn train_model(id: &ModelId, data: &Dataset, settings: &RunSettings) -> Result<TrainedRun> {
    let channels = id.resolve_channels(data.channels())?;
    let seed = settings.train.seed;
    let mut enhancer = Enhancer::build(id, channels.clone(), settings.overrides, seed)?;
    let segments = data.selected(&channels)?;
    let ids: Vec<String> = data.items.iter().map(|i| i.id.clone()).collect();
    let (ti, vi) = split_validation(&ids, settings.validation_fraction);
    let logs = match &mut enhancer.network {
        Network::Plain(m) => {
            let log = train(m, &examples(&segments, &ti), &examples(&segments, &vi), &settings.train)?;
            vec![("model".to_string(), log)]
        }
        Network::Residual(c) => {
            let pcfg = settings.primary_train.as_ref().unwrap_or(&settings.train);
            let logs = train_residual(
                c,
                &examples(&segments, &ti),
                &examples(&segments, &vi),
                pcfg,
                &settings.train,
            )?;
            vec![("primary".to_string(), logs.primary), ("refiner".to_string(), logs.refiner)]
        }
        Network::Ddae(d) => {
            let noisy: Vec<Vec<Vec<f64>>> = ti.iter().map(|&i| segments[i].channels.clone()).collect();
            let clean: Vec<Vec<f64>> = ti.iter().map(|&i| segments[i].reference.clone()).collect();
            d.fit_normalization(&noisy, &clean)?;
            let mk = |idx: &[usize]| -> Result<Vec<Example>> {
                idx.iter()
                    .map(|&i| {
                        let s = &segments[i];
                        Ok(Example::new(d.features(&s.channel_refs())?, d.target(&s.reference)?))
                    })
                    .collect()
            };
            let (tr, va) = (mk(&ti)?, mk(&vi)?);
            vec![("model".to_string(), train(d, &tr, &va, &settings.train)?)]
        }
    };
    Ok(TrainedRun { enhancer, logs })
}

/// Worker count: `WMSE_THREADS` if set, else the available parallelism.
pub fn workers() -> usize {
    std::env::var("WMSE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Maps `f` over `items` on up to `workers` threads, each with its own copy
/// of `state`. Results keep the input order.
pub fn par_map<T, R, S, F>(items: &[T], workers: usize, state: &S, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    S: Clone + Send,
    F: Fn(&mut S, &T) -> Result<R> + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        let mut s = state.clone();
        return items.iter().map(|t| f(&mut s, t)).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let mut s = state.clone();
                let f = &f;
                scope.spawn(move || part.iter().map(|t| f(&mut s, t)).collect::<Result<Vec<R>>>())
            })
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("worker panicked")?);
        }
        Ok(out)
    })
}

/// STOI and MSE of the enhanced output against each item's reference.
pub fn evaluate(enhancer: &Enhancer, data: &Dataset, seed: u64) -> Result<MetricsReport> {
    let scores = par_map(&data.items, workers(), enhancer, |e, item| {
        let inputs = e.select(&item.segment.channels)?;
        let y = e.enhance(&inputs)?;
        Ok(UtteranceScore {
            utterance_id: item.id.clone(),
            stoi: stoi(&item.segment.reference, &y)?,
            mse: mse_metric(&item.segment.reference, &y)?,
        })
    })?;
    Ok(MetricsReport {
        model: enhancer.id.to_string(),
        corpus: data.name.clone(),
        seed,
        scores,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub model: String,
    pub seed: u64,
    pub stoi: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
}

/// Sizes of the synthetic corpora a comparison trains and tests on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSize {
    pub n_train: usize,
    pub n_test: usize,
    pub segment_length: usize,
}

impl Comparison {
    pub fn mean(&self, model: &str) -> Option<(f64, f64)> {
        let rows: Vec<&CompareRow> = self.rows.iter().filter(|r| r.model == model).collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        Some((
            rows.iter().map(|r| r.stoi).sum::<f64>() / n,
            rows.iter().map(|r| r.mse).sum::<f64>() / n,
        ))
    }

    pub fn get(&self, model: &str, seed: u64) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.model == model && r.seed == seed)
    }

    /// Per-seed rows, then one `mean` row per model in first-seen order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,seed,stoi,mse\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.model, r.seed, r.stoi, r.mse);
        }
        let mut seen: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.model.as_str()) {
                seen.push(&r.model);
                let (st, ms) = self.mean(&r.model).expect("model has rows");
                let _ = writeln!(s, "{},mean,{},{}", r.model, st, ms);
            }
        }
        s
    }
}

/// Trains and tests every model on a fresh synthetic corpus per seed.
pub fn compare(
    task: Task,
    models: &[ModelId],
    seeds: &[u64],
    size: CorpusSize,
    settings: &RunSettings,
    mut progress: impl FnMut(&CompareRow),
) -> Result<Comparison> {
    let mut out = Comparison::default();
    for &seed in seeds {
        let train_set = Dataset::synthetic(task, size.n_train, seed, size.segment_length)?;
        let test_set = Dataset::synthetic(
            task,
            size.n_test,
            seed.wrapping_add(TEST_SEED_OFFSET),
            size.segment_length,
        )?;
        for id in models {
            let id = id.qualified(task)?;
            let run = train_model(&id, &train_set, &settings.clone().with_seed(seed))?;
            let report = evaluate(&run.enhancer, &test_set, seed)?;
            let row = CompareRow {
                model: id.to_string(),
                seed,
                stoi: report.mean_stoi(),
                mse: report.mean_mse(),
            };
            progress(&row);
            out.rows.push(row);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_settings() -> RunSettings {
        RunSettings {
            overrides: Overrides {
                width: Some(3),
                ddae_hidden: Some(8),
            },
            train: TrainConfig {
                max_epochs: 1,
                ..TrainConfig::default()
            },
            ..RunSettings::default()
        }
    }

    #[test]
    fn par_map_keeps_order() {
        let items: Vec<u32> = (0..37).collect();
        let out = par_map(&items, 4, &10u32, |s, &x| Ok(x + *s)).unwrap();
        assert_eq!(out, (10..47).collect::<Vec<_>>());
        let err = par_map(&items, 3, &(), |_, &x| {
            if x == 20 {
                Err(Error::InvalidArgument("x".into()))
            } else {
                Ok(x)
            }
        });
        assert!(err.is_err());
    }

    #[test]
    fn every_family_trains_and_evaluates() {
        let data = Dataset::synthetic(Task::Iem, 3, 2, 10_000).unwrap();
        for name in ["FCN-55(L)", "rSDFCN", "DDAE"] {
            let id: ModelId = name.parse().unwrap();
            let run = train_model(&id, &data, &tiny_settings()).unwrap();
            let r = evaluate(&run.enhancer, &data, 0).unwrap();
            assert_eq!(r.scores.len(), 3);
            assert!(r.scores.iter().all(|s| (0.0..=1.0).contains(&s.stoi) && s.mse.is_finite()), "{name}");
        }
    }

    #[test]
    fn comparison_csv_lists_seeds_and_means() {
        let c = Comparison {
            rows: vec![
                CompareRow { model: "A".into(), seed: 0, stoi: 0.5, mse: 0.1 },
                CompareRow { model: "A".into(), seed: 1, stoi: 0.7, mse: 0.3 },
            ],
        };
        let csv = c.to_csv();
        assert!(csv.contains("A,0,0.5,0.1\n"));
        assert!(csv.ends_with("A,mean,0.6,0.2\n"), "{csv}");
    }
}
