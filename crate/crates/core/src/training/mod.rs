//! Mini-batch Adam training with validation-based checkpoint selection.

mod residual;

pub use residual::{residual_examples, residual_loss, train_refiner, train_residual, ResidualLogs};

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;
use crate::numerics::{adam_step, mse_grad, mse_loss, AdamState, Mode, Param, Tensor1D};
use crate::spectral::Ddae;

/// One training pair; `aux` feeds auxiliary stage-0 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Tensor1D,
    pub aux: Option<Tensor1D>,
    pub target: Tensor1D,
}

impl Example {
    pub fn new(input: Tensor1D, target: Tensor1D) -> Self {
        Example {
            input,
            aux: None,
            target,
        }
    }

    fn crop(&self, start: usize, len: usize) -> Result<Example> {
        let cut = |t: &Tensor1D| -> Result<Tensor1D> {
            let v = (0..t.channels())
                .flat_map(|c| t.channel(c)[start..start + len].iter().copied())
                .collect();
            Tensor1D::from_vec(t.channels(), len, v)
        };
        Ok(Example {
            input: cut(&self.input)?,
            aux: self.aux.as_ref().map(cut).transpose()?,
            target: cut(&self.target)?,
        })
    }
}

/// A network that maps an example's input (and aux) to a target-shaped output.
pub trait Trainable {
    /// Training-mode forward that caches what `backward` needs.
    fn forward_train(&mut self, input: &Tensor1D, aux: Option<&Tensor1D>) -> Result<Tensor1D>;
    /// Accumulates parameter gradients.
    fn backward(&mut self, upstream: &Tensor1D) -> Result<()>;
    fn predict(&mut self, input: &Tensor1D, aux: Option<&Tensor1D>) -> Result<Tensor1D>;
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;
    fn clear_caches(&mut self);
}

impl Trainable for Model {
    fn forward_train(&mut self, input: &Tensor1D, aux: Option<&Tensor1D>) -> Result<Tensor1D> {
        self.forward(input, aux, Mode::Training)
    }

    fn backward(&mut self, upstream: &Tensor1D) -> Result<()> {
        self.backward_with_aux(upstream).map(|_| ())
    }

    fn predict(&mut self, input: &Tensor1D, aux: Option<&Tensor1D>) -> Result<Tensor1D> {
        self.forward(input, aux, Mode::Inference)
    }

    fn params(&self) -> Vec<&Param> {
        Model::params(self)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Model::params_mut(self)
    }

    fn clear_caches(&mut self) {
        Model::clear_caches(self)
    }
}

/// Examples are `(features, normalized clean LPS)` pairs from
/// [`Ddae::features`] and [`Ddae::target`].
impl Trainable for Ddae {
    fn forward_train(&mut self, input: &Tensor1D, _aux: Option<&Tensor1D>) -> Result<Tensor1D> {
        self.forward(input, Mode::Training)
    }

    fn backward(&mut self, upstream: &Tensor1D) -> Result<()> {
        Ddae::backward(self, upstream).map(|_| ())
    }

    fn predict(&mut self, input: &Tensor1D, _aux: Option<&Tensor1D>) -> Result<Tensor1D> {
        self.forward(input, Mode::Inference)
    }

    fn params(&self) -> Vec<&Param> {
        Ddae::params(self)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Ddae::params_mut(self)
    }

    fn clear_caches(&mut self) {
        Ddae::clear_caches(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
    /// Train on random crops of this many samples (frames for DDAE).
    pub crop_length: Option<usize>,
    /// Global L2 gradient norm limit; 0 disables.
    pub clip_norm: f64,
    /// Stop once the epoch's training MSE falls below this.
    pub target_train_mse: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 4,
            max_epochs: 180,
            patience: 20,
            seed: 0,
            crop_length: None,
            clip_norm: 5.0,
            target_train_mse: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.crop_length == Some(0) {
            return Err(Error::Config("crop_length must be positive".into()));
        }
        if !(self.clip_norm >= 0.0) {
            return Err(Error::Config("clip_norm must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub seconds: f64,
}

/// Per-epoch losses. Epoch 0 is the untrained model, evaluated in
/// inference mode on both sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn best_val_mse(&self) -> f64 {
        self.epochs[self.best_epoch].val_mse
    }

    pub fn final_train_mse(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |r| r.train_mse)
    }

    /// Equality of everything except wall-clock times.
    pub fn same_trajectory(&self, other: &TrainLog) -> bool {
        self.config == other.config
            && self.best_epoch == other.best_epoch
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.train_mse.to_bits() == b.train_mse.to_bits()
                    && a.val_mse.to_bits() == b.val_mse.to_bits()
            })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_mse,val_mse,seconds\n");
        for r in &self.epochs {
            let _ = writeln!(s, "{},{:e},{:e},{:.3}", r.epoch, r.train_mse, r.val_mse, r.seconds);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// First epoch whose validation MSE is at or below `threshold`.
pub fn epochs_to_threshold(log: &TrainLog, threshold: f64) -> Option<usize> {
    log.epochs.iter().find(|r| r.val_mse <= threshold).map(|r| r.epoch)
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Splits item ids into (train, validation) index lists by hashing each id.
/// A nonzero fraction with at least two items yields at least one of each.
pub fn split_validation(ids: &[String], fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let cut = (fraction.clamp(0.0, 1.0) * 1000.0).round() as u64;
    let hashes: Vec<u64> = ids.iter().map(|id| fnv1a(id.as_bytes()) % 1000).collect();
    let (mut val, mut train): (Vec<usize>, Vec<usize>) = (0..ids.len()).partition(|&i| hashes[i] < cut);
    if cut > 0 && ids.len() >= 2 {
        if val.is_empty() {
            let i = *train.iter().min_by_key(|&&i| (hashes[i], i)).expect("two or more items");
            train.retain(|&j| j != i);
            val.push(i);
        } else if train.is_empty() {
            let i = *val.iter().max_by_key(|&&i| (hashes[i], i)).expect("two or more items");
            val.retain(|&j| j != i);
            train.push(i);
        }
    }
    (train, val)
}

/// Hash of every parameter value, trainable or not.
pub fn parameter_hash<M: Trainable + ?Sized>(model: &M) -> u64 {
    let bytes: Vec<u8> = model
        .params()
        .iter()
        .flat_map(|p| p.value.iter().flat_map(|v| v.to_le_bytes()))
        .collect();
    fnv1a(&bytes)
}

/// Mean inference-mode MSE over `examples`.
pub fn evaluate<M: Trainable + ?Sized>(model: &mut M, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::invalid("no examples to evaluate"));
    }
    let mut total = 0.0;
    for ex in examples {
        let y = model.predict(&ex.input, ex.aux.as_ref())?;
        total += mse_loss(&y, &ex.target)?;
    }
    Ok(total / examples.len() as f64)
}

fn snapshot<M: Trainable + ?Sized>(model: &M) -> Vec<Vec<f64>> {
    model.params().iter().map(|p| p.value.clone()).collect()
}

fn restore<M: Trainable + ?Sized>(model: &mut M, values: &[Vec<f64>]) {
    for (p, v) in model.params_mut().into_iter().zip(values) {
        p.value.clone_from(v);
    }
}

fn clip_gradients(params: &mut [&mut Param], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = params
        .iter()
        .filter(|p| p.trainable)
        .flat_map(|p| p.grad.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for p in params.iter_mut().filter(|p| p.trainable) {
            p.grad.iter_mut().for_each(|g| *g *= s);
        }
    }
}

/// Trains `model` in place and leaves it at the epoch with the lowest
/// validation MSE (training MSE when `val` is empty).
pub fn train<M: Trainable + ?Sized>(
    model: &mut M,
    train_set: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let start = Instant::now();
    let check = |epoch: usize, what: &str, v: f64| -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Diverged {
                epoch,
                detail: format!("{what} is {v}"),
            })
        }
    };
    let score = |model: &mut M, epoch: usize, train_mse: f64| -> Result<f64> {
        if val.is_empty() {
            Ok(train_mse)
        } else {
            check(epoch, "validation MSE", evaluate(model, val)?)
        }
    };

    let train0 = check(0, "training MSE", evaluate(model, train_set)?)?;
    let val0 = score(model, 0, train0)?;
    let mut log = TrainLog {
        config: cfg.clone(),
        epochs: vec![EpochRecord {
            epoch: 0,
            train_mse: train0,
            val_mse: val0,
            seconds: start.elapsed().as_secs_f64(),
        }],
        best_epoch: 0,
    };
    let mut best = snapshot(model);
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            for p in model.params_mut() {
                p.zero_grad();
            }
            for &i in batch {
                let ex = &train_set[i];
                let cropped;
                let ex = match cfg.crop_length {
                    Some(len) if len < ex.target.length() => {
                        let s = rng.gen_range(0..=ex.target.length() - len);
                        cropped = ex.crop(s, len)?;
                        &cropped
                    }
                    _ => ex,
                };
                let y = model.forward_train(&ex.input, ex.aux.as_ref())?;
                let loss = check(epoch, "training loss", mse_loss(&y, &ex.target)?)?;
                total += loss;
                let g = mse_grad(&y, &ex.target)?.map(|v| v / batch.len() as f64);
                model.backward(&g)?;
            }
            let mut params = model.params_mut();
            clip_gradients(&mut params, cfg.clip_norm);
            adam_step(&mut params, &mut adam).map_err(|e| Error::Diverged {
                epoch,
                detail: e.to_string(),
            })?;
        }
        model.clear_caches();
        let train_mse = check(epoch, "training MSE", total / train_set.len() as f64)?;
        let val_mse = score(model, epoch, train_mse)?;
        log.epochs.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
            seconds: start.elapsed().as_secs_f64(),
        });
        if val_mse < log.best_val_mse() {
            log.best_epoch = epoch;
            best = snapshot(model);
        }
        if cfg.target_train_mse.is_some_and(|t| train_mse < t) {
            break;
        }
        if cfg.patience > 0 && epoch - log.best_epoch >= cfg.patience {
            break;
        }
    }
    restore(model, &best);
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthesize_corpus;
    use crate::data::Task;
    use crate::models::build_named_model;

    fn examples(n: usize, len: usize) -> Vec<Example> {
        synthesize_corpus(Task::Iem, n, 3, len)
            .unwrap()
            .iter()
            .map(|u| Example::new(u.segment.input(), u.segment.target()))
            .collect()
    }

    fn tiny() -> Model {
        Model::new(build_named_model("FCN-55", 2).unwrap().with_width(4)).unwrap()
    }

    fn record(epoch: usize, val: f64) -> EpochRecord {
        EpochRecord {
            epoch,
            train_mse: val,
            val_mse: val,
            seconds: 0.0,
        }
    }

    #[test]
    fn threshold_crossing() {
        let log = TrainLog {
            config: TrainConfig::default(),
            epochs: (0..10).map(|e| record(e, 1.0 / (e + 1) as f64)).collect(),
            best_epoch: 9,
        };
        assert_eq!(epochs_to_threshold(&log, 0.125), Some(7));
        assert_eq!(epochs_to_threshold(&log, 0.01), None);
    }

    #[test]
    fn initial_loss_in_range() {
        let ex = examples(4, 4000);
        let l = evaluate(&mut tiny(), &ex).unwrap();
        assert!(l > 0.001 && l < 1.0, "{l}");
    }

    #[test]
    fn deterministic_and_best_selected() {
        let ex = examples(5, 3000);
        let cfg = TrainConfig {
            max_epochs: 4,
            crop_length: Some(1000),
            batch_size: 2,
            ..TrainConfig::default()
        };
        let mut a = tiny();
        let mut b = tiny();
        let la = train(&mut a, &ex[..4], &ex[4..], &cfg).unwrap();
        let lb = train(&mut b, &ex[..4], &ex[4..], &cfg).unwrap();
        assert!(la.same_trajectory(&lb));
        assert_eq!(parameter_hash(&a), parameter_hash(&b));
        let min = la.epochs.iter().map(|r| r.val_mse).fold(f64::INFINITY, f64::min);
        assert_eq!(la.best_val_mse(), min);
        assert_eq!(evaluate(&mut a, &ex[4..]).unwrap(), min);
    }

    #[test]
    fn corpus_untouched_and_loss_drops() {
        let ex = examples(2, 2000);
        let before = ex.clone();
        let mut m = tiny();
        let cfg = TrainConfig {
            max_epochs: 30,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let log = train(&mut m, &ex, &[], &cfg).unwrap();
        assert_eq!(ex, before);
        assert!(log.best_val_mse() < log.epochs[0].val_mse);
    }

    #[test]
    fn divergence_reported() {
        let mut ex = examples(1, 2000);
        ex[0].target.values_mut()[10] = f64::NAN;
        let err = train(&mut tiny(), &ex, &[], &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 0, .. }), "{err}");
    }

    #[test]
    fn config_rejects_bad_values() {
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn split_is_stable_and_nonempty() {
        let ids: Vec<String> = (0..50).map(|i| format!("iem-7-{i:05}")).collect();
        let (t, v) = split_validation(&ids, 0.1);
        assert_eq!(t.len() + v.len(), 50);
        assert!(!v.is_empty() && !t.is_empty());
        assert_eq!(split_validation(&ids, 0.1), (t, v));
        let two = vec!["a".to_string(), "b".to_string()];
        let (t, v) = split_validation(&two, 0.1);
        assert_eq!((t.len(), v.len()), (1, 1));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }
}
