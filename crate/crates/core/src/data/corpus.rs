//! Synthetic multichannel corpora for the three recording tasks.
//!
//! * `iem`: two inner-ear channels, each a 101-tap low-pass (1.8 kHz and
//!   2.2 kHz) of the clean speech plus weak in-ear noise at 30 dB SNR.
//! * `dm`: five distant microphones, each with its own gain, a 300-tap
//!   decaying reverberation tail behind a direct path, and white noise at
//!   15-25 dB SNR.
//! * `chime`: six array channels with small propagation delays and one of
//!   four noise classes, shared across the array with per-channel shifts,
//!   at 0-10 dB SNR.
//!
//! Every utterance draws from its own ChaCha8 stream (`stream = index`) of
//! the corpus seed, so utterances can be generated independently and in
//! any order.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::segment::{peak_normalize, MultichannelSegment};
use super::synth::{filter, lowpass_fir, power, scale_to_snr, synth_noise, synth_speech, NoiseKind};
use super::wav::{load_wav, save_wav, Encoding};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Iem,
    Dm,
    Chime,
}

impl Task {
    pub fn channels(self) -> usize {
        match self {
            Task::Iem => 2,
            Task::Dm => 5,
            Task::Chime => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Iem => "iem",
            Task::Dm => "dm",
            Task::Chime => "chime",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iem" => Ok(Task::Iem),
            "dm" => Ok(Task::Dm),
            "chime" => Ok(Task::Chime),
            other => Err(Error::invalid(format!("unknown task `{other}` (iem|dm|chime)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    /// In-ear pickup: noise enters before the body-conduction low-pass.
    Iem,
    Farfield,
    Noisemix,
}

/// Degradation applied to the clean reference to produce one channel:
/// `y = gain * fir(x) + noise` (for `Iem`, `y = fir(x + noise)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub kind: ChannelKind,
    pub fir: Vec<f64>,
    /// Index of the FIR tap aligned with the reference.
    pub fir_delay: usize,
    pub gain: f64,
    pub noise_kind: NoiseKind,
    pub snr_db: f64,
    /// Seed of the noise source (shared between channels of an array).
    pub seed: u64,
    /// Samples the shared noise is shifted by in this channel.
    #[serde(default)]
    pub noise_shift: usize,
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        if self.fir.is_empty() || self.fir.iter().any(|v| !v.is_finite()) || self.fir_delay >= self.fir.len() {
            return Err(Error::invalid("channel FIR must be finite and nonempty"));
        }
        if !(self.gain > 0.0) {
            return Err(Error::invalid("channel gain must be positive"));
        }
        Ok(())
    }

    fn noise(&self, len: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = synth_noise(self.noise_kind, len + self.noise_shift, &mut rng);
        n[self.noise_shift..].to_vec()
    }

    /// The degraded channel, before any normalization.
    pub fn apply(&self, clean: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        let mut noise = self.noise(clean.len());
        Ok(match self.kind {
            ChannelKind::Iem => {
                scale_to_snr(&mut noise, power(clean), self.snr_db);
                let mixed: Vec<f64> = clean.iter().zip(&noise).map(|(x, n)| x + n).collect();
                filter(&mixed, &self.fir, self.fir_delay)
                    .into_iter()
                    .map(|v| self.gain * v)
                    .collect()
            }
            ChannelKind::Farfield | ChannelKind::Noisemix => {
                let y: Vec<f64> = filter(clean, &self.fir, self.fir_delay)
                    .into_iter()
                    .map(|v| self.gain * v)
                    .collect();
                scale_to_snr(&mut noise, power(&y), self.snr_db);
                y.iter().zip(&noise).map(|(a, b)| a + b).collect()
            }
        })
    }
}

/// One generated utterance: its channel models and the normalized signals.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub task: Task,
    pub seed: u64,
    pub index: u64,
    pub models: Vec<ChannelModel>,
    pub segment: MultichannelSegment,
}

fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn channel_models(task: Task, rng: &mut ChaCha8Rng) -> Vec<ChannelModel> {
    match task {
        Task::Iem => [1800.0, 2200.0]
            .iter()
            .map(|&fc| ChannelModel {
                kind: ChannelKind::Iem,
                fir: lowpass_fir(fc, 101),
                fir_delay: 50,
                gain: 1.0,
                noise_kind: NoiseKind::Babble,
                snr_db: 30.0,
                seed: rng.gen(),
                noise_shift: 0,
            })
            .collect(),
        Task::Dm => (0..5)
            .map(|_| {
                let rt60: f64 = rng.gen_range(0.15..0.25);
                let decay = -6.9078 / (rt60 * crate::SAMPLE_RATE as f64);
                let mut fir: Vec<f64> = (0..300)
                    .map(|n| rng.gen_range(-1.0..1.0) * (decay * n as f64).exp())
                    .collect();
                // direct path to reverberant energy between 0 and 3 dB
                let drr_db: f64 = rng.gen_range(0.0..3.0);
                let tail: f64 = fir[1..].iter().map(|v| v * v).sum();
                let g = (10f64.powf(-drr_db / 10.0) / tail).sqrt();
                fir[1..].iter_mut().for_each(|v| *v *= g);
                fir[0] = 1.0;
                ChannelModel {
                    kind: ChannelKind::Farfield,
                    fir,
                    fir_delay: 0,
                    gain: rng.gen_range(0.3..0.5),
                    noise_kind: NoiseKind::White,
                    snr_db: rng.gen_range(15.0..25.0),
                    seed: rng.gen(),
                    noise_shift: 0,
                }
            })
            .collect(),
        Task::Chime => {
            let noise_kind = NoiseKind::ALL[rng.gen_range(0..4)];
            let snr_db = rng.gen_range(0.0..10.0);
            let seed = rng.gen();
            (0..6)
                .map(|_| {
                    let delay = rng.gen_range(0..4);
                    let mut fir = vec![0.0; 4];
                    fir[delay] = 1.0;
                    ChannelModel {
                        kind: ChannelKind::Noisemix,
                        fir,
                        fir_delay: 0,
                        gain: 1.0,
                        noise_kind,
                        snr_db,
                        seed,
                        noise_shift: rng.gen_range(0..16),
                    }
                })
                .collect()
        }
    }
}

/// Generates utterance `index` of the corpus `(task, seed)`.
pub fn synthesize_utterance(task: Task, seed: u64, index: u64, length: usize) -> Result<Utterance> {
    if length == 0 {
        return Err(Error::invalid("utterance length must be positive"));
    }
    let mut rng = rng_for(seed, index);
    let clean = synth_speech(length, &mut rng);
    let models = channel_models(task, &mut rng);
    let channels = models
        .iter()
        .map(|m| m.apply(&clean).map(|c| peak_normalize(&c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Utterance {
        id: format!("{task}-{seed}-{index:05}"),
        task,
        seed,
        index,
        models,
        segment: MultichannelSegment::new(channels, peak_normalize(&clean))?,
    })
}

pub fn synthesize_corpus(task: Task, n: usize, seed: u64, length: usize) -> Result<Vec<Utterance>> {
    if n == 0 {
        return Err(Error::invalid("corpus needs at least one utterance"));
    }
    (0..n as u64)
        .map(|i| synthesize_utterance(task, seed, i, length))
        .collect()
}

/// One line of a corpus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub reference: PathBuf,
    pub channels: Vec<PathBuf>,
    pub task: Task,
    pub seed: u64,
    pub index: u64,
    pub channel_models: Vec<ChannelModel>,
}

pub const MANIFEST: &str = "manifest.jsonl";

/// Writes float32 WAVs (one reference plus one file per channel) and a
/// `manifest.jsonl` with relative paths.
pub fn write_corpus(dir: &Path, utterances: &[Utterance]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = dir.join(MANIFEST);
    let mut out = Vec::new();
    for u in utterances {
        let reference = PathBuf::from(format!("{}_ref.wav", u.id));
        save_wav(dir.join(&reference), &[&u.segment.reference], Encoding::Float32)?;
        let mut channels = Vec::new();
        for (c, ch) in u.segment.channels.iter().enumerate() {
            let p = PathBuf::from(format!("{}_ch{c}.wav", u.id));
            save_wav(dir.join(&p), &[ch], Encoding::Float32)?;
            channels.push(p);
        }
        let entry = ManifestEntry {
            id: u.id.clone(),
            reference,
            channels,
            task: u.task,
            seed: u.seed,
            index: u.index,
            channel_models: u.models.clone(),
        };
        serde_json::to_writer(&mut out, &entry)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(&manifest).map_err(|e| Error::io(&manifest, e))?;
    f.write_all(&out).map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(&line)?);
    }
    Ok(entries)
}

/// Loads the segments listed in a manifest (paths relative to its directory).
pub fn read_corpus(manifest: &Path) -> Result<Vec<(ManifestEntry, MultichannelSegment)>> {
    let dir = manifest.parent().unwrap_or(Path::new("."));
    read_manifest(manifest)?
        .into_iter()
        .map(|e| {
            let reference = load_wav(dir.join(&e.reference))?.channels.remove(0);
            let channels = e
                .channels
                .iter()
                .map(|p| Ok(load_wav(dir.join(p))?.channels.remove(0)))
                .collect::<Result<Vec<_>>>()?;
            let seg = MultichannelSegment::new(channels, reference)?;
            Ok((e, seg))
        })
        .collect()
}
