//! Speech-like and noise signal generators.
//!
//! The speech surrogate strings together syllable-sized events: voiced
//! stretches (a band-limited harmonic source with a gliding fundamental
//! shaped by three formant resonators), fricative noise bursts, and pauses.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::SAMPLE_RATE;

const FS: f64 = SAMPLE_RATE as f64;

/// Two-pole resonator with unit peak gain at its centre frequency.
fn resonate(x: &mut [f64], freq: f64, bandwidth: f64) {
    let r = (-PI * bandwidth / FS).exp();
    let theta = 2.0 * PI * freq / FS;
    let a1 = -2.0 * r * theta.cos();
    let a2 = r * r;
    // |1 / (1 + a1 z^-1 + a2 z^-2)| at z = e^{j theta}
    let z1 = (-theta).sin_cos();
    let z2 = (-2.0 * theta).sin_cos();
    let re = 1.0 + a1 * z1.1 + a2 * z2.1;
    let im = a1 * z1.0 + a2 * z2.0;
    let g = (re * re + im * im).sqrt();
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y = g * *v - a1 * y1 - a2 * y2;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

/// Raised-cosine attack and release of `ramp` samples each.
fn envelope(x: &mut [f64], ramp: usize) {
    let n = x.len();
    let ramp = ramp.min(n / 2).max(1);
    for i in 0..ramp {
        let g = 0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos();
        x[i] *= g;
        x[n - 1 - i] *= g;
    }
}

fn voiced(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let f0_start: f64 = rng.gen_range(80.0..250.0);
    let f0_end = (f0_start * rng.gen_range(0.8..1.25)).clamp(80.0, 250.0);
    let harmonics = (7000.0 / f0_start.max(f0_end)) as usize;
    let mut phase = rng.gen_range(0.0..2.0 * PI);
    let mut x = vec![0.0; len];
    for (t, v) in x.iter_mut().enumerate() {
        let f0 = f0_start + (f0_end - f0_start) * t as f64 / len as f64;
        phase += 2.0 * PI * f0 / FS;
        *v = (1..=harmonics).map(|k| (k as f64 * phase).sin() / k as f64).sum();
    }
    let formants = [
        (rng.gen_range(300.0..900.0), rng.gen_range(60.0..120.0)),
        (rng.gen_range(900.0..2500.0), rng.gen_range(80.0..150.0)),
        (rng.gen_range(2500.0..3500.0), rng.gen_range(100.0..200.0)),
    ];
    let mut out = vec![0.0; len];
    for (i, &(f, b)) in formants.iter().enumerate() {
        let mut y = x.clone();
        resonate(&mut y, f, b);
        let gain = [1.0, 0.6, 0.35][i];
        for (o, v) in out.iter_mut().zip(y) {
            *o += gain * v;
        }
    }
    out
}

fn fricative(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut prev = 0.0;
    let mut x: Vec<f64> = (0..len)
        .map(|_| {
            let w: f64 = rng.sample(StandardNormal);
            let d = w - prev;
            prev = w;
            d
        })
        .collect();
    resonate(&mut x, rng.gen_range(3000.0..6000.0), rng.gen_range(800.0..1500.0));
    x
}

/// Speech-like signal of `len` samples with peak 0.9.
pub fn synth_speech(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let mut t = rng.gen_range(0..1600.min(len / 4 + 1));
    let mut first = true;
    while t < len {
        let dur = rng.gen_range(1300..4000).min(len - t);
        let pick: f64 = rng.gen_range(0.0..1.0);
        let mut event = if first || pick < 0.65 {
            voiced(dur, rng)
        } else if pick < 0.85 {
            fricative(dur, rng)
        } else {
            vec![0.0; dur]
        };
        first = false;
        let p = event.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if p > 0.0 {
            let level = rng.gen_range(0.3..1.0) / p;
            event.iter_mut().for_each(|v| *v *= level);
            envelope(&mut event, rng.gen_range(160..400));
        }
        for (o, v) in out[t..t + dur].iter_mut().zip(event) {
            *o += v;
        }
        t += dur;
    }
    let p = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if p > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.9 / p);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    /// Sum of several independent speech surrogates.
    Babble,
    /// Leaky-integrated white noise; a low-frequency rumble.
    Brown,
    /// Low-passed noise with slow sinusoidal amplitude modulation.
    Modulated,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [
        NoiseKind::White,
        NoiseKind::Babble,
        NoiseKind::Brown,
        NoiseKind::Modulated,
    ];
}

/// Zero-mean noise of the given kind, unit RMS.
pub fn synth_noise(kind: NoiseKind, len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut x: Vec<f64> = match kind {
        NoiseKind::White => (0..len).map(|_| rng.sample(StandardNormal)).collect(),
        NoiseKind::Babble => {
            let mut acc = vec![0.0; len];
            for _ in 0..6 {
                for (a, v) in acc.iter_mut().zip(synth_speech(len, rng)) {
                    *a += v;
                }
            }
            acc
        }
        NoiseKind::Brown => {
            let mut s = 0.0;
            (0..len)
                .map(|_| {
                    let w: f64 = rng.sample(StandardNormal);
                    s = 0.995 * s + w;
                    s
                })
                .collect()
        }
        NoiseKind::Modulated => {
            let fm: f64 = rng.gen_range(0.5..4.0);
            let ph: f64 = rng.gen_range(0.0..2.0 * PI);
            let mut s = 0.0;
            (0..len)
                .map(|t| {
                    let w: f64 = rng.sample(StandardNormal);
                    s = 0.7 * s + w;
                    s * (1.0 + 0.8 * (2.0 * PI * fm * t as f64 / FS + ph).sin())
                })
                .collect()
        }
    };
    let mean = x.iter().sum::<f64>() / len.max(1) as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v /= rms);
    }
    x
}

pub fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// Scales `noise` so that `signal_power / noise_power = 10^(snr_db / 10)`.
pub fn scale_to_snr(noise: &mut [f64], signal_power: f64, snr_db: f64) {
    let np = power(noise);
    if np == 0.0 {
        return;
    }
    let g = (signal_power / np / 10f64.powf(snr_db / 10.0)).sqrt();
    noise.iter_mut().for_each(|v| *v *= g);
}

/// Hamming-windowed sinc low-pass with unit DC gain; `taps` is odd.
pub fn lowpass_fir(cutoff_hz: f64, taps: usize) -> Vec<f64> {
    let fc = cutoff_hz / FS;
    let half = (taps / 2) as isize;
    let h: Vec<f64> = (0..taps)
        .map(|n| {
            let t = (n as isize - half) as f64;
            let s = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * t).sin() / (PI * t)
            };
            let w = 0.54 - 0.46 * (2.0 * PI * n as f64 / (taps - 1) as f64).cos();
            s * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.into_iter().map(|v| v / sum).collect()
}

/// `y[t] = sum_k h[k] x[t + k - delay]`, zero outside `x`, same length as `x`.
pub fn filter(x: &[f64], h: &[f64], delay: usize) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|t| {
            let mut acc = 0.0;
            for (k, hk) in h.iter().enumerate() {
                let i = t as isize + delay as isize - k as isize;
                if i >= 0 && (i as usize) < n {
                    acc += hk * x[i as usize];
                }
            }
            acc
        })
        .collect()
}
