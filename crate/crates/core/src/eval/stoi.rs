//! Short-time objective intelligibility (Taal et al.).
//!
//! Both signals are resampled to 10 kHz, frames more than 40 dB below the
//! loudest clean frame are dropped, and 15 one-third-octave band envelopes
//! are compared over 30-frame (384 ms) windows. The degraded envelopes are
//! energy-matched to the clean ones and clipped at a -15 dB
//! signal-to-distortion ratio before correlating.

use std::f64::consts::PI;

use realfft::RealFftPlanner;

use crate::error::{Error, Result};
use crate::SAMPLE_RATE;

pub const STOI_RATE: usize = 10_000;
const FRAME: usize = 256;
const HOP: usize = FRAME / 2;
const NFFT: usize = 512;
const BANDS: usize = 15;
const FIRST_CENTRE_HZ: f64 = 150.0;
const SEGMENT: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

/// Rational resampling by `up / down` with a Hamming-windowed sinc
/// anti-aliasing filter (20 zero crossings per side).
pub fn resample(x: &[f64], up: usize, down: usize) -> Vec<f64> {
    let g = gcd(up, down);
    let (up, down) = (up / g, down / g);
    if up == down {
        return x.to_vec();
    }
    let rate = up.max(down);
    let half = 20 * rate;
    let cutoff = 0.5 / rate as f64;
    let taps: Vec<f64> = (0..=2 * half)
        .map(|n| {
            let t = n as f64 - half as f64;
            let s = if t == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * t).sin() / (PI * t)
            };
            let w = 0.54 - 0.46 * (2.0 * PI * n as f64 / (2 * half) as f64).cos();
            s * w * up as f64
        })
        .collect();
    let out_len = (x.len() * up).div_ceil(down);
    (0..out_len)
        .map(|m| {
            // output m sits at upsampled index m * down; sum over input
            // samples i with upsampled index i * up inside the filter span
            let centre = (m * down) as isize;
            let lo = (centre - half as isize).max(0);
            let hi = centre + half as isize;
            let first = (lo as usize).div_ceil(up);
            let mut acc = 0.0;
            let mut i = first;
            while i < x.len() && (i * up) as isize <= hi {
                let k = (i * up) as isize - centre + half as isize;
                acc += x[i] * taps[k as usize];
                i += 1;
            }
            acc
        })
        .collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `np.hanning(FRAME + 2)[1:-1]`.
fn frame_window() -> Vec<f64> {
    let m = (FRAME + 2) as f64;
    (1..=FRAME)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / (m - 1.0)).cos())
        .collect()
}

fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..).map(|i| i * HOP).take_while(move |&s| s + FRAME <= len)
}

/// Drops frames of `x` more than 40 dB below its loudest frame (and the
/// same frames of `y`), then overlap-adds what remains.
fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = frame_window();
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let energy: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e: f64 = (0..FRAME).map(|i| (w[i] * x[s + i]).powi(2)).sum();
            20.0 * (e.sqrt() + EPS).log10()
        })
        .collect();
    let max = energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energy)
        .filter(|(_, &e)| e > max - DYN_RANGE_DB)
        .map(|(&s, _)| s)
        .collect();
    if kept.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let len = (kept.len() - 1) * HOP + FRAME;
    let mut xs = vec![0.0; len];
    let mut ys = vec![0.0; len];
    for (j, &s) in kept.iter().enumerate() {
        for i in 0..FRAME {
            xs[j * HOP + i] += w[i] * x[s + i];
            ys[j * HOP + i] += w[i] * y[s + i];
        }
    }
    (xs, ys)
}

/// One-third-octave band edges as FFT bin ranges `[lo, hi)`.
fn band_bins() -> Vec<(usize, usize)> {
    let hz_per_bin = STOI_RATE as f64 / NFFT as f64;
    let nearest = |f: f64| (f / hz_per_bin).round() as usize;
    (0..BANDS)
        .map(|k| {
            let lo = FIRST_CENTRE_HZ * 2f64.powf((2 * k) as f64 / 6.0 - 1.0 / 6.0);
            let hi = FIRST_CENTRE_HZ * 2f64.powf((2 * k) as f64 / 6.0 + 1.0 / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// Band envelopes, `BANDS` rows of one value per frame.
fn band_envelopes(x: &[f64]) -> Vec<Vec<f64>> {
    let w = frame_window();
    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(NFFT);
    let mut buf = fft.make_input_vec();
    let mut spec = fft.make_output_vec();
    let bands = band_bins();
    let mut env = vec![Vec::new(); BANDS];
    for s in frame_starts(x.len()) {
        buf.fill(0.0);
        for i in 0..FRAME {
            buf[i] = w[i] * x[s + i];
        }
        fft.process(&mut buf, &mut spec).expect("plan-sized buffers");
        for (b, &(lo, hi)) in bands.iter().enumerate() {
            let e: f64 = spec[lo..hi].iter().map(|c| c.norm_sqr()).sum();
            env[b].push(e.sqrt());
        }
    }
    env
}

/// Mean correlation of clipped, energy-matched envelope segments of
/// `window` frames; inputs are `bands x frames`.
pub(crate) fn band_correlation(x: &[Vec<f64>], y: &[Vec<f64>], window: usize) -> f64 {
    let frames = x[0].len();
    let clip = 10f64.powf(-BETA_DB / 20.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for m in window..=frames {
        for (xb, yb) in x.iter().zip(y) {
            let xs = &xb[m - window..m];
            let ys = &yb[m - window..m];
            let nx = xs.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = ys.iter().map(|v| v * v).sum::<f64>().sqrt();
            let k = nx / (ny + EPS);
            let yp: Vec<f64> = ys
                .iter()
                .zip(xs)
                .map(|(yv, xv)| (yv * k).min(xv * (1.0 + clip)))
                .collect();
            let mx = xs.iter().sum::<f64>() / window as f64;
            let my = yp.iter().sum::<f64>() / window as f64;
            let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
            for (a, b) in xs.iter().zip(&yp) {
                let (a, b) = (a - mx, b - my);
                sxy += a * b;
                sxx += a * a;
                syy += b * b;
            }
            total += sxy / ((sxx.sqrt() + EPS) * (syy.sqrt() + EPS));
            count += 1;
        }
    }
    total / count as f64
}

/// STOI of `degraded` against `reference`, both at 16 kHz, clamped to `[0, 1]`.
pub fn stoi(reference: &[f64], degraded: &[f64]) -> Result<f64> {
    if reference.len() != degraded.len() {
        return Err(Error::shape("STOI inputs differ in length"));
    }
    if reference.iter().all(|v| *v == 0.0) {
        return Err(Error::invalid("STOI reference has no energy"));
    }
    let up = STOI_RATE;
    let down = SAMPLE_RATE as usize;
    let x = resample(reference, up, down);
    let y = resample(degraded, up, down);
    let (x, y) = remove_silent_frames(&x, &y);
    let frames = frame_starts(x.len()).count();
    if frames < SEGMENT {
        return Err(Error::TooShort(format!(
            "{frames} non-silent STOI frames, need {SEGMENT}"
        )));
    }
    let d = band_correlation(&band_envelopes(&x), &band_envelopes(&y), SEGMENT);
    Ok(d.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::synth_speech;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn speech(seed: u64, len: usize) -> Vec<f64> {
        synth_speech(len, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn with_noise(x: &[f64], snr_db: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut n: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
        let ps = x.iter().map(|v| v * v).sum::<f64>();
        let pn = n.iter().map(|v| v * v).sum::<f64>();
        let g = (ps / pn / 10f64.powf(snr_db / 10.0)).sqrt();
        n.iter_mut().for_each(|v| *v *= g);
        x.iter().zip(&n).map(|(a, b)| a + b).collect()
    }

    #[test]
    fn identical_is_one() {
        let x = speech(1, 16000);
        assert!((stoi(&x, &x).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn monotone_in_snr() {
        let x = speech(2, 32000);
        let scores: Vec<f64> = [20.0, 10.0, 0.0, -5.0]
            .iter()
            .map(|&s| stoi(&x, &with_noise(&x, s, 9)).unwrap())
            .collect();
        for w in scores.windows(2) {
            assert!(w[0] > w[1], "{scores:?}");
        }
    }

    #[test]
    fn unrelated_noise_scores_low() {
        let x = speech(3, 32000);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
        assert!(stoi(&x, &n).unwrap() < 0.3);
    }

    #[test]
    fn scale_invariant() {
        let x = speech(5, 16000);
        let y = with_noise(&x, 5.0, 1);
        let base = stoi(&x, &y).unwrap();
        for s in [0.1, 0.5, 2.0] {
            let ys: Vec<f64> = y.iter().map(|v| v * s).collect();
            assert!((stoi(&x, &ys).unwrap() - base).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_short_and_silent() {
        let x = speech(6, 2000);
        assert!(matches!(stoi(&x, &x), Err(Error::TooShort(_))));
        assert!(stoi(&[0.0; 16000], &[0.0; 16000]).is_err());
        assert!(stoi(&x, &x[..1000]).is_err());
    }

    #[test]
    fn bands_increase_below_nyquist() {
        let b = band_bins();
        for w in b.windows(2) {
            assert!(w[1].0 >= w[0].1 - 1 && w[1].1 > w[0].1);
        }
        assert!(b[BANDS - 1].1 <= NFFT / 2 + 1);
    }

    #[test]
    fn two_frame_toy_correlation() {
        // band 0: x = [1, 3], y = [2, 2] -> y has zero variance -> corr 0
        // band 1: x = [1, 2], y = [2, 4] -> energy matched y = x -> corr 1
        let x = vec![vec![1.0, 3.0], vec![1.0, 2.0]];
        let y = vec![vec![2.0, 2.0], vec![2.0, 4.0]];
        assert!((band_correlation(&x, &y, 2) - 0.5).abs() < 1e-9);
        // clipping: y[1] matched to [0, 5] is limited to x*(1+c) only if larger
        let x = vec![vec![2.0, 1.0]];
        let y = vec![vec![1.0, 2.0]];
        // matched y = [1, 2]; centred x = [0.5, -0.5], y = [-0.5, 0.5] -> -1
        assert!((band_correlation(&x, &y, 2) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn resampler_passes_low_tones() {
        let x: Vec<f64> = (0..16000)
            .map(|t| (2.0 * PI * 1000.0 * t as f64 / 16000.0).sin())
            .collect();
        let y = resample(&x, 10_000, 16_000);
        assert_eq!(y.len(), 10_000);
        for m in 200..9800 {
            let expect = (2.0 * PI * 1000.0 * m as f64 / 10000.0).sin();
            assert!((y[m] - expect).abs() < 5e-3, "{m}");
        }
    }
}
