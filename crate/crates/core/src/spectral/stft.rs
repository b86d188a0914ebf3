use std::f64::consts::PI;

use realfft::num_complex::Complex;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Floor added to the power before the logarithm.
pub const LPS_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub frame_length: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            frame_length: 512,
            hop: 256,
        }
    }
}

impl StftConfig {
    pub fn bins(&self) -> usize {
        self.frame_length / 2 + 1
    }

    /// Periodic Hann window.
    pub fn window(&self) -> Vec<f64> {
        let n = self.frame_length as f64;
        (0..self.frame_length)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos())
            .collect()
    }

    /// Frames needed to cover `len` samples, padding the tail with zeros.
    pub fn frames_for(&self, len: usize) -> usize {
        if len <= self.frame_length {
            1
        } else {
            (len - self.frame_length).div_ceil(self.hop) + 1
        }
    }

    fn check(&self) -> Result<()> {
        if self.frame_length < 2 || self.hop == 0 || self.hop > self.frame_length {
            return Err(Error::invalid(format!("bad STFT config {self:?}")));
        }
        Ok(())
    }
}

/// Complex spectrogram, `frames x bins`, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<C64>,
}

impl Spectrogram {
    pub fn frame(&self, f: usize) -> &[C64] {
        &self.data[f * self.bins..(f + 1) * self.bins]
    }

    pub fn magnitudes_db(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|c| 10.0 * (c.norm_sqr() + LPS_EPSILON).log10())
            .collect()
    }

    pub fn phase(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.arg()).collect()
    }
}

pub fn stft(x: &[f64], cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.check()?;
    if x.len() < cfg.frame_length {
        return Err(Error::TooShort(format!(
            "{} samples, STFT frame is {}",
            x.len(),
            cfg.frame_length
        )));
    }
    let window = cfg.window();
    let frames = cfg.frames_for(x.len());
    let bins = cfg.bins();
    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(cfg.frame_length);
    let mut buf = fft.make_input_vec();
    let mut out = fft.make_output_vec();
    let mut data = Vec::with_capacity(frames * bins);
    for f in 0..frames {
        let start = f * cfg.hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = x.get(start + i).copied().unwrap_or(0.0) * window[i];
        }
        fft.process(&mut buf, &mut out)
            .expect("buffers come from the plan");
        data.extend_from_slice(&out);
    }
    Ok(Spectrogram { frames, bins, data })
}

/// Weighted overlap-add inverse, normalized by the summed analysis window
/// so that `istft(stft(x))` reproduces `x` wherever the window sum is
/// nonzero. Returns `len` samples.
pub fn istft(spec: &Spectrogram, cfg: &StftConfig, len: usize) -> Result<Vec<f64>> {
    cfg.check()?;
    if spec.bins != cfg.bins() || spec.data.len() != spec.frames * spec.bins {
        return Err(Error::shape("spectrogram does not match the STFT config"));
    }
    let n = cfg.frame_length;
    let total = (spec.frames - 1) * cfg.hop + n;
    let window = cfg.window();
    let ifft = RealFftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut bins = ifft.make_input_vec();
    let mut frame = ifft.make_output_vec();
    let mut acc = vec![0.0; total];
    let mut wsum = vec![0.0; total];
    for f in 0..spec.frames {
        bins.copy_from_slice(spec.frame(f));
        bins[0].im = 0.0;
        let last = bins.len() - 1;
        if n % 2 == 0 {
            bins[last].im = 0.0;
        }
        ifft.process(&mut bins, &mut frame)
            .expect("buffers come from the plan");
        let start = f * cfg.hop;
        for i in 0..n {
            acc[start + i] += frame[i] / n as f64;
            wsum[start + i] += window[i];
        }
    }
    Ok((0..len)
        .map(|t| {
            if t < total && wsum[t] > 1e-8 {
                acc[t] / wsum[t]
            } else {
                0.0
            }
        })
        .collect())
}

/// `log(|S|^2 + eps)` per entry.
pub fn lps(spec: &Spectrogram) -> Vec<f64> {
    spec.data
        .iter()
        .map(|c| (c.norm_sqr() + LPS_EPSILON).ln())
        .collect()
}

/// Pairs magnitudes `exp(lps / 2)` with the given phase.
pub fn lps_invert(lps: &[f64], phase: &[f64], frames: usize, bins: usize) -> Result<Spectrogram> {
    if lps.len() != frames * bins || phase.len() != lps.len() {
        return Err(Error::shape("LPS and phase sizes differ"));
    }
    let data = lps
        .iter()
        .zip(phase)
        .map(|(&l, &p)| C64::from_polar((l.exp() - LPS_EPSILON).max(0.0).sqrt(), p))
        .collect();
    Ok(Spectrogram { frames, bins, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn cola() {
        let cfg = StftConfig::default();
        let w = cfg.window();
        for t in 0..cfg.hop {
            let s = w[t] + w[t + cfg.hop];
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn bin_centred_sine() {
        let cfg = StftConfig::default();
        let k = 20.0;
        let x: Vec<f64> = (0..4096)
            .map(|t| (2.0 * PI * k * t as f64 / 512.0).sin())
            .collect();
        let s = stft(&x, &cfg).unwrap();
        for f in 0..s.frames - 1 {
            let m: Vec<f64> = s.frame(f).iter().map(|c| c.norm()).collect();
            let peak = m[20];
            for (b, v) in m.iter().enumerate() {
                if (b as isize - 20).abs() > 1 {
                    assert!(*v < 0.01 * peak, "frame {f} bin {b}");
                }
            }
        }
    }

    #[test]
    fn round_trip_noise() {
        let cfg = StftConfig::default();
        for seed in 0..100 {
            let x = noise(16000, seed);
            let y = istft(&stft(&x, &cfg).unwrap(), &cfg, x.len()).unwrap();
            let interior = cfg.hop..x.len() - cfg.hop;
            let n = interior.len() as f64;
            let rms = (interior.map(|t| (x[t] - y[t]).powi(2)).sum::<f64>() / n).sqrt();
            assert!(rms < 1e-6, "{rms}");
        }
    }

    #[test]
    fn zero_signal() {
        let s = stft(&[0.0; 1000], &StftConfig::default()).unwrap();
        assert!(s.data.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn too_short() {
        assert!(matches!(
            stft(&[0.0; 100], &StftConfig::default()),
            Err(Error::TooShort(_))
        ));
    }

    #[test]
    fn unit_magnitude_lps() {
        let s = Spectrogram {
            frames: 1,
            bins: 3,
            data: vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.6, -0.8)],
        };
        assert!(lps(&s).iter().all(|v| v.abs() < 1e-9));
    }

    proptest! {
        #[test]
        fn lps_inverse(seed in 0u64..1000) {
            let s = stft(&noise(2048, seed), &StftConfig::default()).unwrap();
            let back = lps_invert(&lps(&s), &s.phase(), s.frames, s.bins).unwrap();
            for (a, b) in s.data.iter().zip(&back.data) {
                prop_assert!((a - b).norm() <= 1e-8 * a.norm().max(1e-12));
            }
        }
    }
}
