//! Dense denoising autoencoder over multichannel log-power spectra.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stft::{istft, lps, lps_invert, stft, StftConfig};
use crate::error::{Error, Result};
use crate::layers::{backward_stack, forward_stack, init_conv, Layer, LayerCensus};
use crate::numerics::{Activation, Mode, Param, Tensor1D};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DdaeSpec {
    pub input_channels: usize,
    /// Widths of the five hidden dense layers.
    pub hidden: Vec<usize>,
    /// Frames of context on each side of the centre frame.
    pub context: usize,
    pub stft: StftConfig,
    #[serde(default)]
    pub seed: u64,
}

impl DdaeSpec {
    pub fn new(input_channels: usize) -> Self {
        DdaeSpec {
            input_channels,
            hidden: vec![1024; 5],
            context: 2,
            stft: StftConfig::default(),
            seed: 0,
        }
    }

    pub fn with_width(mut self, width: usize) -> Self {
        self.hidden = vec![width; self.hidden.len()];
        self
    }

    pub fn bins(&self) -> usize {
        self.stft.bins()
    }

    pub fn input_dim(&self) -> usize {
        self.input_channels * self.bins() * (2 * self.context + 1)
    }

    /// Widths from input through every layer to the output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(&self.hidden);
        w.push(self.bins());
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.len() != 5 || self.hidden.contains(&0) {
            return Err(Error::invalid("DDAE has exactly five nonzero hidden layers"));
        }
        if self.input_channels == 0 {
            return Err(Error::invalid("DDAE needs input channels"));
        }
        Ok(())
    }
}

/// Dense layers (as width-1 convolutions over frames) with LeakyReLU
/// between them and a linear output. Inputs and targets are z-scored with
/// statistics fitted on training data.
#[derive(Debug, Clone)]
pub struct Ddae {
    spec: DdaeSpec,
    layers: Vec<Layer>,
    in_mean: Param,
    in_std: Param,
    out_mean: Param,
    out_std: Param,
}

impl Ddae {
    pub fn new(spec: DdaeSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let widths = spec.widths();
        let mut layers = Vec::new();
        for i in 0..widths.len() - 1 {
            layers.push(Layer::conv(init_conv(widths[i], widths[i + 1], 1, 1, &mut rng)?));
            if i + 2 < widths.len() {
                layers.push(Layer::act(Activation::leaky()));
            }
        }
        let feat = spec.input_channels * spec.bins();
        let bins = spec.bins();
        Ok(Ddae {
            layers,
            in_mean: Param::state(vec![0.0; feat]),
            in_std: Param::state(vec![1.0; feat]),
            out_mean: Param::state(vec![0.0; bins]),
            out_std: Param::state(vec![1.0; bins]),
            spec,
        })
    }

    pub fn spec(&self) -> &DdaeSpec {
        &self.spec
    }

    /// LPS of every channel, each `frames x bins`.
    fn channel_lps(&self, channels: &[&[f64]]) -> Result<(Vec<Vec<f64>>, usize)> {
        let mut out = Vec::with_capacity(channels.len());
        let mut frames = 0;
        for ch in channels {
            let s = stft(ch, &self.spec.stft)?;
            frames = s.frames;
            out.push(lps(&s));
        }
        Ok((out, frames))
    }

    /// Sets the z-score statistics from noisy and clean training signals.
    pub fn fit_normalization(&mut self, noisy: &[Vec<Vec<f64>>], clean: &[Vec<f64>]) -> Result<()> {
        let bins = self.spec.bins();
        let n = self.spec.input_channels;
        let mut s_in = vec![(0.0, 0.0, 0usize); n * bins];
        let mut s_out = vec![(0.0, 0.0, 0usize); bins];
        let accumulate = |stats: &mut [(f64, f64, usize)], offset: usize, l: &[f64]| {
            for (i, v) in l.iter().enumerate() {
                let s = &mut stats[offset + i % bins];
                s.0 += v;
                s.1 += v * v;
                s.2 += 1;
            }
        };
        for (chs, x) in noisy.iter().zip(clean) {
            let refs: Vec<&[f64]> = chs.iter().map(Vec::as_slice).collect();
            self.check_channels(refs.len())?;
            let (ls, _) = self.channel_lps(&refs)?;
            for (c, l) in ls.iter().enumerate() {
                accumulate(&mut s_in, c * bins, l);
            }
            let (lc, _) = self.channel_lps(&[x.as_slice()])?;
            accumulate(&mut s_out, 0, &lc[0]);
        }
        let finish = |stats: &[(f64, f64, usize)], mean: &mut Param, std: &mut Param| {
            for (i, &(s, ss, k)) in stats.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                let m = s / k as f64;
                mean.value[i] = m;
                std.value[i] = (ss / k as f64 - m * m).max(0.0).sqrt().max(1e-3);
            }
        };
        finish(&s_in, &mut self.in_mean, &mut self.in_std);
        finish(&s_out, &mut self.out_mean, &mut self.out_std);
        Ok(())
    }

    fn check_channels(&self, n: usize) -> Result<()> {
        if n != self.spec.input_channels {
            return Err(Error::ChannelMismatch {
                expected: self.spec.input_channels,
                actual: n,
            });
        }
        Ok(())
    }

    /// Normalized context features, `input_dim x frames`.
    pub fn features(&self, channels: &[&[f64]]) -> Result<Tensor1D> {
        self.check_channels(channels.len())?;
        let bins = self.spec.bins();
        let (ls, frames) = self.channel_lps(channels)?;
        let ctx = self.spec.context as isize;
        let width = 2 * self.spec.context + 1;
        let mut v = vec![0.0; self.spec.input_dim() * frames];
        for (c, l) in ls.iter().enumerate() {
            for (k, off) in (-ctx..=ctx).enumerate() {
                for f in 0..frames {
                    let src = (f as isize + off).clamp(0, frames as isize - 1) as usize;
                    for b in 0..bins {
                        let i = c * bins + b;
                        let row = (c * width + k) * bins + b;
                        v[row * frames + f] =
                            (l[src * bins + b] - self.in_mean.value[i]) / self.in_std.value[i];
                    }
                }
            }
        }
        Tensor1D::from_vec(self.spec.input_dim(), frames, v)
    }

    /// Normalized clean LPS target, `bins x frames`.
    pub fn target(&self, clean: &[f64]) -> Result<Tensor1D> {
        let bins = self.spec.bins();
        let (l, frames) = self.channel_lps(&[clean])?;
        let mut v = vec![0.0; bins * frames];
        for f in 0..frames {
            for b in 0..bins {
                v[b * frames + f] = (l[0][f * bins + b] - self.out_mean.value[b]) / self.out_std.value[b];
            }
        }
        Tensor1D::from_vec(bins, frames, v)
    }

    /// Output in the normalized target domain.
    pub fn forward(&mut self, features: &Tensor1D, mode: Mode) -> Result<Tensor1D> {
        forward_stack(&mut self.layers, features, mode)
    }

    pub fn backward(&mut self, upstream: &Tensor1D) -> Result<Tensor1D> {
        backward_stack(&mut self.layers, upstream)
    }

    /// Enhanced LPS, `frames x bins`.
    pub fn enhance_lps(&mut self, channels: &[&[f64]]) -> Result<Vec<f64>> {
        let x = self.features(channels)?;
        let y = self.forward(&x, Mode::Inference)?;
        let (bins, frames) = (self.spec.bins(), y.length());
        let mut out = vec![0.0; bins * frames];
        for b in 0..bins {
            for (f, v) in y.channel(b).iter().enumerate() {
                out[f * bins + b] = v * self.out_std.value[b] + self.out_mean.value[b];
            }
        }
        Ok(out)
    }

    /// Enhanced waveform using the phase of the first channel.
    pub fn enhance(&mut self, channels: &[&[f64]]) -> Result<Vec<f64>> {
        let enhanced = self.enhance_lps(channels)?;
        let noisy = stft(channels[0], &self.spec.stft)?;
        let s = lps_invert(&enhanced, &noisy.phase(), noisy.frames, noisy.bins)?;
        let y = istft(&s, &self.spec.stft, channels[0].len())?;
        Ok(y.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect())
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p: Vec<&Param> = self.layers.iter().flat_map(Layer::params).collect();
        p.extend([&self.in_mean, &self.in_std, &self.out_mean, &self.out_std]);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p: Vec<&mut Param> = self.layers.iter_mut().flat_map(Layer::params_mut).collect();
        p.extend([
            &mut self.in_mean,
            &mut self.in_std,
            &mut self.out_mean,
            &mut self.out_std,
        ]);
        p
    }

    pub fn census(&self) -> Vec<LayerCensus> {
        self.layers.iter().map(Layer::census).collect()
    }

    pub fn clear_caches(&mut self) {
        for l in &mut self.layers {
            l.clear_cache();
        }
    }
}

/// Mean squared difference between two log-power spectrograms of equal-length signals.
pub fn lps_mse(reference: &[f64], estimate: &[f64], cfg: &StftConfig) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::shape("signals differ in length"));
    }
    let a = lps(&stft(reference, cfg)?);
    let b = lps(&stft(estimate, cfg)?);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, Differentiable, GradCheckConfig};
    use rand::Rng;

    fn small(n: usize) -> DdaeSpec {
        DdaeSpec {
            stft: StftConfig {
                frame_length: 32,
                hop: 16,
            },
            ..DdaeSpec::new(n).with_width(8)
        }
    }

    #[test]
    fn census_matches_widths() {
        let spec = DdaeSpec::new(2);
        let d = Ddae::new(spec.clone()).unwrap();
        let w = spec.widths();
        let expect: usize = w.windows(2).map(|p| p[0] * p[1] + p[1]).sum();
        let total: usize = d.census().iter().map(|c| c.trainable).sum();
        assert_eq!(total, expect);
        assert_eq!(w.len(), 7);
        assert_eq!(d.census().iter().filter(|c| c.name.starts_with("conv")).count(), 6);
    }

    #[test]
    fn zero_frame_is_finite() {
        let mut d = Ddae::new(small(2)).unwrap();
        let x = Tensor1D::zeros(d.spec().input_dim(), 3);
        let y = d.forward(&x, Mode::Inference).unwrap();
        assert!(y.is_finite());
        assert_eq!(y.channels(), 17);
    }

    #[test]
    fn context_replicates_edges() {
        let d = Ddae::new(small(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = d.features(&[&x]).unwrap();
        let bins = 17;
        // offset -2 at frame 0 equals offset 0 at frame 0
        for b in 0..bins {
            assert_eq!(f.channel(b)[0], f.channel(2 * bins + b)[0]);
        }
        assert!(d.features(&[&x, &x]).is_err());
    }

    struct Frag(Ddae);
    impl Differentiable for Frag {
        fn eval(&mut self, input: &Tensor1D) -> Result<Tensor1D> {
            self.0.forward(input, Mode::Training)
        }
        fn backprop(&mut self, upstream: &Tensor1D) -> Result<Tensor1D> {
            self.0.backward(upstream)
        }
        fn params_mut(&mut self) -> Vec<&mut Param> {
            self.0.params_mut()
        }
    }

    #[test]
    fn dense_gradients() {
        let d = Ddae::new(small(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dim = d.spec().input_dim();
        let x = Tensor1D::from_vec(dim, 4, (0..dim * 4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let r = grad_check(&mut Frag(d), &x, &GradCheckConfig::default()).unwrap();
        assert!(r.passed, "{r:?}");
    }
}
