//! Parametric band-pass (sinc) convolution.
//!
//! Each `(out, in)` kernel slice is a windowed difference of two ideal
//! low-pass responses, fully determined by its two cutoffs:
//!
//! ```text
//! s_t = 2 f_high sinc(2 pi f_high t) - 2 f_low sinc(2 pi f_low t)
//! w_n = 0.54 - 0.46 cos(2 pi n / (L - 1))
//! v   = s . w
//! ```
//!
//! Cutoffs are stored as two unconstrained reals per slice and mapped into
//! `0 < f_low < f_high < 0.5` by [`sinc_cutoff_reparam`], so any optimizer
//! step keeps the filter valid.

use std::f64::consts::PI;


use crate::error::{Error, Result};
use crate::numerics::conv::{correlate, correlate_backward, Geometry};
use crate::numerics::{ConvLayerParams, Padding, Param, Tensor1D};
use crate::SAMPLE_RATE;

/// Lowest cutoff and narrowest band, both 50 Hz, in cycles/sample.
pub const MIN_CUTOFF: f64 = 50.0 / SAMPLE_RATE as f64;
pub const MIN_BANDWIDTH: f64 = 50.0 / SAMPLE_RATE as f64;
/// Gap kept below Nyquist.
pub const NYQUIST_MARGIN: f64 = 1e-3;

/// Edges of the initial filter grid, clear of the reparameterization kinks.
const INIT_LOW_HZ: f64 = 60.0;
const INIT_HIGH_HZ: f64 = 7950.0;

const MAX_LOW: f64 = 0.5 - NYQUIST_MARGIN - MIN_BANDWIDTH;
const MAX_HIGH: f64 = 0.5 - NYQUIST_MARGIN;

/// Maps unconstrained `(raw_low, raw_bandwidth)` to valid cutoffs.
///
/// `f_low` is `MIN_CUTOFF + |raw_low|` reflected back and forth inside
/// `[MIN_CUTOFF, 0.5 - margin - MIN_BANDWIDTH]`; `f_high` adds
/// `MIN_BANDWIDTH + |raw_bandwidth|` and is clipped at `0.5 - margin`.
pub fn sinc_cutoff_reparam(raw_low: f64, raw_bandwidth: f64) -> (f64, f64) {
    let (f_low, _) = fold_low(raw_low);
    let f_high = (f_low + MIN_BANDWIDTH + raw_bandwidth.abs()).min(MAX_HIGH);
    (f_low, f_high)
}

/// Returns `f_low` and `d f_low / d raw_low`.
fn fold_low(raw_low: f64) -> (f64, f64) {
    let span = MAX_LOW - MIN_CUTOFF;
    let u = raw_low.abs();
    let outer = if raw_low < 0.0 { -1.0 } else { 1.0 };
    let v = u % (2.0 * span);
    if v <= span {
        (MIN_CUTOFF + v, outer)
    } else {
        (MIN_CUTOFF + 2.0 * span - v, -outer)
    }
}

/// Jacobian of [`sinc_cutoff_reparam`]:
/// `[[dlow/draw_low, dlow/draw_bw], [dhigh/draw_low, dhigh/draw_bw]]`.
fn reparam_jacobian(raw_low: f64, raw_bandwidth: f64) -> [[f64; 2]; 2] {
    let (f_low, dlow) = fold_low(raw_low);
    let clipped = f_low + MIN_BANDWIDTH + raw_bandwidth.abs() > MAX_HIGH;
    let dbw = if raw_bandwidth < 0.0 { -1.0 } else { 1.0 };
    if clipped {
        [[dlow, 0.0], [0.0, 0.0]]
    } else {
        [[dlow, 0.0], [dlow, dbw]]
    }
}

/// Inverse of the reparameterization for cutoffs already inside the valid
/// region (used for initialization).
pub fn raw_from_cutoffs(f_low: f64, f_high: f64) -> (f64, f64) {
    let raw_low = (f_low - MIN_CUTOFF).clamp(0.0, MAX_LOW - MIN_CUTOFF);
    let low = MIN_CUTOFF + raw_low;
    let raw_bw = (f_high - low - MIN_BANDWIDTH).max(0.0);
    (raw_low, raw_bw)
}

/// Symmetric Hamming window of odd length `len`, peak at the center tap.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / denom).cos())
        .collect()
}

/// Band-pass taps for one cutoff pair, center tap at index `(len - 1) / 2`.
pub fn bandpass_taps(f_low: f64, f_high: f64, window: &[f64]) -> Vec<f64> {
    let half = (window.len() / 2) as isize;
    window
        .iter()
        .enumerate()
        .map(|(n, w)| {
            let t = n as isize - half;
            let s = if t == 0 {
                2.0 * (f_high - f_low)
            } else {
                let t = t as f64;
                ((2.0 * PI * f_high * t).sin() - (2.0 * PI * f_low * t).sin()) / (PI * t)
            };
            s * w
        })
        .collect()
}

/// Learnable sinc filter bank with one cutoff pair per `(out, in)` slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SincKernel {
    pub out_channels: usize,
    pub in_channels: usize,
    pub length: usize,
    /// Negates every kernel (the literal sign convention of the original
    /// formula, `low - high`).
    pub paper_sign: bool,
    pub raw_low: Param,
    pub raw_bandwidth: Param,
}

impl SincKernel {
    /// Mel-spaced initialization: filter `i` of every input channel covers
    /// the `i`-th of `out_channels` adjacent mel bands between 60 Hz and
    /// 7950 Hz, inside the 50 Hz floor and the Nyquist clip so that no raw
    /// parameter starts on a kink of the reparameterization.
    pub fn mel_init(out_channels: usize, in_channels: usize, length: usize) -> Result<Self> {
        if length % 2 == 0 || length == 0 {
            return Err(Error::invalid(format!("sinc kernel length must be odd, got {length}")));
        }
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::invalid("sinc layer needs channels"));
        }
        let fs = SAMPLE_RATE as f64;
        let mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
        let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
        let (lo, hi) = (mel(INIT_LOW_HZ), mel(INIT_HIGH_HZ));
        let edges: Vec<f64> = (0..=out_channels)
            .map(|i| hz(lo + (hi - lo) * i as f64 / out_channels as f64) / fs)
            .collect();
        let mut raw_low = Vec::with_capacity(out_channels * in_channels);
        let mut raw_bw = Vec::with_capacity(out_channels * in_channels);
        for o in 0..out_channels {
            let (a, b) = raw_from_cutoffs(edges[o], edges[o + 1]);
            for _ in 0..in_channels {
                raw_low.push(a);
                raw_bw.push(b);
            }
        }
        Ok(SincKernel {
            out_channels,
            in_channels,
            length,
            paper_sign: false,
            raw_low: Param::new(raw_low),
            raw_bandwidth: Param::new(raw_bw),
        })
    }

    pub fn slices(&self) -> usize {
        self.out_channels * self.in_channels
    }

    /// `(f_low, f_high)` of every slice, `[out][in]` order.
    pub fn cutoffs(&self) -> Vec<(f64, f64)> {
        self.raw_low
            .value
            .iter()
            .zip(&self.raw_bandwidth.value)
            .map(|(&a, &b)| sinc_cutoff_reparam(a, b))
            .collect()
    }

    pub fn set_cutoffs(&mut self, cutoffs: &[(f64, f64)]) -> Result<()> {
        if cutoffs.len() != self.slices() {
            return Err(Error::shape("one cutoff pair per kernel slice"));
        }
        for (i, &(lo, hi)) in cutoffs.iter().enumerate() {
            let (a, b) = raw_from_cutoffs(lo, hi);
            self.raw_low.value[i] = a;
            self.raw_bandwidth.value[i] = b;
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        2 * self.slices()
    }

    fn sign(&self) -> f64 {
        if self.paper_sign {
            -1.0
        } else {
            1.0
        }
    }

    /// Kernel taps for every slice, laid out like [`ConvLayerParams::kernels`].
    pub fn materialize_taps(&self) -> Result<Vec<f64>> {
        let window = hamming(self.length);
        let sign = self.sign();
        let mut taps = Vec::with_capacity(self.slices() * self.length);
        for (f_low, f_high) in self.cutoffs() {
            if !(0.0 < f_low && f_low < f_high && f_high < 0.5) {
                return Err(Error::invalid(format!(
                    "cutoffs out of order: ({f_low}, {f_high})"
                )));
            }
            taps.extend(bandpass_taps(f_low, f_high, &window).into_iter().map(|v| sign * v));
        }
        Ok(taps)
    }

    /// The equivalent free-form convolution (no bias).
    pub fn materialize(&self) -> Result<ConvLayerParams> {
        ConvLayerParams::from_kernels(
            self.in_channels,
            self.out_channels,
            self.length,
            1,
            self.materialize_taps()?,
            vec![0.0; self.out_channels],
        )
    }

    /// Gradients of the taps with respect to `(f_low, f_high)` chained with
    /// `kernel_grad`, returned per slice.
    pub fn cutoff_gradients(&self, kernel_grad: &[f64]) -> Vec<(f64, f64)> {
        let window = hamming(self.length);
        let half = (self.length / 2) as isize;
        let sign = self.sign();
        self.cutoffs()
            .iter()
            .enumerate()
            .map(|(slice, &(f_low, f_high))| {
                let g = &kernel_grad[slice * self.length..(slice + 1) * self.length];
                let mut d_low = 0.0;
                let mut d_high = 0.0;
                for (n, (&gv, &w)) in g.iter().zip(&window).enumerate() {
                    let t = (n as isize - half) as f64;
                    // d/df [2 f sinc(2 pi f t)] = 2 cos(2 pi f t)
                    d_high += gv * w * 2.0 * (2.0 * PI * f_high * t).cos();
                    d_low -= gv * w * 2.0 * (2.0 * PI * f_low * t).cos();
                }
                (sign * d_low, sign * d_high)
            })
            .collect()
    }

    /// Chains cutoff gradients through the reparameterization into the raw
    /// parameter gradient buffers.
    pub fn accumulate_raw_gradients(&mut self, cutoff_grads: &[(f64, f64)]) {
        self.raw_low.grad_mut();
        self.raw_bandwidth.grad_mut();
        for (i, &(g_low, g_high)) in cutoff_grads.iter().enumerate() {
            let j = reparam_jacobian(self.raw_low.value[i], self.raw_bandwidth.value[i]);
            self.raw_low.grad[i] += g_low * j[0][0] + g_high * j[1][0];
            self.raw_bandwidth.grad[i] += g_low * j[0][1] + g_high * j[1][1];
        }
    }
}

/// Sinc convolution layer with "same" padding.
#[derive(Debug, Clone)]
pub struct SincConv {
    pub kernel: SincKernel,
    cache: Option<(Tensor1D, Vec<f64>)>,
}

impl SincConv {
    pub fn new(kernel: SincKernel) -> Self {
        SincConv { kernel, cache: None }
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    fn geometry(&self, len: usize) -> Result<Geometry> {
        Geometry::new(
            self.kernel.in_channels,
            self.kernel.out_channels,
            self.kernel.length,
            1,
            len,
            Padding::Same,
        )
    }

    pub fn forward(&mut self, input: &Tensor1D) -> Result<Tensor1D> {
        if input.channels() != self.kernel.in_channels {
            return Err(Error::ChannelMismatch {
                expected: self.kernel.in_channels,
                actual: input.channels(),
            });
        }
        let taps = self.kernel.materialize_taps()?;
        let geo = self.geometry(input.length())?;
        let out = correlate(input, &taps, &geo);
        self.cache = Some((input.clone(), taps));
        Ok(out)
    }

    pub fn backward(&mut self, upstream: &Tensor1D) -> Result<Tensor1D> {
        let (input, taps) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::invalid("sinc backward before forward"))?;
        let geo = self.geometry(input.length())?;
        if upstream.channels() != geo.out_channels || upstream.length() != geo.out_len {
            return Err(Error::shape("sinc upstream gradient shape"));
        }
        let mut kernel_grad = vec![0.0; taps.len()];
        let dx = correlate_backward(input, taps, &geo, upstream, &mut kernel_grad);
        let cutoff_grads = self.kernel.cutoff_gradients(&kernel_grad);
        self.kernel.accumulate_raw_gradients(&cutoff_grads);
        Ok(dx)
    }
}
