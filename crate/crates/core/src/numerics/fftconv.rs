//! Overlap-save block FFT engine for long undilated kernels.
//!
//! Output block `[t0, t0 + B)` needs the input segment starting at
//! `t0 - pad_left` of length `M = B + K - 1`; with kernels zero-padded to
//! `M`, a circular correlation of size `M` is exact on the first `B` lags.

use std::cell::RefCell;
use std::sync::Arc;

use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use super::conv::Geometry;
use super::tensor::Tensor1D;

type C64 = Complex<f64>;

thread_local! {
    static PLANNER: RefCell<RealFftPlanner<f64>> = RefCell::new(RealFftPlanner::new());
}

struct Plan {
    m: usize,
    bins: usize,
    fwd: Arc<dyn RealToComplex<f64>>,
    inv: Arc<dyn ComplexToReal<f64>>,
    scratch: Vec<C64>,
    real: Vec<f64>,
}

impl Plan {
    fn new(geo: &Geometry) -> Plan {
        let k = geo.kernel_size;
        let single = (geo.out_len + k - 1).next_power_of_two();
        let blocked = (8 * k).next_power_of_two().max(64);
        let m = single.min(blocked);
        let (fwd, inv) = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            (p.plan_fft_forward(m), p.plan_fft_inverse(m))
        });
        let scratch_len = fwd.get_scratch_len().max(inv.get_scratch_len());
        Plan {
            m,
            bins: m / 2 + 1,
            fwd,
            inv,
            scratch: vec![C64::default(); scratch_len],
            real: vec![0.0; m],
        }
    }

    fn block(&self, k: usize) -> usize {
        self.m - k + 1
    }

    /// Transforms `self.real` into `out`.
    fn rfft(&mut self, out: &mut [C64]) {
        self.fwd
            .process_with_scratch(&mut self.real, out, &mut self.scratch)
            .expect("fft buffer sizes are fixed by the plan");
    }

    /// Inverse transform of `spec` into `self.real` (unnormalized).
    fn irfft(&mut self, spec: &mut [C64]) {
        spec[0].im = 0.0;
        let last = spec.len() - 1;
        spec[last].im = 0.0;
        self.inv
            .process_with_scratch(spec, &mut self.real, &mut self.scratch)
            .expect("fft buffer sizes are fixed by the plan");
    }

    fn load_segment(&mut self, src: &[f64], start: isize, valid: usize) {
        // copies src[start + j] for j < valid, zero elsewhere
        self.real.fill(0.0);
        for j in 0..valid.min(self.m) {
            let idx = start + j as isize;
            if idx >= 0 && (idx as usize) < src.len() {
                self.real[j] = src[idx as usize];
            }
        }
    }

    fn kernel_spectra(&mut self, kernels: &[f64], geo: &Geometry) -> Vec<C64> {
        let k = geo.kernel_size;
        let pairs = geo.out_channels * geo.in_channels;
        let mut spectra = vec![C64::default(); pairs * self.bins];
        for p in 0..pairs {
            self.real.fill(0.0);
            self.real[..k].copy_from_slice(&kernels[p * k..(p + 1) * k]);
            let bins = self.bins;
            self.rfft(&mut spectra[p * bins..(p + 1) * bins]);
        }
        spectra
    }

    fn input_spectra(&mut self, input: &Tensor1D, geo: &Geometry, t0: usize, into: &mut [C64]) {
        let start = t0 as isize - geo.pad_left as isize;
        let bins = self.bins;
        for c in 0..geo.in_channels {
            self.load_segment(input.channel(c), start, self.m);
            self.rfft(&mut into[c * bins..(c + 1) * bins]);
        }
    }
}

#[inline]
fn mac_conj(acc: &mut [C64], a: &[C64], b: &[C64]) {
    // acc += a * conj(b)
    for ((z, x), y) in acc.iter_mut().zip(a).zip(b) {
        z.re += x.re * y.re + x.im * y.im;
        z.im += x.im * y.re - x.re * y.im;
    }
}

#[inline]
fn mac(acc: &mut [C64], a: &[C64], b: &[C64]) {
    for ((z, x), y) in acc.iter_mut().zip(a).zip(b) {
        z.re += x.re * y.re - x.im * y.im;
        z.im += x.im * y.re + x.re * y.im;
    }
}

pub(crate) fn forward(input: &Tensor1D, kernels: &[f64], geo: &Geometry) -> Tensor1D {
    let mut plan = Plan::new(geo);
    let k = geo.kernel_size;
    let bins = plan.bins;
    let block = plan.block(k);
    let scale = 1.0 / plan.m as f64;
    let w = plan.kernel_spectra(kernels, geo);
    let mut s = vec![C64::default(); geo.in_channels * bins];
    let mut acc = vec![C64::default(); bins];
    let mut out = Tensor1D::zeros(geo.out_channels, geo.out_len);

    let mut t0 = 0;
    while t0 < geo.out_len {
        let nb = block.min(geo.out_len - t0);
        plan.input_spectra(input, geo, t0, &mut s);
        for o in 0..geo.out_channels {
            acc.fill(C64::default());
            for c in 0..geo.in_channels {
                let pair = o * geo.in_channels + c;
                mac_conj(&mut acc, &s[c * bins..(c + 1) * bins], &w[pair * bins..(pair + 1) * bins]);
            }
            plan.irfft(&mut acc);
            let dst = &mut out.channel_mut(o)[t0..t0 + nb];
            for (d, v) in dst.iter_mut().zip(&plan.real[..nb]) {
                *d = v * scale;
            }
        }
        t0 += block;
    }
    out
}

pub(crate) fn backward(
    input: &Tensor1D,
    kernels: &[f64],
    geo: &Geometry,
    upstream: &Tensor1D,
    kernel_grad: &mut [f64],
) -> Tensor1D {
    let mut plan = Plan::new(geo);
    let k = geo.kernel_size;
    let bins = plan.bins;
    let block = plan.block(k);
    let scale = 1.0 / plan.m as f64;
    let pairs = geo.out_channels * geo.in_channels;
    let w = plan.kernel_spectra(kernels, geo);
    let mut s = vec![C64::default(); geo.in_channels * bins];
    let mut g = vec![C64::default(); geo.out_channels * bins];
    let mut cross = vec![C64::default(); pairs * bins];
    let mut acc = vec![C64::default(); bins];
    let mut dx = Tensor1D::zeros(geo.in_channels, geo.in_len);

    let mut t0 = 0;
    while t0 < geo.out_len {
        let nb = block.min(geo.out_len - t0);
        plan.input_spectra(input, geo, t0, &mut s);
        for o in 0..geo.out_channels {
            plan.load_segment(upstream.channel(o), t0 as isize, nb);
            plan.rfft(&mut g[o * bins..(o + 1) * bins]);
        }
        for o in 0..geo.out_channels {
            let go = &g[o * bins..(o + 1) * bins];
            for c in 0..geo.in_channels {
                let pair = o * geo.in_channels + c;
                mac_conj(&mut cross[pair * bins..(pair + 1) * bins], &s[c * bins..(c + 1) * bins], go);
            }
        }
        // input gradient: overlap-add of (g block) convolved with each kernel
        let base = t0 as isize - geo.pad_left as isize;
        for c in 0..geo.in_channels {
            acc.fill(C64::default());
            for o in 0..geo.out_channels {
                let pair = o * geo.in_channels + c;
                mac(&mut acc, &g[o * bins..(o + 1) * bins], &w[pair * bins..(pair + 1) * bins]);
            }
            plan.irfft(&mut acc);
            let dst = dx.channel_mut(c);
            for j in 0..nb + k - 1 {
                let idx = base + j as isize;
                if idx >= 0 && (idx as usize) < geo.in_len {
                    dst[idx as usize] += plan.real[j] * scale;
                }
            }
        }
        t0 += block;
    }

    for pair in 0..pairs {
        plan.irfft(&mut cross[pair * bins..(pair + 1) * bins]);
        for (kg, v) in kernel_grad[pair * k..(pair + 1) * k].iter_mut().zip(&plan.real[..k]) {
            *kg += v * scale;
        }
    }
    dx
}
