//! Dilated 1-D convolution (cross-correlation, as in every deep-learning
//! framework) with exact backward passes.
//!
//! Two engines compute the same map: a direct tap loop, used for short or
//! dilated kernels, and a block FFT engine (overlap-save) for long
//! undilated kernels such as the 55- and 251-tap front ends.

use serde::{Deserialize, Serialize};

use super::fftconv;
use super::param::Param;
use super::tensor::Tensor1D;
use crate::error::{Error, Result};

/// Kernels at least this long (with dilation 1) go through the FFT engine.
pub const FFT_MIN_KERNEL: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero padding of `dilation * (k - 1)` samples, ceil on the left.
    Same,
    Valid,
}

/// Geometry of one convolution: which input sample feeds tap 0 of output 0
/// and how many outputs there are.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub dilation: usize,
    pub in_len: usize,
    pub out_len: usize,
    pub pad_left: usize,
}

impl Geometry {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        dilation: usize,
        in_len: usize,
        padding: Padding,
    ) -> Result<Self> {
        if kernel_size == 0 || dilation == 0 {
            return Err(Error::invalid("kernel size and dilation must be >= 1"));
        }
        if in_len == 0 {
            return Err(Error::shape("convolution input has no samples"));
        }
        let span = dilation * (kernel_size - 1);
        let (out_len, pad_left) = match padding {
            Padding::Same => (in_len, span.div_ceil(2)),
            Padding::Valid => {
                if in_len <= span {
                    return Err(Error::shape(format!(
                        "valid convolution of length {in_len} with span {}",
                        span + 1
                    )));
                }
                (in_len - span, 0)
            }
        };
        Ok(Geometry {
            in_channels,
            out_channels,
            kernel_size,
            dilation,
            in_len,
            out_len,
            pad_left,
        })
    }

    fn use_fft(&self) -> bool {
        self.dilation == 1 && self.kernel_size >= FFT_MIN_KERNEL
    }

    #[inline]
    fn offset(&self, k: usize) -> isize {
        (k * self.dilation) as isize - self.pad_left as isize
    }
}

/// Trainable parameters of a convolution layer: `kernels` laid out as
/// `[out][in][k]`, one bias per output channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayerParams {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub dilation: usize,
    pub kernels: Param,
    pub bias: Param,
}

impl ConvLayerParams {
    pub fn zeros(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        dilation: usize,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::invalid("convolution needs at least one channel each way"));
        }
        if kernel_size == 0 || dilation == 0 {
            return Err(Error::invalid("kernel size and dilation must be >= 1"));
        }
        Ok(ConvLayerParams {
            in_channels,
            out_channels,
            kernel_size,
            dilation,
            kernels: Param::zeros(out_channels * in_channels * kernel_size),
            bias: Param::zeros(out_channels),
        })
    }

    pub fn from_kernels(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        dilation: usize,
        kernels: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        let mut p = ConvLayerParams::zeros(in_channels, out_channels, kernel_size, dilation)?;
        if kernels.len() != p.kernels.len() || bias.len() != out_channels {
            return Err(Error::shape(format!(
                "expected {} kernel values and {out_channels} biases, got {} and {}",
                p.kernels.len(),
                kernels.len(),
                bias.len()
            )));
        }
        p.kernels = Param::new(kernels);
        p.bias = Param::new(bias);
        Ok(p)
    }

    pub fn parameter_count(&self) -> usize {
        self.kernels.len() + self.bias.len()
    }

    /// Taps of the `(out, in)` kernel slice.
    pub fn kernel(&self, out: usize, inp: usize) -> &[f64] {
        let k = self.kernel_size;
        let start = (out * self.in_channels + inp) * k;
        &self.kernels.value[start..start + k]
    }
}

pub fn conv1d_forward(
    input: &Tensor1D,
    params: &ConvLayerParams,
    padding: Padding,
) -> Result<Tensor1D> {
    check_input(input, params.in_channels)?;
    let geo = Geometry::new(
        params.in_channels,
        params.out_channels,
        params.kernel_size,
        params.dilation,
        input.length(),
        padding,
    )?;
    let mut out = correlate(input, &params.kernels.value, &geo);
    for o in 0..geo.out_channels {
        let b = params.bias.value[o];
        if b != 0.0 {
            out.channel_mut(o).iter_mut().for_each(|v| *v += b);
        }
    }
    Ok(out)
}

/// Backward pass: accumulates kernel and bias gradients into `params` and
/// returns the gradient with respect to `input`.
pub fn conv1d_backward(
    input: &Tensor1D,
    params: &mut ConvLayerParams,
    upstream: &Tensor1D,
    padding: Padding,
) -> Result<Tensor1D> {
    check_input(input, params.in_channels)?;
    let geo = Geometry::new(
        params.in_channels,
        params.out_channels,
        params.kernel_size,
        params.dilation,
        input.length(),
        padding,
    )?;
    check_upstream(upstream, &geo)?;
    let ConvLayerParams { kernels, bias, .. } = params;
    let bias_grad = bias.grad_mut();
    for (o, bg) in bias_grad.iter_mut().enumerate() {
        *bg += upstream.channel(o).iter().sum::<f64>();
    }
    kernels.grad_mut();
    let Param { value, grad, .. } = kernels;
    Ok(correlate_backward(input, value, &geo, upstream, grad))
}

fn check_input(input: &Tensor1D, in_channels: usize) -> Result<()> {
    if input.channels() != in_channels {
        return Err(Error::shape(format!(
            "convolution expects {in_channels} input channels, got {}",
            input.channels()
        )));
    }
    Ok(())
}

fn check_upstream(upstream: &Tensor1D, geo: &Geometry) -> Result<()> {
    if upstream.channels() != geo.out_channels || upstream.length() != geo.out_len {
        return Err(Error::shape(format!(
            "upstream gradient is {}x{}, forward output was {}x{}",
            upstream.channels(),
            upstream.length(),
            geo.out_channels,
            geo.out_len
        )));
    }
    Ok(())
}

/// Bias-free forward map shared by plain and sinc layers.
pub(crate) fn correlate(input: &Tensor1D, kernels: &[f64], geo: &Geometry) -> Tensor1D {
    debug_assert_eq!(kernels.len(), geo.out_channels * geo.in_channels * geo.kernel_size);
    if geo.use_fft() {
        fftconv::forward(input, kernels, geo)
    } else {
        direct_forward(input, kernels, geo)
    }
}

/// Accumulates the kernel gradient into `kernel_grad` and returns the input gradient.
pub(crate) fn correlate_backward(
    input: &Tensor1D,
    kernels: &[f64],
    geo: &Geometry,
    upstream: &Tensor1D,
    kernel_grad: &mut [f64],
) -> Tensor1D {
    if geo.use_fft() {
        fftconv::backward(input, kernels, geo, upstream, kernel_grad)
    } else {
        direct_backward(input, kernels, geo, upstream, kernel_grad)
    }
}

/// Time-tile width of the direct engine; accumulators stay in registers.
const TILE: usize = 32;

pub(crate) fn direct_forward(input: &Tensor1D, kernels: &[f64], geo: &Geometry) -> Tensor1D {
    let mut out = Tensor1D::zeros(geo.out_channels, geo.out_len);
    let k = geo.kernel_size;
    let offsets: Vec<isize> = (0..k).map(|j| geo.offset(j)).collect();
    let rows: Vec<&[f64]> = (0..geo.in_channels).map(|c| input.channel(c)).collect();
    let per_out = geo.in_channels * k;
    let mut dsts: Vec<&mut [f64]> = out.values_mut().chunks_mut(geo.out_len).collect();
    correlate_rows(&mut dsts, &rows, |o| &kernels[o * per_out..(o + 1) * per_out], &offsets, geo.in_len);
    out
}

pub(crate) fn direct_backward(
    input: &Tensor1D,
    kernels: &[f64],
    geo: &Geometry,
    upstream: &Tensor1D,
    kernel_grad: &mut [f64],
) -> Tensor1D {
    let k = geo.kernel_size;
    let (cin, cout) = (geo.in_channels, geo.out_channels);

    // Input gradient is a correlation of the upstream gradient with the
    // mirrored offsets and transposed channel roles.
    let mut dx = Tensor1D::zeros(cin, geo.in_len);
    let back_offsets: Vec<isize> = (0..k).map(|j| -geo.offset(j)).collect();
    let g_rows: Vec<&[f64]> = (0..cout).map(|o| upstream.channel(o)).collect();
    let mut transposed = vec![0.0; cin * cout * k];
    for c in 0..cin {
        for o in 0..cout {
            let src = &kernels[(o * cin + c) * k..(o * cin + c + 1) * k];
            transposed[(c * cout + o) * k..(c * cout + o + 1) * k].copy_from_slice(src);
        }
    }
    let per_in = cout * k;
    let mut dsts: Vec<&mut [f64]> = dx.values_mut().chunks_mut(geo.in_len).collect();
    correlate_rows(&mut dsts, &g_rows, |c| &transposed[c * per_in..(c + 1) * per_in], &back_offsets, geo.out_len);

    let offsets: Vec<isize> = (0..k).map(|j| geo.offset(j)).collect();
    let (lo, hi) = interior(&offsets, geo.in_len, geo.out_len);
    let mut b0 = lo;
    while b0 < hi {
        let b1 = (b0 + BLOCK).min(hi);
        for o in 0..cout {
            let g = &upstream.channel(o)[b0..b1];
            for c in 0..cin {
                let src = input.channel(c);
                let base = (o * cin + c) * k;
                for (j, &off) in offsets.iter().enumerate() {
                    let s = (b0 as isize + off) as usize;
                    kernel_grad[base + j] += dot(g, &src[s..s + g.len()]);
                }
            }
        }
        b0 = b1;
    }
    for t in (0..lo).chain(hi.max(lo)..geo.out_len) {
        for o in 0..cout {
            let g = upstream.channel(o)[t];
            for c in 0..cin {
                let src = input.channel(c);
                let base = (o * cin + c) * k;
                for (j, &off) in offsets.iter().enumerate() {
                    let idx = t as isize + off;
                    if idx >= 0 && (idx as usize) < geo.in_len {
                        kernel_grad[base + j] += g * src[idx as usize];
                    }
                }
            }
        }
    }
    dx
}

/// Output range `[lo, hi)` where every tap reads inside the source rows.
fn interior(offsets: &[isize], src_len: usize, dst_len: usize) -> (usize, usize) {
    let min_off = offsets.iter().copied().min().unwrap_or(0);
    let max_off = offsets.iter().copied().max().unwrap_or(0);
    let lo = (-min_off).max(0) as usize;
    let hi = (src_len as isize - max_off).clamp(0, dst_len as isize) as usize;
    if lo >= hi {
        (0, 0)
    } else {
        (lo, hi)
    }
}

/// Samples per cache block; every source row's block stays resident while
/// all destination rows are computed.
const BLOCK: usize = 512;

/// `dsts[d][t] = sum_r sum_j taps(d)[r * k + j] * rows[r][t + offsets[j]]`,
/// with reads outside `[0, src_len)` taken as zero.
fn correlate_rows<'a>(
    dsts: &mut [&mut [f64]],
    rows: &[&[f64]],
    taps: impl Fn(usize) -> &'a [f64],
    offsets: &[isize],
    src_len: usize,
) {
    let Some(dst_len) = dsts.first().map(|d| d.len()) else {
        return;
    };
    let (lo, hi) = interior(offsets, src_len, dst_len);
    let tiled_end = lo + (hi - lo) / TILE * TILE;
    let mut b0 = lo;
    while b0 < tiled_end {
        let b1 = (b0 + BLOCK).min(tiled_end);
        for (d, dst) in dsts.iter_mut().enumerate() {
            let w = taps(d);
            let mut t = b0;
            while t < b1 {
                tile(&mut dst[t..t + TILE], rows, w, offsets, t);
                t += TILE;
            }
        }
        b0 = b1;
    }
    for (d, dst) in dsts.iter_mut().enumerate() {
        let w = taps(d);
        for t in (0..lo).chain(tiled_end..dst_len) {
            dst[t] = edge_sample(rows, w, offsets, src_len, t);
        }
    }
}

#[inline]
fn tile(dst: &mut [f64], rows: &[&[f64]], taps: &[f64], offsets: &[isize], t: usize) {
    let k = offsets.len();
    let mut acc = [0.0f64; TILE];
    for (r, row) in rows.iter().enumerate() {
        let w_row = &taps[r * k..(r + 1) * k];
        for (&w, &off) in w_row.iter().zip(offsets) {
            let s = (t as isize + off) as usize;
            let xs: &[f64; TILE] = row[s..s + TILE].try_into().unwrap();
            for i in 0..TILE {
                acc[i] += w * xs[i];
            }
        }
    }
    dst.copy_from_slice(&acc);
}

fn edge_sample(rows: &[&[f64]], taps: &[f64], offsets: &[isize], src_len: usize, t: usize) -> f64 {
    let k = offsets.len();
    let mut s = 0.0;
    for (r, row) in rows.iter().enumerate() {
        for (j, &off) in offsets.iter().enumerate() {
            let idx = t as isize + off;
            if idx >= 0 && (idx as usize) < src_len {
                s += taps[r * k + j] * row[idx as usize];
            }
        }
    }
    s
}

/// Dot product with eight independent accumulators (fixed order, so results
/// are reproducible).
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let chunks = n / 8;
    for i in 0..chunks {
        let (x, y) = (&a[i * 8..i * 8 + 8], &b[i * 8..i * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..n {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight transcription of the defining sum, used as the oracle.
    fn brute(input: &Tensor1D, p: &ConvLayerParams, padding: Padding) -> Vec<Vec<f64>> {
        let k = p.kernel_size;
        let d = p.dilation;
        let span = d * (k - 1);
        let (out_len, pl) = match padding {
            Padding::Same => (input.length(), span.div_ceil(2)),
            Padding::Valid => (input.length() - span, 0),
        };
        (0..p.out_channels)
            .map(|o| {
                (0..out_len)
                    .map(|t| {
                        let mut s = p.bias.value[o];
                        for c in 0..p.in_channels {
                            for j in 0..k {
                                let idx = t as isize + (j * d) as isize - pl as isize;
                                if idx >= 0 && (idx as usize) < input.length() {
                                    s += p.kernel(o, c)[j] * input.channel(c)[idx as usize];
                                }
                            }
                        }
                        s
                    })
                    .collect()
            })
            .collect()
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn random_case(cin: usize, cout: usize, k: usize, d: usize, len: usize, seed: u64) -> (Tensor1D, ConvLayerParams) {
        let mut s = seed;
        let x: Vec<f64> = (0..cin * len).map(|_| lcg(&mut s)).collect();
        let w: Vec<f64> = (0..cout * cin * k).map(|_| lcg(&mut s)).collect();
        let b: Vec<f64> = (0..cout).map(|_| lcg(&mut s)).collect();
        (
            Tensor1D::from_vec(cin, len, x).unwrap(),
            ConvLayerParams::from_kernels(cin, cout, k, d, w, b).unwrap(),
        )
    }

    #[test]
    fn identity_kernel() {
        let x = Tensor1D::from_vec(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = ConvLayerParams::from_kernels(1, 1, 1, 1, vec![1.0], vec![0.0]).unwrap();
        let y = conv1d_forward(&x, &p, Padding::Same).unwrap();
        assert_eq!(y.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn dilated_valid_example() {
        // y[t] = 2 x[t] + 3 x[t + 2] + 1
        let x = Tensor1D::from_vec(1, 4, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let p = ConvLayerParams::from_kernels(1, 1, 2, 2, vec![2.0, 3.0], vec![1.0]).unwrap();
        let y = conv1d_forward(&x, &p, Padding::Valid).unwrap();
        assert_eq!(brute(&x, &p, Padding::Valid), vec![vec![1.0, 3.0]]);
        assert_eq!(y.values(), &[1.0, 3.0]);
    }

    #[test]
    fn stacked_valid_lengths_collapse_to_one() {
        let mut x = Tensor1D::from_vec(1, 18, vec![1.0; 18]).unwrap();
        for (k, d, expect) in [(2, 1, 17), (3, 2, 13), (3, 6, 1)] {
            let p = ConvLayerParams::from_kernels(1, 1, k, d, vec![1.0; k], vec![0.0]).unwrap();
            x = conv1d_forward(&x, &p, Padding::Valid).unwrap();
            assert_eq!(x.length(), expect);
        }
        // The single output sums every input sample exactly once per path.
        assert_eq!(x.values(), &[18.0]);
    }

    #[test]
    fn same_padding_splits_ceil_left() {
        // Even kernel [0, 1]: with pad_left 1 the output is the input itself.
        let x = Tensor1D::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let p = ConvLayerParams::from_kernels(1, 1, 2, 1, vec![0.0, 1.0], vec![0.0]).unwrap();
        assert_eq!(conv1d_forward(&x, &p, Padding::Same).unwrap().values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn matches_brute_force_both_engines() {
        for &(cin, cout, k, d, len) in &[
            (1, 1, 3, 1, 10),
            (2, 3, 4, 2, 40),
            (3, 2, 5, 6, 64),
            (2, 2, 55, 1, 300),
            (1, 3, 251, 1, 700),
            (3, 2, 30, 1, 20),
        ] {
            let (x, p) = random_case(cin, cout, k, d, len, (k * 31 + len) as u64);
            for pad in [Padding::Same, Padding::Valid] {
                if pad == Padding::Valid && len <= d * (k - 1) {
                    continue;
                }
                let y = conv1d_forward(&x, &p, pad).unwrap();
                let want = brute(&x, &p, pad);
                for o in 0..cout {
                    for (a, b) in y.channel(o).iter().zip(&want[o]) {
                        assert!((a - b).abs() < 1e-10, "k={k} d={d} {pad:?}: {a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn fft_engine_backward_matches_direct() {
        for &(cin, cout, k, len, pad) in &[
            (2, 3, 55, 333, Padding::Same),
            (1, 2, 251, 900, Padding::Same),
            (2, 2, 40, 500, Padding::Valid),
            (3, 1, 24, 24, Padding::Same),
        ] {
            let (x, p) = random_case(cin, cout, k, 1, len, 7 + k as u64);
            let geo = Geometry::new(cin, cout, k, 1, len, pad).unwrap();
            let mut s = 99;
            let g: Vec<f64> = (0..cout * geo.out_len).map(|_| lcg(&mut s)).collect();
            let g = Tensor1D::from_vec(cout, geo.out_len, g).unwrap();
            let mut kg_fft = vec![0.0; p.kernels.len()];
            let mut kg_dir = vec![0.0; p.kernels.len()];
            let dx_fft = fftconv::backward(&x, &p.kernels.value, &geo, &g, &mut kg_fft);
            let dx_dir = direct_backward(&x, &p.kernels.value, &geo, &g, &mut kg_dir);
            for (a, b) in dx_fft.values().iter().zip(dx_dir.values()) {
                assert!((a - b).abs() < 1e-9);
            }
            for (a, b) in kg_fft.iter().zip(&kg_dir) {
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn identity_kernel_backward() {
        let x = Tensor1D::from_vec(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
        let mut p = ConvLayerParams::from_kernels(1, 1, 1, 1, vec![1.0], vec![0.0]).unwrap();
        let g = Tensor1D::from_vec(1, 3, vec![0.3, 0.2, -1.0]).unwrap();
        let dx = conv1d_backward(&x, &mut p, &g, Padding::Same).unwrap();
        assert_eq!(dx.values(), g.values());
        assert!((p.kernels.grad[0] - (0.3 - 0.4 - 0.5)).abs() < 1e-15);
        assert!((p.bias.grad[0] - (-0.5)).abs() < 1e-15);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let (x, mut p) = random_case(2, 2, 3, 2, 16, 5);
        let g = Tensor1D::zeros(2, 16);
        let dx = conv1d_backward(&x, &mut p, &g, Padding::Same).unwrap();
        assert!(dx.values().iter().all(|&v| v == 0.0));
        assert!(p.kernels.grad.iter().all(|&v| v == 0.0));
        assert!(p.bias.grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let (x, mut p) = random_case(2, 2, 3, 1, 8, 1);
        let wrong = Tensor1D::zeros(3, 8);
        assert!(conv1d_forward(&wrong, &p, Padding::Same).is_err());
        let g = Tensor1D::zeros(2, 7);
        assert!(conv1d_backward(&x, &mut p, &g, Padding::Same).is_err());
        let short = Tensor1D::zeros(2, 2);
        assert!(conv1d_forward(&short, &p, Padding::Valid).is_err());
        assert!(ConvLayerParams::zeros(1, 1, 0, 1).is_err());
    }

    #[test]
    fn valid_length_law() {
        for k in 1..=5 {
            for d in 1..=18 {
                let len = d * (k - 1) + 7;
                let p = ConvLayerParams::zeros(1, 1, k, d).unwrap();
                let x = Tensor1D::zeros(1, len);
                let y = conv1d_forward(&x, &p, Padding::Valid).unwrap();
                assert_eq!(y.length(), len - d * (k - 1));
                let y = conv1d_forward(&x, &p, Padding::Same).unwrap();
                assert_eq!(y.length(), len);
            }
        }
    }
}
