use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Layer;
use crate::error::{Error, Result};
use crate::numerics::{Activation, ConvLayerParams};

/// Number of input samples that influence one output of a stack of
/// convolutions: `1 + sum(d_i * (k_i - 1))`.
pub fn receptive_field(kernel_sizes: &[usize], dilations: &[usize]) -> Result<usize> {
    if kernel_sizes.is_empty() || kernel_sizes.len() != dilations.len() {
        return Err(Error::invalid("need equally long, nonempty kernel and dilation lists"));
    }
    if kernel_sizes.iter().chain(dilations).any(|&v| v == 0) {
        return Err(Error::invalid("kernel sizes and dilations must be >= 1"));
    }
    Ok(1 + kernel_sizes
        .iter()
        .zip(dilations)
        .map(|(k, d)| d * (k - 1))
        .sum::<usize>())
}

/// Stack of dilated convolutions whose dilations grow as the running
/// product of kernel sizes, so the receptive field is the product of the
/// kernel sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DilatedBlockSpec {
    pub kernel_sizes: Vec<usize>,
    pub dilations: Vec<usize>,
    pub channels: usize,
}

impl Default for DilatedBlockSpec {
    fn default() -> Self {
        DilatedBlockSpec {
            kernel_sizes: vec![2, 3, 3, 3],
            dilations: vec![1, 2, 6, 18],
            channels: 30,
        }
    }
}

impl DilatedBlockSpec {
    /// Spec with dilations derived from the kernel sizes.
    pub fn exponential(kernel_sizes: Vec<usize>, channels: usize) -> Self {
        let mut dilations = Vec::with_capacity(kernel_sizes.len());
        let mut d = 1;
        for &k in &kernel_sizes {
            dilations.push(d);
            d *= k;
        }
        DilatedBlockSpec {
            kernel_sizes,
            dilations,
            channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        receptive_field(&self.kernel_sizes, &self.dilations)?;
        if self.channels == 0 {
            return Err(Error::invalid("dilated block needs channels"));
        }
        let mut expect = 1;
        for (i, (&k, &d)) in self.kernel_sizes.iter().zip(&self.dilations).enumerate() {
            if d != expect {
                return Err(Error::invalid(format!(
                    "dilation {i} is {d}, expected {expect} (product of preceding kernel sizes)"
                )));
            }
            expect *= k;
        }
        Ok(())
    }

    pub fn receptive_field(&self) -> Result<usize> {
        receptive_field(&self.kernel_sizes, &self.dilations)
    }
}

/// Free-form convolution with kernels drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
/// and zero bias.
pub fn init_conv(
    in_channels: usize,
    out_channels: usize,
    kernel_size: usize,
    dilation: usize,
    rng: &mut impl Rng,
) -> Result<ConvLayerParams> {
    let mut p = ConvLayerParams::zeros(in_channels, out_channels, kernel_size, dilation)?;
    let bound = 1.0 / ((in_channels * kernel_size) as f64).sqrt();
    for v in p.kernels.value.iter_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    Ok(p)
}

fn conv_bn_act(
    in_channels: usize,
    kernel_size: usize,
    dilation: usize,
    channels: usize,
    rng: &mut impl Rng,
) -> Result<[Layer; 3]> {
    Ok([
        Layer::conv(init_conv(in_channels, channels, kernel_size, dilation, rng)?),
        Layer::batchnorm(channels),
        Layer::act(Activation::leaky()),
    ])
}

/// conv (same padding) -> batch norm -> LeakyReLU(0.3).
pub fn build_conv_block(
    in_channels: usize,
    kernel_size: usize,
    channels: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Layer>> {
    Ok(conv_bn_act(in_channels, kernel_size, 1, channels, rng)?.into())
}

/// One conv/batch-norm/LeakyReLU triple per sublayer of `spec`.
pub fn build_dilated_block(
    in_channels: usize,
    spec: &DilatedBlockSpec,
    rng: &mut impl Rng,
) -> Result<Vec<Layer>> {
    spec.validate()?;
    let mut layers = Vec::with_capacity(3 * spec.kernel_sizes.len());
    let mut c = in_channels;
    for (&k, &d) in spec.kernel_sizes.iter().zip(&spec.dilations) {
        layers.extend(conv_bn_act(c, k, d, spec.channels, rng)?);
        c = spec.channels;
    }
    Ok(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::forward_stack;
    use crate::numerics::{conv1d_forward, Mode, Padding, Tensor1D};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Length collapse measured by actually stacking valid convolutions.
    fn collapse(ks: &[usize], ds: &[usize], len: usize) -> Option<usize> {
        let mut x = Tensor1D::from_vec(1, len, vec![1.0; len]).unwrap();
        for (&k, &d) in ks.iter().zip(ds) {
            let p = ConvLayerParams::from_kernels(1, 1, k, d, vec![1.0; k], vec![0.0]).unwrap();
            x = conv1d_forward(&x, &p, Padding::Valid).ok()?;
        }
        Some(x.length())
    }

    #[test]
    fn paper_anchors() {
        assert_eq!(receptive_field(&[2, 3, 3], &[1, 2, 6]).unwrap(), 18);
        assert_eq!(receptive_field(&[2, 3, 3, 3], &[1, 2, 6, 18]).unwrap(), 54);
        assert_eq!(DilatedBlockSpec::default().receptive_field().unwrap(), 54);
        assert_eq!(collapse(&[2, 3, 3, 3], &[1, 2, 6, 18], 54), Some(1));
        for k in 1..8 {
            assert_eq!(receptive_field(&[k], &[1]).unwrap(), k);
        }
        assert!(receptive_field(&[], &[]).is_err());
    }

    #[test]
    fn matches_length_collapse() {
        let choices: Vec<(usize, usize)> =
            (1..=4).flat_map(|k| (1..=4).map(move |d| (k, d))).collect();
        let mut stacks: Vec<Vec<(usize, usize)>> = vec![vec![]];
        for _ in 0..3 {
            let mut next = Vec::new();
            for s in &stacks {
                for &c in &choices {
                    let mut t = s.clone();
                    t.push(c);
                    next.push(t);
                }
            }
            for s in &next {
                let (ks, ds): (Vec<usize>, Vec<usize>) = s.iter().copied().unzip();
                let rf = receptive_field(&ks, &ds).unwrap();
                assert_eq!(collapse(&ks, &ds, rf + 4), Some(5), "{ks:?} {ds:?}");
            }
            stacks = next;
        }
    }

    #[test]
    fn exponential_spec() {
        let s = DilatedBlockSpec::exponential(vec![2, 3, 3], 30);
        assert_eq!(s.dilations, vec![1, 2, 6]);
        assert_eq!(s.receptive_field().unwrap(), 18);
        let bad = DilatedBlockSpec {
            dilations: vec![1, 2, 5, 18],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn default_block_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = build_dilated_block(30, &DilatedBlockSpec::default(), &mut rng).unwrap();
        assert_eq!(b.len(), 12);
        let y = forward_stack(&mut b, &Tensor1D::zeros(30, 100), Mode::Training).unwrap();
        assert_eq!(y.length(), 100);
        assert!(y.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn single_tap_block_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = build_conv_block(3, 1, 1, &mut rng).unwrap();
        assert_eq!(b[0].census().trainable, 3 + 1);
        let b = build_conv_block(2, 251, 30, &mut rng).unwrap();
        assert_eq!(b[0].census().trainable, 251 * 2 * 30 + 30);
    }
}
