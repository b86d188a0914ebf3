//! Central finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::param::Param;
use super::tensor::Tensor1D;
use crate::error::Result;

/// Anything with a forward map, a backward map, and parameters.
pub trait Differentiable {
    /// Forward pass in training mode; may cache what `backprop` needs.
    fn eval(&mut self, input: &Tensor1D) -> Result<Tensor1D>;
    /// Accumulates parameter gradients and returns the input gradient for
    /// the most recent `eval`.
    fn backprop(&mut self, upstream: &Tensor1D) -> Result<Tensor1D>;
    fn params_mut(&mut self) -> Vec<&mut Param>;
}

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Entries sampled per parameter array (all of them when smaller).
    pub per_array: usize,
    /// Input entries sampled; zero skips the input gradient.
    pub input_entries: usize,
    /// Absolute floor of the relative-error denominator. Gradients smaller
    /// than this are compared absolutely, at `tolerance * floor`.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-4,
            tolerance: 1e-4,
            per_array: 16,
            input_entries: 16,
            floor: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Which entry attained the maximum, e.g. `param[3][17]` or `input[40]`.
    pub worst: String,
    pub checked: usize,
    pub passed: bool,
}

/// Compares analytic gradients of `L = sum(r * f(x))`, for a fixed random
/// projection `r`, against central differences.
///
/// Entries whose error exceeds the tolerance are retried with step/10 and
/// step/100 and keep the best estimate, so that a perturbation straddling a
/// LeakyReLU kink is not mistaken for a wrong gradient.
pub fn grad_check(
    fragment: &mut dyn Differentiable,
    input: &Tensor1D,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let out = fragment.eval(input)?;
    let projection: Vec<f64> = (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let proj = Tensor1D::from_vec(out.channels(), out.length(), projection.clone())?;

    for p in fragment.params_mut() {
        p.zero_grad();
    }
    let input_grad = fragment.backprop(&proj)?;
    let analytic: Vec<Vec<f64>> = fragment.params_mut().iter().map(|p| p.grad.clone()).collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
        passed: true,
    };
    let record = |err: f64, what: String, report: &mut GradCheckReport| {
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = what;
        }
    };

    let objective = |fragment: &mut dyn Differentiable, x: &Tensor1D| -> Result<f64> {
        let y = fragment.eval(x)?;
        Ok(y.values().iter().zip(&projection).map(|(a, b)| a * b).sum())
    };

    let n_arrays = analytic.len();
    for a in 0..n_arrays {
        let (len, trainable) = {
            let params = fragment.params_mut();
            (params[a].len(), params[a].trainable)
        };
        if !trainable {
            continue;
        }
        for idx in sample_indices(len, cfg.per_array, &mut rng) {
            let mut best = f64::INFINITY;
            for refine in [1.0, 10.0, 100.0] {
                let h = cfg.step / refine;
                let orig = fragment.params_mut()[a].value[idx];
                fragment.params_mut()[a].value[idx] = orig + h;
                let up = objective(fragment, input)?;
                fragment.params_mut()[a].value[idx] = orig - h;
                let down = objective(fragment, input)?;
                fragment.params_mut()[a].value[idx] = orig;
                let numeric = (up - down) / (2.0 * h);
                best = best.min(rel_error(analytic[a][idx], numeric, cfg.floor));
                if best <= cfg.tolerance {
                    break;
                }
            }
            record(best, format!("param[{a}][{idx}]"), &mut report);
        }
    }

    let mut x = input.clone();
    for idx in sample_indices(input.len(), cfg.input_entries, &mut rng) {
        let mut best = f64::INFINITY;
        for refine in [1.0, 10.0, 100.0] {
            let h = cfg.step / refine;
            let orig = x.values()[idx];
            x.values_mut()[idx] = orig + h;
            let up = objective(fragment, &x)?;
            x.values_mut()[idx] = orig - h;
            let down = objective(fragment, &x)?;
            x.values_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            best = best.min(rel_error(input_grad.values()[idx], numeric, cfg.floor));
            if best <= cfg.tolerance {
                break;
            }
        }
        record(best, format!("input[{idx}]"), &mut report);
    }

    report.passed = report.max_rel_error < cfg.tolerance && report.max_rel_error.is_finite();
    Ok(report)
}

fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn sample_indices(len: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if count == 0 || len == 0 {
        return Vec::new();
    }
    if len <= count {
        return (0..len).collect();
    }
    (0..count).map(|_| rng.gen_range(0..len)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::conv::{conv1d_backward, conv1d_forward, ConvLayerParams, Padding};

    struct ConvFragment {
        params: ConvLayerParams,
        input: Option<Tensor1D>,
        corrupt: bool,
    }

    impl Differentiable for ConvFragment {
        fn eval(&mut self, input: &Tensor1D) -> Result<Tensor1D> {
            self.input = Some(input.clone());
            conv1d_forward(input, &self.params, Padding::Same)
        }
        fn backprop(&mut self, upstream: &Tensor1D) -> Result<Tensor1D> {
            let before = self.params.kernels.grad.clone();
            let x = self.input.clone().unwrap();
            let dx = conv1d_backward(&x, &mut self.params, upstream, Padding::Same)?;
            if self.corrupt {
                for (g, b) in self.params.kernels.grad.iter_mut().zip(before) {
                    *g = b + 2.0 * (*g - b);
                }
            }
            Ok(dx)
        }
        fn params_mut(&mut self) -> Vec<&mut Param> {
            vec![&mut self.params.kernels, &mut self.params.bias]
        }
    }

    fn fragment(corrupt: bool) -> (ConvFragment, Tensor1D) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k: Vec<f64> = (0..2 * 3 * 5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..3 * 32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (
            ConvFragment {
                params: ConvLayerParams::from_kernels(3, 2, 5, 2, k, b).unwrap(),
                input: None,
                corrupt,
            },
            Tensor1D::from_vec(3, 32, x).unwrap(),
        )
    }

    #[test]
    fn single_conv_passes() {
        let (mut f, x) = fragment(false);
        let r = grad_check(&mut f, &x, &GradCheckConfig::default()).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.checked > 30);
    }

    #[test]
    fn corrupted_backward_fails() {
        let (mut f, x) = fragment(true);
        let r = grad_check(&mut f, &x, &GradCheckConfig::default()).unwrap();
        assert!(!r.passed);
        assert!(r.worst.starts_with("param[0]"), "{}", r.worst);
    }
}
