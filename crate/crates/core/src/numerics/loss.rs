use super::tensor::Tensor1D;
use crate::error::{Error, Result};

/// Mean squared difference over every entry.
pub fn mse_loss(prediction: &Tensor1D, target: &Tensor1D) -> Result<f64> {
    check(prediction, target)?;
    Ok(mse_slices(prediction.values(), target.values()))
}

/// Gradient of [`mse_loss`] with respect to `prediction`.
pub fn mse_grad(prediction: &Tensor1D, target: &Tensor1D) -> Result<Tensor1D> {
    check(prediction, target)?;
    let k = 2.0 / prediction.len() as f64;
    let values = prediction
        .values()
        .iter()
        .zip(target.values())
        .map(|(p, t)| k * (p - t))
        .collect();
    Tensor1D::from_vec(prediction.channels(), prediction.length(), values)
}

pub(crate) fn mse_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

fn check(prediction: &Tensor1D, target: &Tensor1D) -> Result<()> {
    if !prediction.same_shape(target) {
        return Err(Error::shape(format!(
            "mse between {}x{} and {}x{}",
            prediction.channels(),
            prediction.length(),
            target.channels(),
            target.length()
        )));
    }
    Ok(())
}
