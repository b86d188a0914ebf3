//! Objective metrics and model introspection.

mod filters;
mod image;
mod report;
mod stoi;

pub use filters::{
    analyze_filters, bin_hz, coverage, first_layer_features, magnitude_response, FeatureMap,
    FilterAnalysis, FilterSummary, RESPONSE_POINTS,
};
pub use image::{write_csv, write_heatmap};
pub use report::{MetricsReport, UtteranceScore};
pub use stoi::{resample, stoi, STOI_RATE};

use crate::error::{Error, Result};

/// Mean squared error between two equally long waveforms.
pub fn mse_metric(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() || reference.is_empty() {
        return Err(Error::shape("MSE inputs must be nonempty and equally long"));
    }
    Ok(reference
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.len() as f64)
}
