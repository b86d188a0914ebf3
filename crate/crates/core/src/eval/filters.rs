//! Frequency analysis of learned first-layer filters.

use std::path::Path;

use realfft::RealFftPlanner;

use super::image::{write_csv, write_heatmap};
use crate::error::{Error, Result};
use crate::layers::Layer;
use crate::models::Model;
use crate::numerics::{Mode, Tensor1D};
use crate::SAMPLE_RATE;

/// Zero-padded DFT size used for magnitude responses.
pub const RESPONSE_POINTS: usize = 4096;

const FS: f64 = SAMPLE_RATE as f64;

/// Summary of one `(output, input)` kernel slice.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSummary {
    pub id: usize,
    pub peak_hz: f64,
    /// Width of the contiguous region around the peak within 3 dB of it.
    pub bandwidth_hz: f64,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    /// Learned cutoffs, for parametric band-pass layers.
    pub cutoffs_hz: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct FilterAnalysis {
    pub filters: Vec<FilterSummary>,
    /// Magnitude responses in dB, one row per filter, `RESPONSE_POINTS / 2 + 1` bins.
    pub responses_db: Vec<Vec<f64>>,
}

pub fn bin_hz(bin: usize) -> f64 {
    bin as f64 * FS / RESPONSE_POINTS as f64
}

/// Linear magnitude response of `taps` on a `RESPONSE_POINTS` grid.
pub fn magnitude_response(taps: &[f64]) -> Result<Vec<f64>> {
    if taps.len() > RESPONSE_POINTS {
        return Err(Error::invalid("filter longer than the response grid"));
    }
    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(RESPONSE_POINTS);
    let mut buf = fft.make_input_vec();
    buf[..taps.len()].copy_from_slice(taps);
    let mut spec = fft.make_output_vec();
    fft.process(&mut buf, &mut spec).expect("plan-sized buffers");
    Ok(spec.iter().map(|c| c.norm()).collect())
}

fn summarize(id: usize, mag: &[f64]) -> FilterSummary {
    let (peak_bin, peak) = mag
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let floor = peak / 2f64.sqrt();
    let mut lo = peak_bin;
    while lo > 0 && mag[lo - 1] >= floor {
        lo -= 1;
    }
    let mut hi = peak_bin;
    while hi + 1 < mag.len() && mag[hi + 1] >= floor {
        hi += 1;
    }
    FilterSummary {
        id,
        peak_hz: bin_hz(peak_bin),
        bandwidth_hz: bin_hz(hi + 1) - bin_hz(lo),
        band_low_hz: bin_hz(lo),
        band_high_hz: bin_hz(hi),
        cutoffs_hz: None,
    }
}

/// Kernel taps per `(output, input)` slice of a convolution or band-pass layer,
/// with learned cutoffs (cycles per sample) for the latter.
fn first_layer_taps(layer: &Layer) -> Result<(Vec<Vec<f64>>, Option<Vec<(f64, f64)>>)> {
    match layer {
        Layer::Conv { params, .. } => Ok((
            params
                .kernels
                .value
                .chunks(params.kernel_size)
                .map(<[f64]>::to_vec)
                .collect(),
            None,
        )),
        Layer::Sinc(s) => {
            let taps = s.kernel.materialize_taps()?;
            Ok((
                taps.chunks(s.kernel.length).map(<[f64]>::to_vec).collect(),
                Some(s.kernel.cutoffs()),
            ))
        }
        _ => Err(Error::invalid("first layer is not a filter bank")),
    }
}

/// Peak frequency, 3 dB bandwidth and full response of every first-layer filter.
pub fn analyze_filters(model: &Model) -> Result<FilterAnalysis> {
    let (taps, cutoffs) = first_layer_taps(model.first_layer())?;
    let mut filters = Vec::with_capacity(taps.len());
    let mut responses_db = Vec::with_capacity(taps.len());
    for (id, t) in taps.iter().enumerate() {
        let mag = magnitude_response(t)?;
        let mut s = summarize(id, &mag);
        s.cutoffs_hz = cutoffs.as_ref().map(|c| (c[id].0 * FS, c[id].1 * FS));
        filters.push(s);
        responses_db.push(mag.iter().map(|m| 20.0 * (m + 1e-12).log10()).collect());
    }
    Ok(FilterAnalysis {
        filters,
        responses_db,
    })
}

/// Fraction of `[lo_hz, hi_hz]` covered by the union of the filters' 3 dB bands.
pub fn coverage(filters: &[FilterSummary], lo_hz: f64, hi_hz: f64) -> f64 {
    let first = (lo_hz / bin_hz(1)).ceil() as usize;
    let last = ((hi_hz / bin_hz(1)).floor() as usize).min(RESPONSE_POINTS / 2);
    if last < first {
        return 0.0;
    }
    let covered = (first..=last)
        .filter(|&b| {
            let f = bin_hz(b);
            filters.iter().any(|s| s.band_low_hz <= f && f <= s.band_high_hz)
        })
        .count();
    covered as f64 / (last - first + 1) as f64
}

impl FilterAnalysis {
    /// Writes `filters.csv` and `filters.png` (responses, peak-normalized dB,
    /// floored at -60 dB) into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .filters
            .iter()
            .map(|s| {
                let (cl, ch) = s
                    .cutoffs_hz
                    .map_or((String::new(), String::new()), |(a, b)| (format!("{a:.2}"), format!("{b:.2}")));
                vec![
                    s.id.to_string(),
                    format!("{:.2}", s.peak_hz),
                    format!("{:.2}", s.bandwidth_hz),
                    cl,
                    ch,
                ]
            })
            .collect();
        write_csv(
            &dir.join("filters.csv"),
            &["filter_id", "f_peak_hz", "bw_hz", "f_low_hz", "f_high_hz"],
            &rows,
        )?;
        let img: Vec<Vec<f64>> = self
            .responses_db
            .iter()
            .map(|r| {
                let top = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                r.iter().map(|v| (v - top).max(-60.0)).collect()
            })
            .collect();
        write_heatmap(&dir.join("filters.png"), &img)
    }
}

/// Frame-wise RMS of each first-layer output channel for one input.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub hop: usize,
    /// One row per filter, one value per frame.
    pub rows: Vec<Vec<f64>>,
}

/// Runs only the first layer of `model` over `input` and reports the
/// activation magnitude of each filter in frames of `hop` samples.
pub fn first_layer_features(model: &Model, input: &Tensor1D, hop: usize) -> Result<FeatureMap> {
    if hop == 0 {
        return Err(Error::invalid("hop must be positive"));
    }
    if input.channels() != model.input_channels() {
        return Err(Error::ChannelMismatch {
            expected: model.input_channels(),
            actual: input.channels(),
        });
    }
    let mut layer = model.first_layer().clone();
    let y = layer.forward(input, Mode::Inference)?;
    let rows = (0..y.channels())
        .map(|c| {
            y.channel(c)
                .chunks(hop)
                .map(|f| (f.iter().map(|v| v * v).sum::<f64>() / f.len() as f64).sqrt())
                .collect()
        })
        .collect();
    Ok(FeatureMap { hop, rows })
}

impl FeatureMap {
    /// Writes `features.csv` (filter, frame, rms) and `features.png` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(f, r)| {
                r.iter()
                    .enumerate()
                    .map(move |(t, v)| vec![f.to_string(), t.to_string(), format!("{v:.6e}")])
            })
            .collect();
        write_csv(&dir.join("features.csv"), &["filter_id", "frame", "rms"], &rows)?;
        write_heatmap(&dir.join("features.png"), &self.rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::sinc::{bandpass_taps, hamming};
    use crate::models::build_named_model;

    #[test]
    fn bandpass_summary_matches_design() {
        let taps = bandpass_taps(1000.0 / FS, 2000.0 / FS, &hamming(251));
        let s = summarize(0, &magnitude_response(&taps).unwrap());
        assert!(s.peak_hz > 1000.0 && s.peak_hz < 2000.0);
        assert!((s.band_low_hz - 1000.0).abs() < 40.0, "{s:?}");
        assert!((s.band_high_hz - 2000.0).abs() < 40.0, "{s:?}");
    }

    #[test]
    fn impulse_is_flat() {
        let mag = magnitude_response(&[1.0]).unwrap();
        assert!(mag.iter().all(|m| (m - 1.0).abs() < 1e-12));
        let s = summarize(0, &mag);
        assert_eq!(s.peak_hz, 0.0);
        assert!((s.bandwidth_hz - FS / 2.0 - bin_hz(1)).abs() < 1e-9);
    }

    #[test]
    fn coverage_counts_union() {
        let f = |lo: f64, hi: f64| FilterSummary {
            id: 0,
            peak_hz: lo,
            bandwidth_hz: hi - lo,
            band_low_hz: lo,
            band_high_hz: hi,
            cutoffs_hz: None,
        };
        let c = coverage(&[f(0.0, 2000.0), f(1000.0, 4000.0)], 0.0, 8000.0);
        assert!((c - 0.5).abs() < 1e-3, "{c}");
        assert_eq!(coverage(&[], 50.0, 8000.0), 0.0);
    }

    #[test]
    fn sinc_model_reports_cutoffs() {
        let m = Model::new(build_named_model("SDFCN", 1).unwrap().with_width(4)).unwrap();
        let a = analyze_filters(&m).unwrap();
        assert_eq!(a.filters.len(), 4);
        assert!(a.filters.iter().all(|s| s.cutoffs_hz.is_some()));
        assert!(a.responses_db.iter().all(|r| r.len() == RESPONSE_POINTS / 2 + 1));
    }

    #[test]
    fn probe_tone_lights_matching_filter() {
        let m = Model::new(build_named_model("SDFCN", 1).unwrap().with_width(8)).unwrap();
        let tone: Vec<f64> = (0..4000)
            .map(|t| (2.0 * std::f64::consts::PI * 1000.0 * t as f64 / FS).sin())
            .collect();
        let fm = first_layer_features(&m, &Tensor1D::from_channels(&[&tone]).unwrap(), 160).unwrap();
        assert_eq!(fm.rows.len(), 8);
        let energy: Vec<f64> = fm.rows.iter().map(|r| r[5..20].iter().sum()).collect();
        let best = (0..8).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap();
        let a = analyze_filters(&m).unwrap();
        let (lo, hi) = a.filters[best].cutoffs_hz.unwrap();
        assert!(lo <= 1000.0 && 1000.0 <= hi, "{best}: {lo}..{hi}");
    }

    #[test]
    fn writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let m = Model::new(build_named_model("FCN-55", 1).unwrap().with_width(3)).unwrap();
        analyze_filters(&m).unwrap().write(dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("filters.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(dir.path().join("filters.png").exists());
    }
}
