use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor1D;

/// Segment length used throughout the original experiments (about 2.28 s).
pub const DEFAULT_SEGMENT_LENGTH: usize = 36_500;

/// Whether peak normalization uses each segment's own peak or the peak of
/// the whole recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizeScope {
    #[default]
    Segment,
    Utterance,
}

pub fn peak(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Divides by the peak absolute value; all-zero input stays zero.
pub fn peak_normalize(x: &[f64]) -> Vec<f64> {
    let p = peak(x);
    if p == 0.0 {
        return x.to_vec();
    }
    x.iter().map(|v| v / p).collect()
}

/// Non-overlapping segments of exactly `segment_length`, each divided by
/// its own peak. The tail is dropped, and so are silent segments.
pub fn segment_and_normalize(x: &[f64], segment_length: usize) -> Vec<Vec<f64>> {
    if segment_length == 0 {
        return Vec::new();
    }
    x.chunks_exact(segment_length)
        .filter(|s| peak(s) > 0.0)
        .map(peak_normalize)
        .collect()
}

/// A group of equally long noisy channels with their clean reference.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSegment {
    pub channels: Vec<Vec<f64>>,
    pub reference: Vec<f64>,
}

impl MultichannelSegment {
    pub fn new(channels: Vec<Vec<f64>>, reference: Vec<f64>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::shape("segment needs at least one channel"));
        }
        if channels.iter().any(|c| c.len() != reference.len()) {
            return Err(Error::shape("channels and reference differ in length"));
        }
        Ok(MultichannelSegment {
            channels,
            reference,
        })
    }

    pub fn len(&self) -> usize {
        self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.is_empty()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Keeps only the listed channels, in the given order.
    pub fn select(&self, which: &[usize]) -> Result<Self> {
        let channels = which
            .iter()
            .map(|&c| {
                self.channels
                    .get(c)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("no channel {c}")))
            })
            .collect::<Result<_>>()?;
        MultichannelSegment::new(channels, self.reference.clone())
    }

    pub fn input(&self) -> Tensor1D {
        Tensor1D::from_channels(&self.channels).expect("channels share a length")
    }

    pub fn target(&self) -> Tensor1D {
        Tensor1D::from_channels(&[&self.reference]).expect("nonempty reference")
    }

    pub fn channel_refs(&self) -> Vec<&[f64]> {
        self.channels.iter().map(Vec::as_slice).collect()
    }
}

/// Cuts a recording (noisy channels plus reference) into aligned segments.
///
/// Segments whose reference is silent are dropped. Every channel and the
/// reference are scaled by their own peak, taken over the segment or over
/// the whole recording depending on `scope`.
pub fn segment_recording(
    channels: &[Vec<f64>],
    reference: &[f64],
    segment_length: usize,
    scope: NormalizeScope,
) -> Result<Vec<MultichannelSegment>> {
    if channels.iter().any(|c| c.len() != reference.len()) {
        return Err(Error::shape("channels and reference differ in length"));
    }
    if segment_length == 0 {
        return Err(Error::invalid("segment length must be positive"));
    }
    let scale = |x: &[f64], whole: &[f64]| -> Vec<f64> {
        let p = match scope {
            NormalizeScope::Segment => peak(x),
            NormalizeScope::Utterance => peak(whole),
        };
        if p == 0.0 {
            x.to_vec()
        } else {
            x.iter().map(|v| v / p).collect()
        }
    };
    let n = reference.len() / segment_length;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let r = i * segment_length..(i + 1) * segment_length;
        if peak(&reference[r.clone()]) == 0.0 {
            continue;
        }
        out.push(MultichannelSegment::new(
            channels.iter().map(|c| scale(&c[r.clone()], c)).collect(),
            scale(&reference[r], reference),
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn drops_tail() {
        let x: Vec<f64> = (0..73_001).map(|i| ((i % 97) as f64 - 48.0) / 100.0).collect();
        let s = segment_and_normalize(&x, DEFAULT_SEGMENT_LENGTH);
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|v| v.len() == 36_500));
    }

    #[test]
    fn silence_dropped() {
        assert!(segment_and_normalize(&[0.0; 80_000], DEFAULT_SEGMENT_LENGTH).is_empty());
    }

    #[test]
    fn recording_scopes() {
        let r: Vec<f64> = (0..40).map(|i| if i < 20 { 0.1 } else { 0.5 }).collect();
        let c = vec![r.iter().map(|v| v * 2.0).collect::<Vec<_>>()];
        let seg = segment_recording(&c, &r, 20, NormalizeScope::Segment).unwrap();
        assert_eq!(seg[0].reference[0], 1.0);
        let utt = segment_recording(&c, &r, 20, NormalizeScope::Utterance).unwrap();
        assert!((utt[0].reference[0] - 0.2).abs() < 1e-15);
        assert!((utt[0].channels[0][0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn select_channels() {
        let s = MultichannelSegment::new(vec![vec![1.0], vec![2.0]], vec![0.5]).unwrap();
        assert_eq!(s.select(&[1]).unwrap().channels, vec![vec![2.0]]);
        assert!(s.select(&[2]).is_err());
    }

    proptest! {
        #[test]
        fn segments_have_unit_peak(v in proptest::collection::vec(-3.0f64..3.0, 1..400), len in 1usize..50) {
            for s in segment_and_normalize(&v, len) {
                prop_assert_eq!(s.len(), len);
                prop_assert_eq!(peak(&s), 1.0);
            }
        }
    }
}
