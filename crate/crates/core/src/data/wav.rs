use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::SAMPLE_RATE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Pcm16,
    Float32,
}

/// Decoded audio: one sample vector per channel, values in `[-1, 1]` for PCM.
#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub channels: Vec<Vec<f64>>,
    pub encoding: Encoding,
}

impl Audio {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reads a 16 kHz PCM16 or float32 WAV file. Other rates are rejected, not
/// resampled.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Audio> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(other),
    })?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::UnsupportedAudio(format!(
            "{}: sample rate {} Hz (only {SAMPLE_RATE} Hz is supported)",
            path.display(),
            spec.sample_rate
        )));
    }
    let n = spec.channels as usize;
    if n == 0 {
        return Err(Error::UnsupportedAudio(format!("{}: no channels", path.display())));
    }
    let (interleaved, encoding): (Vec<f64>, Encoding) = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => (
            reader
                .into_samples::<i16>()
                .map(|s| s.map(|v| v as f64 / 32768.0))
                .collect::<std::result::Result<_, _>>()?,
            Encoding::Pcm16,
        ),
        (SampleFormat::Float, 32) => (
            reader
                .into_samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()?,
            Encoding::Float32,
        ),
        (fmt, bits) => {
            return Err(Error::UnsupportedAudio(format!(
                "{}: {bits}-bit {fmt:?} samples (expected PCM16 or float32)",
                path.display()
            )))
        }
    };
    if interleaved.len() % n != 0 {
        return Err(Error::UnsupportedAudio(format!("{}: truncated frame", path.display())));
    }
    let frames = interleaved.len() / n;
    let channels = (0..n)
        .map(|c| (0..frames).map(|i| interleaved[i * n + c]).collect())
        .collect();
    Ok(Audio { channels, encoding })
}

/// Writes equally long channels at 16 kHz. PCM16 encoding rounds to the
/// nearest code (`v * 32768`), clamped to the representable range.
pub fn save_wav(path: impl AsRef<Path>, channels: &[&[f64]], encoding: Encoding) -> Result<()> {
    let path = path.as_ref();
    let Some(first) = channels.first() else {
        return Err(Error::invalid("no channels to write"));
    };
    if channels.iter().any(|c| c.len() != first.len()) {
        return Err(Error::shape("channels differ in length"));
    }
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: match encoding {
            Encoding::Pcm16 => 16,
            Encoding::Float32 => 32,
        },
        sample_format: match encoding {
            Encoding::Pcm16 => SampleFormat::Int,
            Encoding::Float32 => SampleFormat::Float,
        },
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(other),
    })?;
    for i in 0..first.len() {
        for c in channels {
            match encoding {
                Encoding::Pcm16 => {
                    let v = (c[i] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    w.write_sample(v)?;
                }
                Encoding::Float32 => w.write_sample(c[i] as f32)?,
            }
        }
    }
    w.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let codes: Vec<f64> = (0..36500)
            .map(|i| ((i * 7919) % 65536) as f64 - 32768.0)
            .map(|c| c / 32768.0)
            .collect();
        save_wav(&p, &[&codes], Encoding::Pcm16).unwrap();
        let a = load_wav(&p).unwrap();
        assert_eq!(a.len(), 36500);
        assert_eq!(a.channels[0], codes);
        let q = dir.path().join("b.wav");
        save_wav(&q, &[&a.channels[0]], Encoding::Pcm16).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
    }

    #[test]
    fn float_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let l: Vec<f64> = (0..100).map(|i| (i as f32 * 0.01).sin() as f64).collect();
        let r: Vec<f64> = l.iter().map(|v| -v).collect();
        save_wav(&p, &[&l, &r], Encoding::Float32).unwrap();
        let a = load_wav(&p).unwrap();
        assert_eq!(a.encoding, Encoding::Float32);
        assert_eq!(a.channels, vec![l, r]);
    }

    #[test]
    fn rejects_other_rates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cd.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 44_100,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_wav(&p), Err(Error::UnsupportedAudio(_))));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(load_wav("/nonexistent/x.wav"), Err(Error::Io { .. })));
    }
}
