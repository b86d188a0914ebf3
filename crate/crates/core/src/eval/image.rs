//! Greyscale heat maps and small CSV tables.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `rows` (equal length, row-major) as an 8-bit greyscale PNG, with
/// values mapped linearly from `[min, max]` of the data to `[0, 255]`.
pub fn write_heatmap(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if height == 0 || width == 0 || rows.iter().any(|r| r.len() != width) {
        return Err(Error::shape("heat map needs a nonempty rectangular grid"));
    }
    let (lo, hi) = rows
        .iter()
        .flatten()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u8> = rows
        .iter()
        .flatten()
        .map(|&v| {
            if v.is_finite() {
                (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header()?;
    w.write_image_data(&pixels)?;
    w.finish()?;
    Ok(())
}

/// Writes a header line and one comma-separated line per row.
pub fn write_csv<T: Display>(path: &Path, header: &[&str], rows: &[Vec<T>]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for r in rows {
        let line: Vec<String> = r.iter().map(ToString::to_string).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.png");
        write_heatmap(&p, &[vec![0.0, 1.0, 2.0], vec![2.0, 1.0, 0.0]]).unwrap();
        let dec = png::Decoder::new(std::io::BufReader::new(File::open(&p).unwrap()));
        let mut r = dec.read_info().unwrap();
        let mut buf = vec![0; r.output_buffer_size().unwrap()];
        let info = r.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height), (3, 2));
        assert_eq!(&buf[..6], &[0, 128, 255, 255, 128, 0]);
    }

    #[test]
    fn ragged_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(write_heatmap(&dir.path().join("x.png"), &[vec![0.0], vec![]]).is_err());
    }
}
