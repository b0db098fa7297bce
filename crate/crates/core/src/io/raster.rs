use std::path::Path;

use image::ImageEncoder;

use super::{read_bytes, write_bytes, Bytes};
use crate::error::{Error, Result};

/// A float image; multi-channel data is stored as planes stacked
/// vertically, so `height` counts rows over all planes.
#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first.
    pub data: Vec<f64>,
}

impl PfmImage {
    /// Splits the stacked rows into `channels` planes of equal height.
    pub fn planes(&self, channels: usize) -> Option<usize> {
        (channels > 0 && self.height % channels == 0).then(|| self.height / channels)
    }
}

/// Writes `data` (row-major, top row first, `height` rows) as a
/// little-endian grayscale PFM. Values are stored as f32.
pub fn write_pfm(path: &Path, data: &[f64], width: usize, height: usize) -> Result<()> {
    if data.len() != width * height || width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "PFM {}: {} values for a {width}x{height} image",
            path.display(),
            data.len()
        )));
    }
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(4 * data.len());
    // PFM stores the bottom row first.
    for row in (0..height).rev() {
        for &x in &data[row * width..(row + 1) * width] {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    write_bytes(path, &out)
}

/// Reads a grayscale (`Pf`) or color (`PF`) PFM in either byte order. Color
/// files come back as three planes stacked vertically.
pub fn read_pfm(path: &Path) -> Result<PfmImage> {
    let bytes = read_bytes(path)?;
    let bad = |msg: &str| Error::format(path, msg.to_string());
    let mut cur = Bytes::new(&bytes);
    let channels = match cur.line() {
        Some("Pf") => 1,
        Some("PF") => 3,
        _ => return Err(bad("missing PFM magic (expected 'Pf' or 'PF')")),
    };
    let dims: Vec<usize> = cur
        .line()
        .ok_or_else(|| bad("missing dimensions"))?
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| bad("dimensions are not integers")))
        .collect::<Result<_>>()?;
    let [width, height] = dims[..] else {
        return Err(bad("dimension line must hold width and height"));
    };
    if width == 0 || height == 0 {
        return Err(bad("zero image dimension"));
    }
    let scale: f64 = cur
        .line()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| bad("missing or malformed scale field"))?;
    if scale == 0.0 {
        return Err(bad("scale field is zero"));
    }
    let little = scale < 0.0;
    let n = width * height * channels;
    let payload = cur
        .take(4 * n)
        .ok_or_else(|| bad(&format!("payload truncated: need {} bytes", 4 * n)))?;
    let vals: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| {
            let b: [u8; 4] = c.try_into().unwrap();
            (if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }) as f64
        })
        .collect();
    let mut data = vec![0.0; n];
    for file_row in 0..height {
        let row = height - 1 - file_row;
        for x in 0..width {
            for c in 0..channels {
                data[(c * height + row) * width + x] = vals[(file_row * width + x) * channels + c];
            }
        }
    }
    Ok(PfmImage {
        width,
        height: height * channels,
        data,
    })
}

/// Writes planar RGB in [0, 1] as an 8-bit PNG (values rounded, clamped).
pub fn write_png_rgb(path: &Path, planar: &[f64], width: usize, height: usize) -> Result<()> {
    let hw = width * height;
    if planar.len() != 3 * hw {
        return Err(Error::invalid(format!("PNG {}: expected {} values, got {}", path.display(), 3 * hw, planar.len())));
    }
    let mut buf = Vec::with_capacity(3 * hw);
    for i in 0..hw {
        for c in 0..3 {
            buf.push((planar[c * hw + i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(&buf, width as u32, height as u32, image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::format(path, e.to_string()))?;
    write_bytes(path, &out)
}

/// Reads an 8-bit PNG as planar RGB in [0, 1]; returns `(data, width, height)`.
pub fn read_png_rgb(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let bytes = read_bytes(path)?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let hw = w * h;
    let mut out = vec![0.0; 3 * hw];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            out[c * hw + i] = px[c] as f64 / 255.0;
        }
    }
    Ok((out, w, h))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_is_exact_for_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pfm");
        let data: Vec<f64> = (0..12).map(|i| (i as f32 * 0.37 - 1.0) as f64).collect();
        write_pfm(&p, &data, 3, 4).unwrap();
        let img = read_pfm(&p).unwrap();
        assert_eq!((img.width, img.height), (3, 4));
        assert_eq!(img.data, data);
        assert_eq!(img.planes(2), Some(2));
    }

    #[test]
    fn pfm_header_errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.pfm");
        std::fs::write(&p, b"P6\n1 1\n255\n").unwrap();
        let err = read_pfm(&p).unwrap_err().to_string();
        assert!(err.contains("bad.pfm"), "{err}");
        std::fs::write(&p, b"Pf\n2 2\n-1.0\n\0\0\0\0").unwrap();
        assert!(read_pfm(&p).unwrap_err().to_string().contains("truncated"));
    }

    #[test]
    fn png_round_trip_on_byte_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        let data: Vec<f64> = (0..3 * 6).map(|i| (i * 13 % 256) as f64 / 255.0).collect();
        write_png_rgb(&p, &data, 3, 2).unwrap();
        let (back, w, h) = read_png_rgb(&p).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(back, data);
    }
}
