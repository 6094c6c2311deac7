use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::magma::MAGMA;
use super::mel::MelSpectrogram;
use crate::error::{Error, Result};

/// Input size of the image-based detectors the features were designed for.
pub const DEFAULT_IMAGE_SIZE: (usize, usize) = (299, 299);

/// 8-bit RGB raster, row-major, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

/// Colormaps a mel matrix with magma and resizes it bilinearly.
///
/// Values are min-max scaled to `[0, 1]` before lookup, so the matrix minimum
/// maps to colormap entry 0 and its maximum to entry 255. A constant matrix
/// maps entirely to entry 0. High mel bands are drawn at the top. Resizing
/// aligns corners, so the four corner pixels carry the four corner cells.
pub fn render_image(m: &MelSpectrogram, width: usize, height: usize) -> Result<RgbImage> {
    if width == 0 || height == 0 || m.values.is_empty() {
        return Err(Error::InvalidInput("cannot render an empty image".into()));
    }
    let (lo, hi) = m
        .values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = (hi - lo) as f64;
    let scaled = |mel: usize, frame: usize| -> f64 {
        if span > 0.0 {
            (m.get(mel, frame) - lo) as f64 / span
        } else {
            0.0
        }
    };

    let src_w = m.n_frames;
    let src_h = m.n_mels;
    let axis = |dst: usize, dst_len: usize, src_len: usize| -> (usize, usize, f64) {
        if dst_len == 1 || src_len == 1 {
            return (0, 0, 0.0);
        }
        let pos = dst as f64 * (src_len - 1) as f64 / (dst_len - 1) as f64;
        let i0 = (pos.floor() as usize).min(src_len - 1);
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, pos - i0 as f64)
    };

    let mut pixels = Vec::with_capacity(width * height);
    for y in 0..height {
        // Image row 0 is the highest band.
        let (r0, r1, fy) = axis(height - 1 - y, height, src_h);
        for x in 0..width {
            let (c0, c1, fx) = axis(x, width, src_w);
            let top = scaled(r0, c0) * (1.0 - fx) + scaled(r0, c1) * fx;
            let bottom = scaled(r1, c0) * (1.0 - fx) + scaled(r1, c1) * fx;
            let v = top * (1.0 - fy) + bottom * fy;
            let idx = (v * 255.0).round().clamp(0.0, 255.0) as usize;
            pixels.push(MAGMA[idx]);
        }
    }
    Ok(RgbImage {
        width,
        height,
        pixels,
    })
}

/// Writes an RGB PNG.
pub fn write_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e.to_string()));
    let mut writer = encoder.write_header().map_err(to_io)?;
    let data: Vec<u8> = img.pixels.iter().flatten().copied().collect();
    writer.write_image_data(&data).map_err(to_io)?;
    writer.finish().map_err(to_io)
}
