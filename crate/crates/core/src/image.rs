//! 8-bit image output: binary PPM, PNG, and sample-count heatmaps.

use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::render::Framebuffer;

/// Row-major 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::InvalidParams(format!(
                "RGB buffer of {} bytes does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    pub fn from_framebuffer(fb: &Framebuffer) -> Self {
        RgbImage {
            width: fb.width,
            height: fb.height,
            data: fb.to_rgb8(),
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Binary `P6` PPM bytes with maxval 255.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_ppm())?;
        Ok(())
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut enc = png::Encoder::new(file, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        w.write_image_data(&self.data)?;
        w.finish()?;
        Ok(())
    }

    /// Writes PNG for a `.png` extension, PPM otherwise.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("png") => self.write_png(path),
            _ => self.write_ppm(path),
        }
    }

    pub fn read_ppm(bytes: &[u8]) -> Result<Self> {
        let bad = || Error::InvalidParams("not a binary P6 PPM with maxval 255".into());
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad());
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad())?);
        }
        pos += 1;
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(bad());
        }
        let width: usize = fields[1].parse().map_err(|_| bad())?;
        let height: usize = fields[2].parse().map_err(|_| bad())?;
        let data = bytes.get(pos..).ok_or_else(bad)?.to_vec();
        RgbImage::new(width, height, data)
    }
}

/// The 256-entry heatmap colormap (low = dark purple, high = yellow).
pub fn heatmap_colormap() -> &'static [[u8; 3]; 256] {
    static TABLE: OnceLock<[[u8; 3]; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [[0u8; 3]; 256];
        let rows = include_str!("data/heatmap_colormap.txt")
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        for (i, line) in rows.enumerate() {
            let mut it = line
                .split_whitespace()
                .map(|v| v.parse::<u8>().expect("colormap entry"));
            table[i] = [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()];
        }
        table
    })
}

/// Maps per-pixel sample counts through the heatmap colormap. Counts are
/// scaled by `max` (the largest count in `samples` when `None`); index
/// `round(255 * count / max)`, clamped.
pub fn sample_heatmap(width: usize, height: usize, samples: &[u32], max: Option<u32>) -> RgbImage {
    let max = max.unwrap_or_else(|| samples.iter().copied().max().unwrap_or(0));
    let cmap = heatmap_colormap();
    let data = samples
        .iter()
        .flat_map(|&s| {
            let idx = if max == 0 {
                0
            } else {
                ((s as f64 / max as f64) * 255.0 + 0.5).floor().min(255.0) as usize
            };
            cmap[idx]
        })
        .collect();
    RgbImage {
        width,
        height,
        data,
    }
}

/// Writes a heatmap image to any writer as PPM.
pub fn write_heatmap_ppm<W: Write>(w: &mut W, fb: &Framebuffer) -> Result<()> {
    w.write_all(&sample_heatmap(fb.width, fb.height, &fb.samples, None).to_ppm())?;
    Ok(())
}
