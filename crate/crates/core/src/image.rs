//! Raster types and their on-disk encodings (8-bit PNG, little-endian PFM).

use std::fs;
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};

use crate::checkpoint::write_atomic;
use crate::error::{Error, Result};

/// Linear RGBA raster with channels in `[0, 1]`.
///
/// RGB is stored already composited over a white background; alpha is the
/// coverage (silhouette) of the foreground.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbaImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f32; 4]>,
}

/// Single-channel raster in `[0, 1]` (silhouettes, masks, luma).
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
}

/// Per-pixel depth in world units; invalid pixels hold `+inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
}

impl RgbaImage {
    pub fn new(width: u32, height: u32, fill: [f32; 4]) -> Self {
        Self {
            width,
            height,
            pixels: vec![fill; (width * height) as usize],
        }
    }

    pub fn white(width: u32, height: u32) -> Self {
        Self::new(width, height, [1.0, 1.0, 1.0, 0.0])
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [f32; 4] {
        self.pixels[self.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, p: [f32; 4]) {
        let i = self.index(x, y);
        self.pixels[i] = p;
    }

    pub fn alpha(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            values: self.pixels.iter().map(|p| p[3]).collect(),
        }
    }

    /// Rounds every channel to the nearest 8-bit level.
    pub fn quantized(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self
                .pixels
                .iter()
                .map(|p| [quantize(p[0]), quantize(p[1]), quantize(p[2]), quantize(p[3])])
                .collect(),
        }
    }

    /// Bilinear lookup in continuous pixel coordinates (pixel centres at
    /// integer positions), clamped at the borders.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> [f32; 4] {
        let w = self.width as i64;
        let h = self.height as i64;
        let xf = x.clamp(0.0, (w - 1) as f64);
        let yf = y.clamp(0.0, (h - 1) as f64);
        let x0 = (xf.floor() as i64).min(w - 1);
        let y0 = (yf.floor() as i64).min(h - 1);
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let tx = xf - x0 as f64;
        let ty = yf - y0 as f64;
        let p00 = self.get(x0 as u32, y0 as u32);
        let p10 = self.get(x1 as u32, y0 as u32);
        let p01 = self.get(x0 as u32, y1 as u32);
        let p11 = self.get(x1 as u32, y1 as u32);
        let mut out = [0.0f32; 4];
        for c in 0..4 {
            if tx == 0.0 && ty == 0.0 {
                out[c] = p00[c];
                continue;
            }
            let top = p00[c] as f64 * (1.0 - tx) + p10[c] as f64 * tx;
            let bot = p01[c] as f64 * (1.0 - tx) + p11[c] as f64 * tx;
            out[c] = (top * (1.0 - ty) + bot * ty) as f32;
        }
        out
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_rgba8();
        let (width, height) = img.dimensions();
        let pixels = img
            .pixels()
            .map(|p| {
                [
                    p.0[0] as f32 / 255.0,
                    p.0[1] as f32 / 255.0,
                    p.0[2] as f32 / 255.0,
                    p.0[3] as f32 / 255.0,
                ]
            })
            .collect();
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .flat_map(|p| p.map(to_u8))
            .collect();
        write_png(path, &bytes, self.width, self.height, ExtendedColorType::Rgba8)
    }
}

impl GrayImage {
    pub fn new(width: u32, height: u32, fill: f32) -> Self {
        Self {
            width,
            height,
            values: vec![fill; (width * height) as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[(y * self.width + x) as usize]
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_luma8();
        let (width, height) = img.dimensions();
        Ok(Self {
            width,
            height,
            values: img.as_raw().iter().map(|&v| v as f32 / 255.0).collect(),
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.values.iter().map(|&v| to_u8(v)).collect();
        write_png(path, &bytes, self.width, self.height, ExtendedColorType::L8)
    }
}

impl DepthMap {
    pub fn new(width: u32, height: u32, fill: f32) -> Self {
        Self {
            width,
            height,
            values: vec![fill; (width * height) as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[(y * self.width + x) as usize]
    }

    /// Reads a single-channel PFM ("Pf"); either byte order is accepted.
    pub fn load_pfm(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |message: &str| Error::Format {
            format: "PFM",
            path: path.to_path_buf(),
            message: message.to_string(),
        };
        let mut fields = Vec::with_capacity(4);
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
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        if fields[0] != "Pf" {
            return Err(bad(&format!("unsupported magic '{}'", fields[0])));
        }
        let width: u32 = fields[1].parse().map_err(|_| bad("bad width"))?;
        let height: u32 = fields[2].parse().map_err(|_| bad("bad height"))?;
        let scale: f64 = fields[3].parse().map_err(|_| bad("bad scale"))?;
        let little = scale < 0.0;
        let n = (width * height) as usize;
        if bytes.len() < pos + 4 * n {
            return Err(bad("truncated raster"));
        }
        let mut values = vec![0.0f32; n];
        for row in 0..height as usize {
            // rows are stored bottom to top
            let dst_row = height as usize - 1 - row;
            for col in 0..width as usize {
                let off = pos + 4 * (row * width as usize + col);
                let raw: [u8; 4] = bytes[off..off + 4].try_into().unwrap();
                values[dst_row * width as usize + col] = if little {
                    f32::from_le_bytes(raw)
                } else {
                    f32::from_be_bytes(raw)
                };
            }
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Writes a little-endian single-channel PFM (scale `-1.0`).
    pub fn save_pfm(&self, path: &Path) -> Result<()> {
        let mut buf = format!("Pf\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        for row in (0..self.height).rev() {
            for col in 0..self.width {
                buf.extend_from_slice(&self.get(col, row).to_le_bytes());
            }
        }
        write_atomic(path, &buf)
    }
}

fn write_png(path: &Path, bytes: &[u8], width: u32, height: u32, color: ExtendedColorType) -> Result<()> {
    let mut buf = Vec::new();
    let encoder = PngEncoder::new_with_quality(&mut buf, CompressionType::Default, FilterType::Adaptive);
    encoder
        .write_image(bytes, width, height, color)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
    write_atomic(path, &buf)
}

#[inline]
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[inline]
pub fn quantize(v: f32) -> f32 {
    to_u8(v) as f32 / 255.0
}

/// Rec. 601 luma of an RGB triple.
#[inline]
pub fn luma(p: [f32; 4]) -> f32 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

/// Halves the resolution by averaging 2x2 blocks, which is bilinear
/// downsampling by exactly two with pixel-centre alignment.
pub fn downsample2x(img: &RgbaImage) -> RgbaImage {
    let (w, h) = (img.width / 2, img.height / 2);
    let mut out = RgbaImage::new(w, h, [0.0; 4]);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f32; 4];
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let p = img.get(2 * x + dx, 2 * y + dy);
                for c in 0..4 {
                    acc[c] += p[c];
                }
            }
            out.set(x, y, acc.map(|v| v * 0.25));
        }
    }
    out
}

/// Upper bound reported for identical images.
pub const PSNR_MAX_DB: f64 = 60.0;

/// PSNR over the RGB channels of the pixels selected by `region`
/// (`x0..x1`, `y0..y1`, exclusive upper bounds), capped at [`PSNR_MAX_DB`].
pub fn psnr_region(a: &RgbaImage, b: &RgbaImage, region: (u32, u32, u32, u32)) -> f64 {
    let (x0, y0, x1, y1) = region;
    let mut se = 0.0f64;
    let mut n = 0usize;
    for y in y0..y1.min(a.height) {
        for x in x0..x1.min(a.width) {
            let p = a.get(x, y);
            let q = b.get(x, y);
            for c in 0..3 {
                let d = p[c] as f64 - q[c] as f64;
                se += d * d;
            }
            n += 3;
        }
    }
    if n == 0 {
        return PSNR_MAX_DB;
    }
    psnr_from_mse(se / n as f64)
}

pub fn psnr(a: &RgbaImage, b: &RgbaImage) -> f64 {
    psnr_region(a, b, (0, 0, a.width, a.height))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_MAX_DB;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_MAX_DB)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        let mut d = DepthMap::new(3, 2, f32::INFINITY);
        d.values[1] = 0.3;
        d.values[4] = -1.25e-7;
        d.save_pfm(&path).unwrap();
        let back = DepthMap::load_pfm(&path).unwrap();
        assert_eq!(back.width, 3);
        for (a, b) in d.values.iter().zip(&back.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let raw = fs::read(&path).unwrap();
        assert!(raw.starts_with(b"Pf\n3 2\n-1.0\n"));
    }

    #[test]
    fn quantized_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let mut img = RgbaImage::white(4, 3);
        img.set(1, 2, [0.2, 0.4, 0.6, 0.8]);
        let img = img.quantized();
        img.save_png(&path).unwrap();
        assert_eq!(RgbaImage::load_png(&path).unwrap(), img);
    }

    #[test]
    fn psnr_caps_identical_images() {
        let img = RgbaImage::white(4, 4);
        assert_eq!(psnr(&img, &img), PSNR_MAX_DB);
    }

    #[test]
    fn bilinear_at_pixel_centre_is_exact() {
        let mut img = RgbaImage::white(3, 3);
        img.set(1, 1, [0.1, 0.2, 0.3, 1.0]);
        assert_eq!(img.sample_bilinear(1.0, 1.0), [0.1, 0.2, 0.3, 1.0]);
    }
}
