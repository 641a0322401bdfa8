//! Grayscale image type, image decoding, and a PGM (P2/P5) codec.
//!
//! All pipeline stages operate on [`GrayImage`]: row-major luminance in
//! `[0, 1]`. Color inputs are reduced with ITU-R BT.601 weights.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const LUMA_R: f32 = 0.299;
const LUMA_G: f32 = 0.587;
const LUMA_B: f32 = 0.114;

/// A grayscale image with pixel values in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl GrayImage {
    /// Builds an image, validating dimensions and the `[0, 1]` pixel range.
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Descriptor(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Descriptor(format!(
                "pixel buffer length {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Descriptor(format!(
                "pixel value {bad} outside [0, 1]"
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from a per-pixel function; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        GrayImage {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }
}

/// Loads an image file (PGM P2/P5, PNG, or JPEG) as grayscale.
///
/// Color inputs are converted with Y = 0.299 R + 0.587 G + 0.114 B, then
/// scaled to `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        return decode_pgm(&bytes).map_err(|reason| Error::decode(path, reason));
    }
    let img = image::load_from_memory(&bytes).map_err(|e| Error::decode(path, e.to_string()))?;
    Ok(from_dynamic(&img))
}

fn from_dynamic(img: &image::DynamicImage) -> GrayImage {
    use image::DynamicImage;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = match img {
        DynamicImage::ImageLuma8(gray) => {
            gray.as_raw().iter().map(|&v| v as f32 / 255.0).collect()
        }
        DynamicImage::ImageLumaA8(gray) => gray
            .as_raw()
            .chunks_exact(2)
            .map(|px| px[0] as f32 / 255.0)
            .collect(),
        other => {
            let rgb = other.to_rgb8();
            rgb.as_raw()
                .chunks_exact(3)
                .map(|px| {
                    (LUMA_R * px[0] as f32 + LUMA_G * px[1] as f32 + LUMA_B * px[2] as f32) / 255.0
                })
                .collect()
        }
    };
    GrayImage {
        width: w,
        height: h,
        pixels,
    }
}

/// Writes a binary PGM (P5, maxval 255). Pixels are quantized with rounding.
pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(img.pixels.len() + 32);
    write!(out, "P5\n{} {}\n255\n", img.width, img.height).expect("vec write");
    out.extend(
        img.pixels
            .iter()
            .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn decode_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let binary = match &bytes[..2] {
        b"P5" => true,
        b"P2" => false,
        _ => return Err("not a PGM file".into()),
    };
    let mut pos = 2usize;
    let width = read_header_int(bytes, &mut pos)?;
    let height = read_header_int(bytes, &mut pos)?;
    let maxval = read_header_int(bytes, &mut pos)?;
    if width == 0 || height == 0 {
        return Err("zero image dimension".into());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("invalid maxval {maxval}"));
    }
    let n = width * height;
    // Divide rather than multiply by a reciprocal so 8-bit samples land on
    // exactly the same floats as other decode paths (v / 255.0 bitwise).
    let maxval_f = maxval as f32;

    let pixels = if binary {
        if maxval > 255 {
            return Err("binary PGM with maxval > 255 is not supported".into());
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let raster = bytes
            .get(pos..pos + n)
            .ok_or_else(|| "truncated PGM raster".to_string())?;
        raster.iter().map(|&v| v as f32 / maxval_f).collect()
    } else {
        let mut vals = Vec::with_capacity(n);
        for _ in 0..n {
            let v = read_header_int(bytes, &mut pos)?;
            if v > maxval {
                return Err(format!("sample {v} exceeds maxval {maxval}"));
            }
            vals.push(v as f32 / maxval_f);
        }
        vals
    };
    if pixels.iter().any(|p| *p > 1.0) {
        return Err("sample exceeds maxval".into());
    }
    GrayImage::new(width, height, pixels).map_err(|e| e.to_string())
}

/// Reads the next ASCII integer, skipping whitespace and `#` comments.
fn read_header_int(bytes: &[u8], pos: &mut usize) -> std::result::Result<usize, String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err("expected integer in PGM header".into());
    }
    std::str::from_utf8(&bytes[start..*pos])
        .unwrap()
        .parse()
        .map_err(|e| format!("bad integer in PGM header: {e}"))
}
