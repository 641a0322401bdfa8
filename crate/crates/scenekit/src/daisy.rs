//! Dense DAISY descriptors.
//!
//! Rectified orientation maps are smoothed at one scale per ring; each
//! descriptor concatenates an orientation histogram at the center with
//! histograms sampled on concentric rings, every histogram L2-normalized
//! on its own.

use std::f32::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::descriptor::{gradient, DescriptorKind, DescriptorSet};
use crate::error::{Error, Result};
use crate::gray::GrayImage;

/// DAISY extraction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DaisyParams {
    /// Outermost ring radius in pixels.
    pub radius: usize,
    /// Number of rings.
    pub rings: usize,
    /// Histograms sampled per ring.
    pub ring_histograms: usize,
    /// Orientation bins per histogram.
    pub orientations: usize,
    /// Grid spacing between descriptor centers, in pixels.
    pub step: usize,
    /// Smoothing scale of the innermost ring; ring `j` uses `(j+1)` times it.
    pub base_sigma: f32,
}

impl Default for DaisyParams {
    fn default() -> Self {
        DaisyParams {
            radius: 15,
            rings: 3,
            ring_histograms: 8,
            orientations: 8,
            step: 8,
            base_sigma: 1.6,
        }
    }
}

impl DaisyParams {
    /// Length of one descriptor: `(rings * ring_histograms + 1) * orientations`.
    pub fn descriptor_len(&self) -> usize {
        (self.rings * self.ring_histograms + 1) * self.orientations
    }

    pub fn validate(&self) -> Result<()> {
        if self.radius == 0
            || self.rings == 0
            || self.ring_histograms == 0
            || self.orientations == 0
            || self.step == 0
        {
            return Err(Error::Descriptor(
                "DAISY radius, rings, ring_histograms, orientations, and step must be positive"
                    .into(),
            ));
        }
        if !(self.base_sigma > 0.0) {
            return Err(Error::Descriptor(format!(
                "DAISY base_sigma must be positive, got {}",
                self.base_sigma
            )));
        }
        Ok(())
    }

    /// Descriptor centers: a grid with margin `radius` and spacing `step`,
    /// so every ring sample stays inside the image.
    pub fn grid_positions(&self, width: usize, height: usize) -> Result<Vec<(usize, usize)>> {
        self.validate()?;
        if width <= 2 * self.radius || height <= 2 * self.radius {
            return Err(Error::Descriptor(format!(
                "image {width}x{height} too small for DAISY radius {}; need both sides > {}",
                self.radius,
                2 * self.radius
            )));
        }
        let mut positions = Vec::new();
        let mut y = self.radius;
        while y + self.radius < height {
            let mut x = self.radius;
            while x + self.radius < width {
                positions.push((x, y));
                x += self.step;
            }
            y += self.step;
        }
        Ok(positions)
    }
}

/// Extracts DAISY descriptors on a dense grid over one image.
pub fn daisy_grid(img: &GrayImage, params: &DaisyParams) -> Result<DescriptorSet> {
    let positions = params.grid_positions(img.width(), img.height())?;
    let (w, h) = (img.width(), img.height());
    let n_orient = params.orientations;
    let g = gradient(img);

    // Rectified orientation maps: the gradient's positive component along
    // each of `orientations` directions over the full circle.
    let maps: Vec<Vec<f32>> = (0..n_orient)
        .map(|o| {
            let theta = TAU * o as f32 / n_orient as f32;
            let (sin, cos) = theta.sin_cos();
            (0..w * h)
                .map(|i| (g.gx[i] * cos + g.gy[i] * sin).max(0.0))
                .collect()
        })
        .collect();

    // One smoothed copy of every map per ring scale. The center histogram
    // reads the innermost scale.
    let stacks: Vec<Vec<Vec<f32>>> = (0..params.rings)
        .map(|ring| {
            let sigma = params.base_sigma * (ring + 1) as f32;
            maps.iter()
                .map(|m| gaussian_blur(m, w, h, sigma))
                .collect()
        })
        .collect();

    let mut set = DescriptorSet::new(DescriptorKind::Daisy, params.descriptor_len())?;
    let mut desc = vec![0.0f32; params.descriptor_len()];
    for &(px, py) in &positions {
        desc.clear();
        for map in &stacks[0] {
            desc.push(map[py * w + px]);
        }
        for (ring, stack) in stacks.iter().enumerate() {
            let ring_radius = params.radius as f32 * (ring + 1) as f32 / params.rings as f32;
            for t in 0..params.ring_histograms {
                let phi = TAU * t as f32 / params.ring_histograms as f32;
                let (sin, cos) = phi.sin_cos();
                let sx = nearest(px as f32 + ring_radius * cos, w);
                let sy = nearest(py as f32 + ring_radius * sin, h);
                for map in stack {
                    desc.push(map[sy * w + sx]);
                }
            }
        }
        for segment in desc.chunks_exact_mut(n_orient) {
            l2_normalize_segment(segment);
        }
        set.push(&desc)?;
    }
    Ok(set)
}

/// Nearest-pixel coordinate, clamped to the image.
#[inline]
fn nearest(v: f32, extent: usize) -> usize {
    (v.round() as i64).clamp(0, extent as i64 - 1) as usize
}

fn l2_normalize_segment(segment: &mut [f32]) {
    let norm = segment
        .iter()
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt();
    if norm > 0.0 {
        for v in segment.iter_mut() {
            *v = ((*v as f64) / norm) as f32;
        }
    }
}

/// Symmetric Gaussian taps with truncation radius `max(1, floor(4 sigma))`,
/// normalized to sum 1.
fn gaussian_kernel(sigma: f32) -> Vec<f64> {
    let radius = (4.0 * sigma as f64).floor().max(1.0) as i64;
    let denom = 2.0 * (sigma as f64) * (sigma as f64);
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    for v in &mut kernel {
        *v /= sum;
    }
    kernel
}

/// Separable Gaussian blur with replicated (clamped) borders.
fn gaussian_blur(src: &[f32], width: usize, height: usize, sigma: f32) -> Vec<f32> {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;

    let mut rows = vec![0.0f32; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0f64;
            for (j, &k) in kernel.iter().enumerate() {
                let sx = (x as i64 + j as i64 - radius).clamp(0, width as i64 - 1) as usize;
                acc += k * src[y * width + sx] as f64;
            }
            rows[y * width + x] = acc as f32;
        }
    }

    let mut out = vec![0.0f32; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0f64;
            for (j, &k) in kernel.iter().enumerate() {
                let sy = (y as i64 + j as i64 - radius).clamp(0, height as i64 - 1) as usize;
                acc += k * rows[sy * width + x] as f64;
            }
            out[y * width + x] = acc as f32;
        }
    }
    out
}
