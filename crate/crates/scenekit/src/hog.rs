//! Whole-image histogram-of-oriented-gradients descriptor.
//!
//! Gradients vote by magnitude into unsigned orientation bins, votes are
//! pooled over square cells, and overlapping blocks of cells are
//! L2-Hys-normalized and concatenated.

use std::f32::consts::PI;

use serde::{Deserialize, Serialize};

use crate::descriptor::gradient;
use crate::error::{Error, Result};
use crate::gray::GrayImage;

/// HOG extraction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HogParams {
    /// Number of unsigned orientation bins over `[0, pi)`.
    pub orientations: usize,
    /// Cell side length in pixels.
    pub cell_size: usize,
    /// Block side length in cells.
    pub block_size: usize,
    /// L2-Hys clipping threshold.
    pub clip: f32,
}

impl Default for HogParams {
    fn default() -> Self {
        HogParams {
            orientations: 9,
            cell_size: 8,
            block_size: 2,
            clip: 0.2,
        }
    }
}

impl HogParams {
    pub fn validate(&self) -> Result<()> {
        if self.orientations == 0 || self.cell_size == 0 || self.block_size == 0 {
            return Err(Error::Descriptor(
                "HOG orientations, cell_size, and block_size must be positive".into(),
            ));
        }
        if !(self.clip > 0.0) {
            return Err(Error::Descriptor(format!(
                "HOG clip must be positive, got {}",
                self.clip
            )));
        }
        Ok(())
    }

    /// Cell grid for an image, discarding partial cells at the right/bottom.
    fn cell_grid(&self, width: usize, height: usize) -> Result<(usize, usize)> {
        self.validate()?;
        let cells_x = width / self.cell_size;
        let cells_y = height / self.cell_size;
        if cells_x < self.block_size || cells_y < self.block_size {
            return Err(Error::Descriptor(format!(
                "image {width}x{height} too small for a {0}x{0}-cell block of {1}px cells",
                self.block_size, self.cell_size
            )));
        }
        Ok((cells_x, cells_y))
    }
}

/// Descriptor length for an image of the given size.
pub fn hog_len(width: usize, height: usize, params: &HogParams) -> Result<usize> {
    let (cells_x, cells_y) = params.cell_grid(width, height)?;
    let b = params.block_size;
    Ok((cells_y - b + 1) * (cells_x - b + 1) * b * b * params.orientations)
}

/// Computes the HOG descriptor of a whole image.
pub fn hog_descriptor(img: &GrayImage, params: &HogParams) -> Result<Vec<f32>> {
    let (cells_x, cells_y) = params.cell_grid(img.width(), img.height())?;
    let nbins = params.orientations;
    let cell = params.cell_size;
    let g = gradient(img);

    // Magnitude-weighted orientation votes pooled per cell. Pixels in
    // partial cells beyond the grid are discarded.
    let mut cells = vec![0.0f32; cells_y * cells_x * nbins];
    for y in 0..cells_y * cell {
        for x in 0..cells_x * cell {
            let idx = y * img.width() + x;
            let (gx, gy) = (g.gx[idx], g.gy[idx]);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let bin = orientation_bin(gx, gy, nbins);
            let cell_idx = (y / cell) * cells_x + x / cell;
            cells[cell_idx * nbins + bin] += mag;
        }
    }

    // Every contiguous block of cells, stride one cell in each direction.
    let b = params.block_size;
    let blocks_x = cells_x - b + 1;
    let blocks_y = cells_y - b + 1;
    let mut out = Vec::with_capacity(blocks_y * blocks_x * b * b * nbins);
    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            let start = out.len();
            for dy in 0..b {
                for dx in 0..b {
                    let c = ((by + dy) * cells_x + bx + dx) * nbins;
                    out.extend_from_slice(&cells[c..c + nbins]);
                }
            }
            l2_hys(&mut out[start..], params.clip);
        }
    }
    Ok(out)
}

/// Unsigned orientation bin: `floor(theta * nbins / pi)` with `theta`
/// in `[0, pi)`, clamped to the last bin.
#[inline]
fn orientation_bin(gx: f32, gy: f32, nbins: usize) -> usize {
    let mut theta = gy.atan2(gx);
    if theta < 0.0 {
        theta += PI;
    }
    if theta >= PI {
        theta = 0.0;
    }
    ((theta * nbins as f32 / PI) as usize).min(nbins - 1)
}

/// L2 normalization, clipping at `clip`, then renormalization.
/// A zero vector stays zero.
fn l2_hys(v: &mut [f32], clip: f32) {
    let norm = (v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>()).sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x = ((*x as f64) / norm) as f32;
        }
    }
    for x in v.iter_mut() {
        if *x > clip {
            *x = clip;
        }
    }
    let norm = (v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>()).sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x = ((*x as f64) / norm) as f32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_descriptor_lengths() {
        let p = HogParams::default();
        assert_eq!(hog_len(64, 64, &p).unwrap(), 1764);
        assert_eq!(hog_len(100, 100, &p).unwrap(), 4356);
        // Partial cells are discarded, so 100x100 sees the same grid as 96x96.
        assert_eq!(hog_len(96, 96, &p).unwrap(), 4356);

        let img = GrayImage::from_fn(64, 64, |x, y| ((x * 7 + y * 13) % 50) as f32 / 50.0);
        assert_eq!(hog_descriptor(&img, &p).unwrap().len(), 1764);
    }

    #[test]
    fn too_small_image_is_rejected() {
        let p = HogParams::default();
        // One cell per axis cannot host a 2x2-cell block.
        assert!(hog_len(15, 64, &p).is_err());
        let img = GrayImage::from_fn(12, 12, |_, _| 0.5);
        assert!(hog_descriptor(&img, &p).is_err());
    }

    #[test]
    fn constant_image_gives_zero_descriptor() {
        let img = GrayImage::from_fn(32, 32, |_, _| 0.7);
        let d = hog_descriptor(&img, &HogParams::default()).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn horizontal_ramp_votes_into_bin_zero() {
        // Intensity grows with x: gx > 0, gy = 0, theta = 0.
        let img = GrayImage::from_fn(32, 32, |x, _| x as f32 / 32.0);
        let d = hog_descriptor(&img, &HogParams::default()).unwrap();
        assert!(d.iter().any(|&v| v > 0.0));
        for (i, &v) in d.iter().enumerate() {
            if i % 9 != 0 {
                assert_eq!(v, 0.0, "unexpected vote in bin {}", i % 9);
            }
        }
    }

    #[test]
    fn vertical_ramp_votes_into_middle_bin() {
        // gy > 0, gx = 0: theta = pi/2, bin floor(4.5) = 4 of 9.
        let img = GrayImage::from_fn(32, 32, |_, y| y as f32 / 32.0);
        let d = hog_descriptor(&img, &HogParams::default()).unwrap();
        assert!(d.iter().any(|&v| v > 0.0));
        for (i, &v) in d.iter().enumerate() {
            if i % 9 != 4 {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn diagonal_ramp_votes_into_bin_two() {
        // gx = gy at interior pixels: theta = pi/4, bin floor(2.25) = 2.
        // Border pixels see a one-sided difference on one axis (half the
        // central-difference value), skewing theta there, so the check
        // covers the central block, whose cells hold only interior pixels.
        let p = HogParams::default();
        let img = GrayImage::from_fn(32, 32, |x, y| (x + y) as f32 / 64.0);
        let d = hog_descriptor(&img, &p).unwrap();
        // 4x4 cell grid -> 3x3 blocks; block (1,1) covers cells (1..=2, 1..=2).
        let block = p.block_size * p.block_size * p.orientations;
        let center = &d[4 * block..5 * block];
        assert!(center.iter().any(|&v| v > 0.0));
        for (i, &v) in center.iter().enumerate() {
            if i % 9 != 2 {
                assert_eq!(v, 0.0, "unexpected vote in bin {}", i % 9);
            }
        }
    }

    #[test]
    fn orientation_bins_cover_and_wrap() {
        // theta just below pi wraps next to 0 on the half-circle.
        assert_eq!(orientation_bin(1.0, 0.0, 9), 0);
        assert_eq!(orientation_bin(-1.0, 0.0, 9), 0); // theta = pi -> wraps to 0
        assert_eq!(orientation_bin(0.0, 1.0, 9), 4);
        assert_eq!(orientation_bin(0.0, -1.0, 9), 4); // -pi/2 + pi
        assert_eq!(orientation_bin(1.0, -1e-3, 9), 8); // just below pi after shift
    }

    #[test]
    fn single_cell_block_is_an_indicator_after_l2_hys() {
        // 8x8 image, one cell, 1-cell blocks: all votes land in bin 0 and
        // normalize-clip-renormalize restores a unit indicator.
        let p = HogParams {
            block_size: 1,
            ..HogParams::default()
        };
        let img = GrayImage::from_fn(8, 8, |x, _| x as f32 / 8.0);
        let d = hog_descriptor(&img, &p).unwrap();
        assert_eq!(d.len(), 9);
        assert!((d[0] - 1.0).abs() < 1e-6);
        assert!(d[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn l2_hys_clips_dominant_components() {
        let mut v = vec![10.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        l2_hys(&mut v, 0.2);
        let norm: f64 = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        // The dominant component was clipped, so it holds a smaller share
        // than plain L2 normalization would give it.
        assert!(v[0] < 10.0 / (81.0f32 + 8.0).sqrt());

        let mut zeros = vec![0.0; 4];
        l2_hys(&mut zeros, 0.2);
        assert!(zeros.iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn blocks_have_unit_or_zero_norm(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let img = GrayImage::from_fn(40, 24, |_, _| rng.random());
            let p = HogParams::default();
            let d = hog_descriptor(&img, &p).unwrap();
            let block_len = p.block_size * p.block_size * p.orientations;
            for block in d.chunks_exact(block_len) {
                let norm: f64 = block.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
                prop_assert!(norm.abs() < 1e-9 || (norm - 1.0).abs() < 1e-5);
            }
        }

        #[test]
        fn length_matches_formula(
            w in 16usize..50,
            h in 16usize..50,
            orientations in 2usize..12,
            cell in 4usize..9,
            block in 1usize..3,
        ) {
            let p = HogParams { orientations, cell_size: cell, block_size: block, clip: 0.2 };
            prop_assume!(w / cell >= block && h / cell >= block);
            let img = GrayImage::from_fn(w, h, |x, y| ((x ^ y) % 7) as f32 / 7.0);
            let d = hog_descriptor(&img, &p).unwrap();
            let (cx, cy) = (w / cell, h / cell);
            prop_assert_eq!(d.len(), (cy - block + 1) * (cx - block + 1) * block * block * orientations);
            prop_assert_eq!(d.len(), hog_len(w, h, &p).unwrap());
            prop_assert!(d.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
        }
    }
}
