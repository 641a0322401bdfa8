//! Synthetic data generators: Gaussian descriptor blobs for clustering
//! benchmarks and oriented-grating image corpora for end-to-end tests.

use std::f32::consts::{PI, TAU};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::descriptor::{DescriptorKind, DescriptorSet};
use crate::error::Result;
use crate::gray::{write_pgm, GrayImage};

/// Standard-normal sampler (Box-Muller) that keeps the spare variate.
struct NormalSource {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalSource {
    fn new(rng: ChaCha8Rng) -> Self {
        NormalSource { rng, spare: None }
    }

    fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite.
        let u1: f64 = 1.0 - self.rng.random::<f64>();
        let u2: f64 = self.rng.random();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

/// Isotropic 2-D Gaussian blobs: one `(center, count)` pair per blob.
pub fn gaussian_blobs(blobs: &[([f64; 2], usize)], sigma: f64, seed: u64) -> DescriptorSet {
    let mut normal = NormalSource::new(ChaCha8Rng::seed_from_u64(seed));
    let mut set = DescriptorSet::new(DescriptorKind::Daisy, 2).expect("positive dim");
    for &(center, count) in blobs {
        for _ in 0..count {
            let row = [
                (center[0] + sigma * normal.next()) as f32,
                (center[1] + sigma * normal.next()) as f32,
            ];
            set.push(&row).expect("matching dim");
        }
    }
    set
}

/// `points` samples around `blobs` centers drawn uniformly from the unit
/// cube in `dim` dimensions, assigned round-robin so blob sizes stay equal.
pub fn gaussian_blobs_nd(
    blobs: usize,
    points: usize,
    dim: usize,
    sigma: f64,
    seed: u64,
) -> DescriptorSet {
    assert!(blobs > 0 && dim > 0, "blobs and dim must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<f64> = (0..blobs * dim).map(|_| rng.random()).collect();
    let mut normal = NormalSource::new(rng);

    let mut data = Vec::with_capacity(points * dim);
    for i in 0..points {
        let center = &centers[(i % blobs) * dim..(i % blobs + 1) * dim];
        for &c in center {
            data.push((c + sigma * normal.next()) as f32);
        }
    }
    DescriptorSet::from_rows(DescriptorKind::Daisy, dim, data).expect("rectangular data")
}

/// A sinusoidal grating at `angle_deg` with the given period and phase,
/// plus uniform noise, clamped to `[0, 1]`.
pub fn oriented_texture(
    width: usize,
    height: usize,
    angle_deg: f32,
    period: f32,
    phase: f32,
    noise: f32,
    rng: &mut ChaCha8Rng,
) -> GrayImage {
    let theta = angle_deg * PI / 180.0;
    let (sin, cos) = theta.sin_cos();
    GrayImage::from_fn(width, height, |x, y| {
        let along = x as f32 * cos + y as f32 * sin;
        let wave = (TAU * along / period + phase).sin();
        0.5 + 0.4 * wave + noise * (rng.random::<f32>() - 0.5)
    })
}

/// In-memory grating corpus: `classes` orientation classes (equally spaced
/// over the half-circle), `per_class` images each. Returns images with
/// their class labels.
pub fn toy_images(
    classes: usize,
    per_class: usize,
    size: usize,
    seed: u64,
) -> (Vec<GrayImage>, Vec<usize>) {
    assert!(classes > 0, "need at least one class");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for class in 0..classes {
        let angle = 180.0 * class as f32 / classes as f32;
        for _ in 0..per_class {
            let period = rng.random_range(6.0f32..14.0);
            let phase = rng.random_range(0.0f32..TAU);
            images.push(oriented_texture(size, size, angle, period, phase, 0.08, &mut rng));
            labels.push(class);
        }
    }
    (images, labels)
}

/// Writes a grating corpus to `root` as one PGM directory per class.
pub fn toy_corpus(
    root: impl AsRef<Path>,
    classes: usize,
    per_class: usize,
    size: usize,
    seed: u64,
) -> Result<()> {
    let root = root.as_ref();
    let (images, labels) = toy_images(classes, per_class, size, seed);
    for (i, (img, &label)) in images.iter().zip(&labels).enumerate() {
        let angle = 180 * label / classes;
        let dir = root.join(format!("texture_{angle:03}"));
        std::fs::create_dir_all(&dir).map_err(|e| crate::error::Error::io(&dir, e))?;
        write_pgm(dir.join(format!("img_{i:04}.pgm")), img)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_land_near_their_centers() {
        let set = gaussian_blobs(&[([0.0, 0.0], 50), ([10.0, 10.0], 50)], 0.3, 1);
        assert_eq!(set.count(), 100);
        for (i, row) in set.rows().enumerate() {
            let center = if i < 50 { [0.0, 0.0] } else { [10.0, 10.0] };
            let d = ((row[0] - center[0]).powi(2) + (row[1] - center[1]).powi(2)).sqrt();
            assert!(d < 3.0, "point {i} strayed {d} from its blob");
        }
    }

    #[test]
    fn nd_blobs_have_requested_shape_and_reproduce() {
        let a = gaussian_blobs_nd(5, 40, 16, 0.05, 9);
        let b = gaussian_blobs_nd(5, 40, 16, 0.05, 9);
        assert_eq!(a.count(), 40);
        assert_eq!(a.dim(), 16);
        assert_eq!(a.as_flat(), b.as_flat());
        assert!(a.as_flat().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn normal_source_has_sane_moments() {
        let mut normal = NormalSource::new(ChaCha8Rng::seed_from_u64(4));
        let n = 20_000;
        let samples: Vec<f64> = (0..n).map(|_| normal.next()).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn gratings_differ_by_orientation_but_share_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let horizontal = oriented_texture(32, 32, 0.0, 8.0, 0.0, 0.0, &mut rng);
        let vertical = oriented_texture(32, 32, 90.0, 8.0, 0.0, 0.0, &mut rng);
        // A 0-degree grating varies along x and is constant along y.
        assert_eq!(horizontal.get(3, 0), horizontal.get(3, 20));
        assert_ne!(horizontal.get(0, 0), horizontal.get(4, 0));
        // cos(90 deg) is not exactly zero in f32, so allow a float-noise
        // wobble along the nominally-constant axis.
        let wobble = (vertical.get(0, 3) - vertical.get(20, 3)).abs();
        assert!(wobble < 1e-5, "vertical grating varies along x by {wobble}");
    }

    #[test]
    fn toy_corpus_writes_class_directories() {
        let dir = tempfile::tempdir().unwrap();
        toy_corpus(dir.path(), 3, 4, 48, 5).unwrap();
        let corpus = crate::dataset::scan_corpus(dir.path()).unwrap();
        assert_eq!(corpus.classes, ["texture_000", "texture_060", "texture_120"]);
        assert_eq!(corpus.class_counts(), [4, 4, 4]);
    }
}
