//! Visual-word codebooks: k-means++ initialization, mini-batch k-means
//! fitting, an exact Lloyd baseline, and nearest-center assignment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::DescriptorSet;
use crate::error::{Error, Result};

/// How a codebook fit ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    /// Iterations actually run.
    pub iterations: usize,
    /// Points per iteration (the full set for the Lloyd baseline).
    pub batch_size: usize,
    pub seed: u64,
    /// Max center displacement in the last iteration.
    pub final_shift: f64,
    /// True when the shift tolerance stopped the fit, false when the
    /// iteration cap did.
    pub converged: bool,
}

/// Mini-batch k-means hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiniBatchConfig {
    pub k: usize,
    pub batch_size: usize,
    pub max_iterations: usize,
    /// Stop once the max per-center L2 shift in an iteration falls below this.
    pub shift_tolerance: f64,
    pub seed: u64,
}

impl Default for MiniBatchConfig {
    fn default() -> Self {
        MiniBatchConfig {
            k: 600,
            batch_size: 1024,
            max_iterations: 300,
            shift_tolerance: 1e-4,
            seed: 0,
        }
    }
}

impl MiniBatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.batch_size == 0 || self.max_iterations == 0 {
            return Err(Error::Config(
                "k, batch_size, and max_iterations must be at least 1".into(),
            ));
        }
        if !(self.shift_tolerance >= 0.0) {
            return Err(Error::Config(format!(
                "shift_tolerance must be non-negative, got {}",
                self.shift_tolerance
            )));
        }
        Ok(())
    }
}

/// A trained vocabulary: `k` centers of dimension `dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: usize,
    dim: usize,
    centers: Vec<f32>,
    pub train_meta: Option<TrainMeta>,
}

impl Codebook {
    pub fn new(
        k: usize,
        dim: usize,
        centers: Vec<f32>,
        train_meta: Option<TrainMeta>,
    ) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::Config("codebook k and dim must be positive".into()));
        }
        if centers.len() != k * dim {
            return Err(Error::DimMismatch {
                expected: k * dim,
                got: centers.len(),
            });
        }
        if !centers.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("codebook centers".into()));
        }
        Ok(Codebook {
            k,
            dim,
            centers,
            train_meta,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centers(&self) -> &[f32] {
        &self.centers
    }

    #[inline]
    pub fn center(&self, i: usize) -> &[f32] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }
}

/// Index of the nearest center by squared Euclidean distance; ties break to
/// the lowest index.
pub fn assign(codebook: &Codebook, x: &[f32]) -> Result<usize> {
    if x.len() != codebook.dim {
        return Err(Error::DimMismatch {
            expected: codebook.dim,
            got: x.len(),
        });
    }
    let mut best = 0usize;
    let mut best_dist = f64::INFINITY;
    for c in 0..codebook.k {
        let d = sq_dist_f64(x, codebook.center(c));
        if d < best_dist {
            best_dist = d;
            best = c;
        }
    }
    Ok(best)
}

/// Sum over all points of the squared distance to their nearest center.
pub fn inertia(codebook: &Codebook, data: &DescriptorSet) -> Result<f64> {
    if data.dim() != codebook.dim {
        return Err(Error::DimMismatch {
            expected: codebook.dim,
            got: data.dim(),
        });
    }
    // Per-point minima in parallel, then a sequential sum so the result does
    // not depend on reduction order.
    let per_point: Vec<f64> = (0..data.count())
        .into_par_iter()
        .map(|i| {
            let x = data.row(i);
            (0..codebook.k)
                .map(|c| sq_dist_f64(x, codebook.center(c)))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(per_point.into_iter().sum::<f64>().max(0.0))
}

/// k-means++ seeding: first center uniform, each next center drawn with
/// probability proportional to squared distance from the chosen set.
pub fn kmeanspp_init(data: &DescriptorSet, k: usize, seed: u64) -> Result<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kmeanspp_with_rng(data, k, &mut rng)
}

fn kmeanspp_with_rng(data: &DescriptorSet, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f32>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let n = data.count();
    if n < k {
        return Err(Error::InsufficientData { needed: k, got: n });
    }
    let dim = data.dim();
    let point_norms: Vec<f32> = (0..n).map(|i| dot(data.row(i), data.row(i))).collect();

    let mut centers = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centers.extend_from_slice(data.row(first));

    // Squared distance from each point to its nearest chosen center. The
    // expanded form reuses the point norms; exact duplicates of a chosen
    // center come out exactly zero, so they carry no sampling weight.
    let mut d2 = vec![0.0f64; n];
    update_d2(&mut d2, data, &point_norms, &centers[..dim], true);

    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 && total.is_finite() {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0f64;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can exhaust the walk; fall back to the last point
            // that still carries weight.
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap_or(n - 1))
        } else {
            rng.random_range(0..n)
        };
        let start = centers.len();
        centers.extend_from_slice(data.row(next));
        update_d2(&mut d2, data, &point_norms, &centers[start..], false);
    }
    Ok(centers)
}

/// Lowers each point's nearest-center distance given one new center.
fn update_d2(d2: &mut [f64], data: &DescriptorSet, point_norms: &[f32], center: &[f32], init: bool) {
    let center_norm = dot(center, center);
    for (i, slot) in d2.iter_mut().enumerate() {
        let x = data.row(i);
        let d = ((point_norms[i] - 2.0 * dot(x, center) + center_norm) as f64).max(0.0);
        if init || d < *slot {
            *slot = d;
        }
    }
}

/// Fits a codebook with mini-batch k-means.
///
/// Each iteration samples `batch_size` points with replacement, caches every
/// sampled point's nearest center (against the iteration-start centers), then
/// applies the updates in sample order: `c <- (1 - eta) c + eta x` with
/// `eta = 1 / (cumulative assignment count of c)`.
pub fn minibatch_fit(data: &DescriptorSet, config: &MiniBatchConfig) -> Result<Codebook> {
    config.validate()?;
    let n = data.count();
    let dim = data.dim();
    if n < config.k {
        return Err(Error::InsufficientData {
            needed: config.k,
            got: n,
        });
    }
    if !data.as_flat().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("descriptor data".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Seeding k-means++ over the full set would dwarf the fit itself at
    // web scale, so it runs on a without-replacement subsample that is
    // comfortably larger than both k and one batch.
    let init_n = n.min((10 * config.k).max(3 * config.batch_size));
    let mut centers = if init_n == n {
        kmeanspp_with_rng(data, config.k, &mut rng)?
    } else {
        let picks = rand::seq::index::sample(&mut rng, n, init_n);
        let mut subsample = DescriptorSet::new(data.kind, dim)?;
        for i in picks {
            subsample.push(data.row(i))?;
        }
        kmeanspp_with_rng(&subsample, config.k, &mut rng)?
    };

    let mut counts = vec![0u64; config.k];
    let mut iterations = 0;
    let mut final_shift = f64::INFINITY;
    let mut converged = false;
    for _ in 0..config.max_iterations {
        iterations += 1;
        let batch: Vec<usize> = (0..config.batch_size)
            .map(|_| rng.random_range(0..n))
            .collect();

        let start_centers = centers.clone();
        let center_norms = center_norms(&start_centers, dim);
        let assignments: Vec<usize> = batch
            .par_iter()
            .map(|&i| nearest_expanded(data.row(i), &start_centers, &center_norms, dim))
            .collect();

        minibatch_update_pass(&mut centers, dim, &mut counts, data, &batch, &assignments);

        final_shift = max_center_shift(&start_centers, &centers, dim);
        if final_shift < config.shift_tolerance {
            converged = true;
            break;
        }
    }

    reseed_duplicate_centers(&mut centers, dim, data, &mut rng);
    Codebook::new(
        config.k,
        dim,
        centers,
        Some(TrainMeta {
            iterations,
            batch_size: config.batch_size,
            seed: config.seed,
            final_shift,
            converged,
        }),
    )
}

/// The sequential per-sample center updates of one mini-batch iteration.
pub(crate) fn minibatch_update_pass(
    centers: &mut [f32],
    dim: usize,
    counts: &mut [u64],
    data: &DescriptorSet,
    batch: &[usize],
    assignments: &[usize],
) {
    for (&i, &c) in batch.iter().zip(assignments) {
        counts[c] += 1;
        let eta = 1.0 / counts[c] as f64;
        let center = &mut centers[c * dim..(c + 1) * dim];
        for (cv, &xv) in center.iter_mut().zip(data.row(i)) {
            *cv = ((1.0 - eta) * (*cv as f64) + eta * xv as f64) as f32;
        }
    }
}

/// Full-batch Lloyd iterations from a k-means++ seed, until assignments
/// stabilize or `max_iterations` is reached. Clusters left empty are
/// re-seeded to the point currently farthest from its own center.
pub fn lloyd_exact(
    data: &DescriptorSet,
    k: usize,
    seed: u64,
    max_iterations: usize,
) -> Result<Codebook> {
    if max_iterations == 0 {
        return Err(Error::Config("max_iterations must be at least 1".into()));
    }
    let n = data.count();
    let dim = data.dim();
    if n < k {
        return Err(Error::InsufficientData { needed: k, got: n });
    }
    if !data.as_flat().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("descriptor data".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeanspp_with_rng(data, k, &mut rng)?;
    let point_norms: Vec<f32> = (0..n).map(|i| dot(data.row(i), data.row(i))).collect();

    let mut assignments: Vec<usize> = Vec::new();
    let mut iterations = 0;
    let mut final_shift = f64::INFINITY;
    let mut converged = false;
    for _ in 0..max_iterations {
        iterations += 1;
        let norms = center_norms(&centers, dim);
        let assigned: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = data.row(i);
                let (mut best, mut best_score) = (0usize, f32::INFINITY);
                for c in 0..k {
                    let score = norms[c] - 2.0 * dot(x, &centers[c * dim..(c + 1) * dim]);
                    if score < best_score {
                        best_score = score;
                        best = c;
                    }
                }
                let d2 = ((point_norms[i] + best_score) as f64).max(0.0);
                (best, d2)
            })
            .collect();
        let new_assignments: Vec<usize> = assigned.iter().map(|&(c, _)| c).collect();
        if new_assignments == assignments {
            converged = true;
            break;
        }

        let start_centers = std::mem::take(&mut centers);
        let mut sums = vec![0.0f64; k * dim];
        let mut cluster_sizes = vec![0usize; k];
        for (i, &(c, _)) in assigned.iter().enumerate() {
            cluster_sizes[c] += 1;
            let row = data.row(i);
            for (s, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row) {
                *s += v as f64;
            }
        }
        centers = vec![0.0f32; k * dim];
        let mut point_dist: Vec<f64> = assigned.iter().map(|&(_, d)| d).collect();
        for c in 0..k {
            if cluster_sizes[c] > 0 {
                let inv = 1.0 / cluster_sizes[c] as f64;
                for (cv, &s) in centers[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..]) {
                    *cv = (s * inv) as f32;
                }
            } else {
                // Re-seed to the worst-served point; zero its distance so a
                // second empty cluster picks a different point.
                let far = point_dist
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                point_dist[far] = 0.0;
                centers[c * dim..(c + 1) * dim].copy_from_slice(data.row(far));
            }
        }
        final_shift = max_center_shift(&start_centers, &centers, dim);
        assignments = new_assignments;
    }

    Codebook::new(
        k,
        dim,
        centers,
        Some(TrainMeta {
            iterations,
            batch_size: n,
            seed,
            final_shift,
            converged,
        }),
    )
}

/// Replaces exact-duplicate centers with random data points so all centers
/// are distinct; centers that never received an assignment are otherwise
/// left where initialization put them.
fn reseed_duplicate_centers(
    centers: &mut [f32],
    dim: usize,
    data: &DescriptorSet,
    rng: &mut ChaCha8Rng,
) {
    let k = centers.len() / dim;
    for c in 1..k {
        let is_dup =
            |centers: &[f32], c: usize| (0..c).any(|p| centers[p * dim..(p + 1) * dim] == centers[c * dim..(c + 1) * dim]);
        let mut guard = 0;
        while is_dup(centers, c) && guard < 100 {
            let pick = rng.random_range(0..data.count());
            centers[c * dim..(c + 1) * dim].copy_from_slice(data.row(pick));
            guard += 1;
        }
    }
}

fn center_norms(centers: &[f32], dim: usize) -> Vec<f32> {
    centers.chunks_exact(dim).map(|c| dot(c, c)).collect()
}

/// Nearest center via the expanded form `||c||^2 - 2 x.c` (the `||x||^2`
/// term is constant per query). The fit hot path.
pub(crate) fn nearest_expanded(x: &[f32], centers: &[f32], norms: &[f32], dim: usize) -> usize {
    let mut best = 0usize;
    let mut best_score = f32::INFINITY;
    for (c, center) in centers.chunks_exact(dim).enumerate() {
        let score = norms[c] - 2.0 * dot(x, center);
        if score < best_score {
            best_score = score;
            best = c;
        }
    }
    best
}

/// Dot product over eight independent lanes so the compiler can vectorize.
#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let (pa, pb) = (&a[i * 8..i * 8 + 8], &b[i * 8..i * 8 + 8]);
        for l in 0..8 {
            lanes[l] += pa[l] * pb[l];
        }
    }
    let mut sum: f32 = lanes.iter().sum();
    for i in chunks * 8..a.len() {
        sum += a[i] * b[i];
    }
    sum
}

#[inline]
fn sq_dist_f64(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let d = (x - y) as f64;
        acc += d * d;
    }
    acc
}

fn max_center_shift(before: &[f32], after: &[f32], dim: usize) -> f64 {
    before
        .chunks_exact(dim)
        .zip(after.chunks_exact(dim))
        .map(|(a, b)| sq_dist_f64(a, b).sqrt())
        .fold(0.0f64, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::DescriptorKind;
    use crate::synth::gaussian_blobs;
    use proptest::prelude::*;

    fn set_from(rows: &[&[f32]]) -> DescriptorSet {
        let dim = rows[0].len();
        let flat: Vec<f32> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        DescriptorSet::from_rows(DescriptorKind::Daisy, dim, flat).unwrap()
    }

    fn codebook_from(rows: &[&[f32]]) -> Codebook {
        let set = set_from(rows);
        Codebook::new(rows.len(), rows[0].len(), set.into_flat(), None).unwrap()
    }

    #[test]
    fn assign_picks_exact_match_and_breaks_ties_low() {
        let cb = codebook_from(&[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0], &[3.0, 0.0], &[1.0, 2.0]]);
        assert_eq!(assign(&cb, &[3.0, 0.0]).unwrap(), 3);
        // (1.5, 0) is equidistant from centers 1 and 2: lowest index wins.
        assert_eq!(assign(&cb, &[1.5, 0.0]).unwrap(), 1);
        assert!(assign(&cb, &[1.0]).is_err());
    }

    #[test]
    fn inertia_matches_hand_values() {
        let cb = codebook_from(&[&[0.0, 0.0]]);
        let data = set_from(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(inertia(&cb, &data).unwrap(), 2.0);

        let centers = set_from(&[&[1.0, 2.0], &[5.0, 6.0]]);
        let cb = Codebook::new(2, 2, centers.as_flat().to_vec(), None).unwrap();
        assert_eq!(inertia(&cb, &centers).unwrap(), 0.0);
    }

    #[test]
    fn inertia_matches_double_loop_oracle() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = DescriptorSet::from_rows(
            DescriptorKind::Daisy,
            7,
            (0..70 * 7).map(|_| rng.random::<f32>()).collect(),
        )
        .unwrap();
        let centers = kmeanspp_init(&data, 5, 1).unwrap();
        let cb = Codebook::new(5, 7, centers, None).unwrap();

        let mut expected = 0.0f64;
        for i in 0..data.count() {
            let mut best = f64::INFINITY;
            for c in 0..cb.k() {
                let d: f64 = data
                    .row(i)
                    .iter()
                    .zip(cb.center(c))
                    .map(|(a, b)| ((a - b) as f64).powi(2))
                    .sum();
                best = best.min(d);
            }
            expected += best;
        }
        let got = inertia(&cb, &data).unwrap();
        assert!((got - expected).abs() <= 1e-9 * expected.max(1.0));
    }

    #[test]
    fn kmeanspp_with_n_equal_k_is_a_permutation() {
        let data = set_from(&[&[0.0, 1.0], &[5.0, 5.0], &[-3.0, 2.0], &[9.0, -1.0]]);
        let centers = kmeanspp_init(&data, 4, 42).unwrap();
        let mut rows: Vec<Vec<f32>> = centers.chunks_exact(2).map(|c| c.to_vec()).collect();
        let mut expected: Vec<Vec<f32>> = (0..4).map(|i| data.row(i).to_vec()).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(rows, expected);
    }

    #[test]
    fn kmeanspp_k1_is_a_data_point_and_seeds_reproduce() {
        let data = set_from(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let c = kmeanspp_init(&data, 1, 9).unwrap();
        assert!((0..3).any(|i| data.row(i) == c.as_slice()));
        assert_eq!(kmeanspp_init(&data, 3, 7).unwrap(), kmeanspp_init(&data, 3, 7).unwrap());
        assert!(matches!(
            kmeanspp_init(&data, 4, 0).unwrap_err(),
            Error::InsufficientData { needed: 4, got: 3 }
        ));
    }

    #[test]
    fn minibatch_single_center_full_pass_is_the_mean() {
        // With k=1 and every point presented once from count 0, the
        // 1/count learning rate telescopes into the plain average.
        let data = set_from(&[&[1.0, 0.0], &[2.0, 4.0], &[6.0, 2.0], &[3.0, 6.0]]);
        let mut centers = vec![100.0f32, 100.0];
        let mut counts = vec![0u64];
        let batch: Vec<usize> = (0..4).collect();
        minibatch_update_pass(&mut centers, 2, &mut counts, &data, &batch, &[0, 0, 0, 0]);
        assert!((centers[0] - 3.0).abs() < 1e-6);
        assert!((centers[1] - 3.0).abs() < 1e-6);
        assert_eq!(counts[0], 4);
    }

    #[test]
    fn minibatch_fit_is_deterministic_and_records_meta() {
        let data = gaussian_blobs(&[([0.0, 0.0], 20), ([8.0, 8.0], 20)], 0.4, 3);
        let config = MiniBatchConfig {
            k: 2,
            batch_size: 16,
            max_iterations: 50,
            shift_tolerance: 1e-5,
            seed: 11,
        };
        let a = minibatch_fit(&data, &config).unwrap();
        let b = minibatch_fit(&data, &config).unwrap();
        assert_eq!(a.centers(), b.centers());
        let meta = a.train_meta.as_ref().unwrap();
        assert_eq!(meta.batch_size, 16);
        assert_eq!(meta.seed, 11);
        assert!(meta.iterations >= 1 && meta.iterations <= 50);
        assert_eq!(meta.converged, meta.iterations < 50 || meta.final_shift < 1e-5);
    }

    #[test]
    fn minibatch_rejects_bad_inputs() {
        let data = set_from(&[&[0.0, 0.0], &[1.0, 1.0]]);
        let config = MiniBatchConfig {
            k: 3,
            ..MiniBatchConfig::default()
        };
        assert!(matches!(
            minibatch_fit(&data, &config).unwrap_err(),
            Error::InsufficientData { .. }
        ));

        let nan = DescriptorSet::from_rows(DescriptorKind::Daisy, 1, vec![0.0, f32::NAN]).unwrap();
        let config = MiniBatchConfig {
            k: 1,
            ..MiniBatchConfig::default()
        };
        assert!(matches!(
            minibatch_fit(&nan, &config).unwrap_err(),
            Error::NonFinite(_)
        ));
    }

    #[test]
    fn minibatch_tracks_lloyd_on_three_blobs() {
        // Well-separated blobs: the stochastic fit should land within 10%
        // of the exact baseline, comparing the best of 5 seeds each.
        let data = gaussian_blobs(
            &[([0.0, 0.0], 30), ([10.0, 0.0], 30), ([0.0, 10.0], 30)],
            0.5,
            21,
        );
        let config = MiniBatchConfig {
            k: 3,
            batch_size: 32,
            max_iterations: 150,
            shift_tolerance: 1e-6,
            seed: 0,
        };
        let best = |fit: &dyn Fn(u64) -> f64| (0..5).map(|s| fit(s)).fold(f64::INFINITY, f64::min);
        let mini = best(&|s| {
            let cb = minibatch_fit(&data, &MiniBatchConfig { seed: s, ..config }).unwrap();
            inertia(&cb, &data).unwrap()
        });
        let lloyd = best(&|s| {
            let cb = lloyd_exact(&data, 3, s, 100).unwrap();
            inertia(&cb, &data).unwrap()
        });
        assert!(
            mini <= 1.1 * lloyd,
            "mini-batch inertia {mini} vs Lloyd {lloyd}"
        );
    }

    #[test]
    fn lloyd_recovers_the_two_pair_partition() {
        let data = set_from(&[&[0.0], &[1.0], &[8.0], &[9.0]]);
        for seed in 0..4 {
            let cb = lloyd_exact(&data, 2, seed, 50).unwrap();
            let mut centers: Vec<f32> = cb.centers().to_vec();
            centers.sort_by(f32::total_cmp);
            assert_eq!(centers, [0.5, 8.5]);
            assert_eq!(inertia(&cb, &data).unwrap(), 1.0);
            assert!(cb.train_meta.as_ref().unwrap().converged);
        }
    }

    #[test]
    fn lloyd_on_k_distinct_points_reaches_zero_inertia() {
        let data = set_from(&[&[0.0, 0.0], &[4.0, 4.0], &[-4.0, 2.0]]);
        let cb = lloyd_exact(&data, 3, 13, 20).unwrap();
        assert_eq!(inertia(&cb, &data).unwrap(), 0.0);
    }

    #[test]
    fn lloyd_inertia_is_non_increasing_over_iterations() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let data = DescriptorSet::from_rows(
            DescriptorKind::Daisy,
            3,
            (0..60 * 3).map(|_| rng.random::<f32>()).collect(),
        )
        .unwrap();
        // Same seed with growing iteration caps shares every prefix.
        let mut last = f64::INFINITY;
        for cap in 1..7 {
            let cb = lloyd_exact(&data, 4, 3, cap).unwrap();
            let inertia = inertia(&cb, &data).unwrap();
            assert!(
                inertia <= last + 1e-9,
                "inertia rose from {last} to {inertia} at cap {cap}"
            );
            last = inertia;
        }
    }

    #[test]
    fn fits_leave_no_duplicate_centers() {
        // More centers than distinct values forces collisions that the
        // post-fit pass must resolve.
        let rows: Vec<f32> = (0..40).map(|i| (i % 4) as f32).collect();
        let data = DescriptorSet::from_rows(DescriptorKind::Daisy, 1, rows).unwrap();
        let config = MiniBatchConfig {
            k: 4,
            batch_size: 8,
            max_iterations: 30,
            shift_tolerance: 0.0,
            seed: 2,
        };
        let cb = minibatch_fit(&data, &config).unwrap();
        for a in 0..cb.k() {
            for b in a + 1..cb.k() {
                assert_ne!(cb.center(a), cb.center(b), "centers {a} and {b} collide");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn assign_is_consistent_with_per_point_inertia(
            seed in any::<u64>(), n in 5usize..40, k in 1usize..5
        ) {
            use rand::Rng;
            prop_assume!(n >= k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = DescriptorSet::from_rows(
                DescriptorKind::Daisy,
                4,
                (0..n * 4).map(|_| rng.random::<f32>()).collect(),
            ).unwrap();
            let cb = Codebook::new(k, 4, kmeanspp_init(&data, k, seed).unwrap(), None).unwrap();
            // No other center is strictly closer than the assigned one.
            for i in 0..n {
                let chosen = assign(&cb, data.row(i)).unwrap();
                let chosen_d = sq_dist_f64(data.row(i), cb.center(chosen));
                for c in 0..k {
                    prop_assert!(sq_dist_f64(data.row(i), cb.center(c)) >= chosen_d);
                }
            }
        }

        #[test]
        fn minibatch_centers_stay_finite(seed in any::<u64>()) {
            let data = gaussian_blobs(&[([0.0, 0.0], 12), ([5.0, 5.0], 12)], 0.8, seed);
            let config = MiniBatchConfig {
                k: 3,
                batch_size: 7,
                max_iterations: 25,
                shift_tolerance: 0.0,
                seed,
            };
            let cb = minibatch_fit(&data, &config).unwrap();
            prop_assert!(cb.centers().iter().all(|v| v.is_finite()));
        }
    }
}
