//! Multi-class kernel SVM: binary machines solved by SMO on the dual,
//! combined one-vs-rest with argmax over decision values.

use std::collections::HashMap;
use std::rc::Rc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::DescriptorSet;
use crate::error::{Error, Result};

/// Kernel selection; `gamma` applies to the RBF kernel only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if let KernelSpec::Rbf { gamma } = self {
            if !(*gamma > 0.0) {
                return Err(Error::Config(format!(
                    "RBF gamma must be positive, got {gamma}"
                )));
            }
        }
        Ok(())
    }

    pub fn kind_str(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Rbf { .. } => "rbf",
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            KernelSpec::Linear => None,
            KernelSpec::Rbf { gamma } => Some(*gamma),
        }
    }
}

/// `x . y` for linear, `exp(-gamma ||x - y||^2)` for RBF.
pub fn kernel_eval(spec: &KernelSpec, x: &[f32], y: &[f32]) -> Result<f64> {
    spec.validate()?;
    if x.len() != y.len() {
        return Err(Error::DimMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(kernel_raw(spec, x, y))
}

#[inline]
fn kernel_raw(spec: &KernelSpec, x: &[f32], y: &[f32]) -> f64 {
    match spec {
        KernelSpec::Linear => dot_f64(x, y),
        KernelSpec::Rbf { gamma } => (-gamma * sq_dist_f64(x, y)).exp(),
    }
}

/// Four-lane f64 dot product; independent accumulators vectorize.
#[inline]
fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let (pa, pb) = (&a[i * 4..i * 4 + 4], &b[i * 4..i * 4 + 4]);
        for l in 0..4 {
            lanes[l] += pa[l] as f64 * pb[l] as f64;
        }
    }
    let mut sum = lanes.iter().sum::<f64>();
    for i in chunks * 4..a.len() {
        sum += a[i] as f64 * b[i] as f64;
    }
    sum
}

#[inline]
fn sq_dist_f64(a: &[f32], b: &[f32]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let (pa, pb) = (&a[i * 4..i * 4 + 4], &b[i * 4..i * 4 + 4]);
        for l in 0..4 {
            let d = pa[l] as f64 - pb[l] as f64;
            lanes[l] += d * d;
        }
    }
    let mut sum = lanes.iter().sum::<f64>();
    for i in chunks * 4..a.len() {
        let d = a[i] as f64 - b[i] as f64;
        sum += d * d;
    }
    sum
}

/// Solver hyperparameters shared by every binary machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    pub kernel: KernelSpec,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    /// Upper bound on SMO pair updates (safety cap).
    pub max_passes: usize,
    /// Kernel row cache budget in bytes.
    pub cache_bytes: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            kernel: KernelSpec::Linear,
            tol: 1e-3,
            max_passes: 100_000,
            cache_bytes: 1 << 30,
        }
    }
}

impl SvmConfig {
    fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.c > 0.0) {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_passes == 0 {
            return Err(Error::Config("max_passes must be at least 1".into()));
        }
        Ok(())
    }
}

/// One trained binary machine.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    /// Support vectors, row-major M x dim.
    pub support_vectors: Vec<f32>,
    /// Signed coefficients `alpha_i * y_i`, one per support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelSpec,
    pub c: f64,
    pub dim: usize,
}

impl BinarySvm {
    pub fn n_support(&self) -> usize {
        self.dual_coefs.len()
    }

    /// `sum_j coef_j K(sv_j, x) + bias`.
    pub fn decision(&self, x: &[f32]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut sum = 0.0;
        for (sv, coef) in self.support_vectors.chunks_exact(self.dim).zip(&self.dual_coefs) {
            sum += coef * kernel_raw(&self.kernel, sv, x);
        }
        Ok(sum + self.bias)
    }
}

/// The dual objective `sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij`
/// of a trained machine (non-support points contribute nothing).
pub fn dual_objective(svm: &BinarySvm) -> f64 {
    let alpha_sum: f64 = svm.dual_coefs.iter().map(|c| c.abs()).sum();
    let mut quad = 0.0;
    let svs: Vec<&[f32]> = svm.support_vectors.chunks_exact(svm.dim).collect();
    for (i, a) in svs.iter().enumerate() {
        for (j, b) in svs.iter().enumerate() {
            quad += svm.dual_coefs[i] * svm.dual_coefs[j] * kernel_raw(&svm.kernel, a, b);
        }
    }
    alpha_sum - 0.5 * quad
}

/// A one-vs-rest multi-class model.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub classes: Vec<String>,
    pub binaries: Vec<BinarySvm>,
    pub feature_dim: usize,
}

/// LRU cache of kernel matrix rows.
struct KernelCache {
    rows: HashMap<usize, (u64, Rc<Vec<f64>>)>,
    stamp: u64,
    capacity: usize,
}

impl KernelCache {
    /// At least two rows (the working pair) regardless of budget.
    fn new(cache_bytes: usize, n: usize) -> Self {
        let capacity = (cache_bytes / (8 * n.max(1))).max(2);
        KernelCache {
            rows: HashMap::new(),
            stamp: 0,
            capacity,
        }
    }

    fn fetch(&mut self, i: usize, compute: impl FnOnce() -> Vec<f64>) -> Rc<Vec<f64>> {
        self.stamp += 1;
        if let Some((stamp, row)) = self.rows.get_mut(&i) {
            *stamp = self.stamp;
            return Rc::clone(row);
        }
        if self.rows.len() >= self.capacity {
            if let Some((&oldest, _)) = self.rows.iter().min_by_key(|(_, (stamp, _))| *stamp) {
                self.rows.remove(&oldest);
            }
        }
        let row = Rc::new(compute());
        self.rows.insert(i, (self.stamp, Rc::clone(&row)));
        row
    }
}

const SV_THRESHOLD: f64 = 1e-8;
const QUAD_FLOOR: f64 = 1e-12;

/// Trains one binary machine by SMO with maximal-violating-pair selection.
///
/// Labels must be +1/-1 with both present. The solver stops when the
/// maximal KKT violation falls below `config.tol` or after
/// `config.max_passes` pair updates.
pub fn smo_train_binary(
    features: &DescriptorSet,
    labels: &[i8],
    config: &SvmConfig,
) -> Result<BinarySvm> {
    config.validate()?;
    let n = features.count();
    if labels.len() != n {
        return Err(Error::DimMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if labels.iter().any(|&l| l != 1 && l != -1) {
        return Err(Error::Config("binary labels must be +1 or -1".into()));
    }
    if !labels.contains(&1) || !labels.contains(&-1) {
        return Err(Error::DegenerateTraining(
            "binary training needs both classes present".into(),
        ));
    }
    if !features.as_flat().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("training features".into()));
    }

    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let c = config.c;
    let kernel = config.kernel;
    let diag: Vec<f64> = (0..n)
        .map(|i| kernel_raw(&kernel, features.row(i), features.row(i)))
        .collect();
    let mut cache = KernelCache::new(config.cache_bytes, n);
    let kernel_row = |i: usize| -> Vec<f64> {
        let xi = features.row(i);
        (0..n).map(|t| kernel_raw(&kernel, xi, features.row(t))).collect()
    };

    let mut alpha = vec![0.0f64; n];
    let mut g = vec![-1.0f64; n];

    for _ in 0..config.max_passes {
        // Maximal-violating pair: i maximizes -y g over I_up, j minimizes
        // it over I_low; the gap is the largest KKT violation.
        let mut m = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        let mut mm = f64::INFINITY;
        let mut j_sel = usize::MAX;
        for t in 0..n {
            let v = -y[t] * g[t];
            let up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            let low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
            if up && v > m {
                m = v;
                i_sel = t;
            }
            if low && v < mm {
                mm = v;
                j_sel = t;
            }
        }
        if i_sel == usize::MAX || j_sel == usize::MAX || m - mm <= config.tol {
            break;
        }
        let (i, j) = (i_sel, j_sel);

        let ki = cache.fetch(i, || kernel_row(i));
        let kj = cache.fetch(j, || kernel_row(j));
        let mut quad = diag[i] + diag[j] - 2.0 * ki[j];
        if quad <= 0.0 {
            quad = QUAD_FLOOR;
        }

        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let delta = (-g[i] - g[j]) / quad;
            let diff = old_ai - old_aj;
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (g[i] - g[j]) / quad;
            let sum = old_ai + old_aj;
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (da_i, da_j) = (alpha[i] - old_ai, alpha[j] - old_aj);
        for t in 0..n {
            g[t] += y[t] * (y[i] * ki[t] * da_i + y[j] * kj[t] * da_j);
        }
    }

    // Bias from the KKT conditions: -y g equals b on free support vectors;
    // with none free, take the midpoint of the bound-set interval.
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    for t in 0..n {
        let yg = y[t] * g[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            free_count += 1;
            free_sum += yg;
        }
    }
    let rho = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        (upper + lower) / 2.0
    };

    let dim = features.dim();
    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for t in 0..n {
        if alpha[t] > SV_THRESHOLD {
            support_vectors.extend_from_slice(features.row(t));
            dual_coefs.push(alpha[t] * y[t]);
        }
    }
    Ok(BinarySvm {
        support_vectors,
        dual_coefs,
        bias: -rho,
        kernel,
        c,
        dim,
    })
}

/// Trains one binary machine per class (that class +1, the rest -1).
pub fn ovr_train(
    features: &DescriptorSet,
    labels: &[usize],
    classes: &[String],
    config: &SvmConfig,
) -> Result<SvmModel> {
    if classes.len() < 2 {
        return Err(Error::DegenerateTraining(
            "one-vs-rest needs at least two classes".into(),
        ));
    }
    if labels.len() != features.count() {
        return Err(Error::DimMismatch {
            expected: features.count(),
            got: labels.len(),
        });
    }
    for (class, name) in classes.iter().enumerate() {
        if !labels.iter().any(|&l| l == class) {
            return Err(Error::DegenerateTraining(format!(
                "class {name:?} has no training samples"
            )));
        }
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
        return Err(Error::Config(format!(
            "label {bad} out of range for {} classes",
            classes.len()
        )));
    }

    // The per-class problems are independent.
    let binaries: Vec<BinarySvm> = (0..classes.len())
        .into_par_iter()
        .map(|class| {
            let binary_labels: Vec<i8> =
                labels.iter().map(|&l| if l == class { 1 } else { -1 }).collect();
            smo_train_binary(features, &binary_labels, config)
        })
        .collect::<Result<_>>()?;

    Ok(SvmModel {
        classes: classes.to_vec(),
        binaries,
        feature_dim: features.dim(),
    })
}

/// Predicted class (argmax of decision values; ties to the lowest index)
/// plus the per-class decision values.
pub fn predict(model: &SvmModel, x: &[f32]) -> Result<(usize, Vec<f64>)> {
    if x.len() != model.feature_dim {
        return Err(Error::DimMismatch {
            expected: model.feature_dim,
            got: x.len(),
        });
    }
    let decisions: Vec<f64> = model
        .binaries
        .iter()
        .map(|b| b.decision(x))
        .collect::<Result<_>>()?;
    let mut best = 0usize;
    for (i, &d) in decisions.iter().enumerate() {
        if d > decisions[best] {
            best = i;
        }
    }
    Ok((best, decisions))
}
