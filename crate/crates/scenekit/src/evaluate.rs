//! Evaluation reports, the K-sweep averaging protocol, and the C/gamma
//! grid search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::DescriptorSet;
use crate::error::{Error, Result};
use crate::svm::{predict, SvmModel};

/// Precision/recall/F1 for one class; 0 where the denominator is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of evaluation samples whose true class this is.
    pub support: usize,
}

/// Experiment parameters echoed into every report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMeta {
    pub seed: u64,
    pub train_fraction: f64,
    pub feature_mode: String,
    pub k: usize,
    pub kernel: String,
    pub c: f64,
    pub gamma: Option<f64>,
}

/// Full evaluation of a model on a labeled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `confusion[true_class][predicted_class]` counts.
    pub confusion: Vec<Vec<usize>>,
    pub classes: Vec<String>,
    pub per_class: Vec<PerClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub meta: EvalMeta,
}

/// Runs the model over an evaluation set and tallies all metrics.
/// Macro averages are unweighted means over classes; weighted averages
/// weight by class support.
pub fn evaluate_model(
    model: &SvmModel,
    features: &DescriptorSet,
    labels: &[usize],
) -> Result<EvalReport> {
    let n = features.count();
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if labels.len() != n {
        return Err(Error::DimMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    let n_classes = model.classes.len();
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Config(format!(
            "label {bad} out of range for {n_classes} classes"
        )));
    }

    let predictions: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|i| predict(model, features.row(i)).map(|(class, _)| class))
        .collect::<Result<_>>()?;

    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&truth, &pred) in labels.iter().zip(&predictions) {
        confusion[truth][pred] += 1;
    }
    Ok(report_from_confusion(confusion, model.classes.clone()))
}

/// Builds the metric set from a finished confusion matrix.
pub fn report_from_confusion(confusion: Vec<Vec<usize>>, classes: Vec<String>) -> EvalReport {
    let n_classes = confusion.len();
    let total: usize = confusion.iter().map(|row| row.iter().sum::<usize>()).sum();
    let trace: usize = (0..n_classes).map(|c| confusion[c][c]).sum();

    let ratio = |num: usize, denom: usize| if denom == 0 { 0.0 } else { num as f64 / denom as f64 };
    let per_class: Vec<PerClassMetrics> = (0..n_classes)
        .map(|c| {
            let tp = confusion[c][c];
            let row_sum: usize = confusion[c].iter().sum();
            let col_sum: usize = confusion.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, col_sum);
            let recall = ratio(tp, row_sum);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            PerClassMetrics {
                precision,
                recall,
                f1,
                support: row_sum,
            }
        })
        .collect();

    let macro_mean = |f: &dyn Fn(&PerClassMetrics) -> f64| {
        per_class.iter().map(|m| f(m)).sum::<f64>() / n_classes as f64
    };
    let weighted_mean = |f: &dyn Fn(&PerClassMetrics) -> f64| {
        if total == 0 {
            0.0
        } else {
            per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64
        }
    };

    EvalReport {
        accuracy: ratio(trace, total),
        macro_precision: macro_mean(&|m| m.precision),
        macro_recall: macro_mean(&|m| m.recall),
        macro_f1: macro_mean(&|m| m.f1),
        weighted_precision: weighted_mean(&|m| m.precision),
        weighted_recall: weighted_mean(&|m| m.recall),
        weighted_f1: weighted_mean(&|m| m.f1),
        confusion,
        classes,
        per_class,
        meta: EvalMeta::default(),
    }
}

/// Confusion matrix as CSV: header row of predicted classes, one row per
/// true class.
pub fn confusion_csv(report: &EvalReport) -> String {
    let mut out = String::from("true\\predicted");
    for class in &report.classes {
        out.push(',');
        out.push_str(class);
    }
    out.push('\n');
    for (class, row) in report.classes.iter().zip(&report.confusion) {
        out.push_str(class);
        for count in row {
            out.push_str(&format!(",{count}"));
        }
        out.push('\n');
    }
    out
}

/// Runs `runner(k, seed)` for every K and `repeats` distinct seeds, and
/// averages the returned accuracies. Results keep the input K order.
pub fn k_sweep(
    ks: &[usize],
    repeats: usize,
    base_seed: u64,
    mut runner: impl FnMut(usize, u64) -> Result<f64>,
) -> Result<Vec<(usize, f64)>> {
    if ks.is_empty() {
        return Err(Error::Config("k_sweep needs at least one K value".into()));
    }
    if repeats == 0 {
        return Err(Error::Config("k_sweep needs at least one repeat".into()));
    }
    let mut results = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut sum = 0.0;
        for r in 0..repeats {
            sum += runner(k, base_seed + r as u64)?;
        }
        results.push((k, sum / repeats as f64));
    }
    Ok(results)
}

/// Search ranges in log10 for C and gamma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub log_c: (f64, f64),
    pub log_gamma: (f64, f64),
    pub step: f64,
    /// After the coarse pass, evaluate a 5x5 half-step grid around the best
    /// point (clamped to the coarse ranges).
    pub refine: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            log_c: (-3.0, 3.0),
            log_gamma: (-3.0, 2.0),
            step: 0.5,
            refine: true,
        }
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub log_c: f64,
    pub log_gamma: f64,
    pub accuracy: f64,
}

/// The full response surface plus its argmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub grid: Vec<GridPoint>,
    pub best: GridPoint,
}

/// Inclusive axis `lo, lo+step, ..., hi`.
pub fn grid_axis(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("grid step must be positive, got {step}")));
    }
    if hi < lo {
        return Err(Error::Config(format!("empty grid range [{lo}, {hi}]")));
    }
    let mut axis = Vec::new();
    let mut i = 0usize;
    loop {
        let v = lo + step * i as f64;
        if v > hi + 1e-9 {
            break;
        }
        axis.push(v);
        i += 1;
    }
    Ok(axis)
}

/// Evaluates `eval(log_c, log_gamma)` over the grid (and the optional
/// refinement pass) and returns the surface with its best point. Ties go to
/// the lexicographically smallest `(log_c, log_gamma)`.
pub fn grid_search(
    spec: &GridSpec,
    mut eval: impl FnMut(f64, f64) -> Result<f64>,
) -> Result<GridSearchResult> {
    let c_axis = grid_axis(spec.log_c.0, spec.log_c.1, spec.step)?;
    let gamma_axis = grid_axis(spec.log_gamma.0, spec.log_gamma.1, spec.step)?;

    let mut grid = Vec::with_capacity(c_axis.len() * gamma_axis.len());
    for &log_c in &c_axis {
        for &log_gamma in &gamma_axis {
            let accuracy = eval(log_c, log_gamma)?;
            grid.push(GridPoint {
                log_c,
                log_gamma,
                accuracy,
            });
        }
    }

    if spec.refine {
        let coarse_best = select_best(&grid);
        let refine_axis = |center: f64, range: (f64, f64)| -> Vec<f64> {
            let mut axis: Vec<f64> = (-2..=2)
                .map(|i| (center + i as f64 * spec.step / 2.0).clamp(range.0, range.1))
                .collect();
            axis.dedup();
            axis
        };
        for log_c in refine_axis(coarse_best.log_c, spec.log_c) {
            for log_gamma in refine_axis(coarse_best.log_gamma, spec.log_gamma) {
                let accuracy = eval(log_c, log_gamma)?;
                grid.push(GridPoint {
                    log_c,
                    log_gamma,
                    accuracy,
                });
            }
        }
    }

    let best = select_best(&grid);
    debug_assert!(grid.iter().all(|p| p.accuracy <= best.accuracy));
    Ok(GridSearchResult { grid, best })
}

/// Highest accuracy; ties resolve to the smallest `(log_c, log_gamma)`.
fn select_best(grid: &[GridPoint]) -> GridPoint {
    let mut best = grid[0];
    for p in &grid[1..] {
        let better = p.accuracy > best.accuracy
            || (p.accuracy == best.accuracy
                && (p.log_c, p.log_gamma) < (best.log_c, best.log_gamma));
        if better {
            best = *p;
        }
    }
    best
}

/// Grid surface as `logC,logGamma,accuracy` CSV rows.
pub fn grid_csv(result: &GridSearchResult) -> String {
    let mut out = String::from("logC,logGamma,accuracy\n");
    for p in &result.grid {
        out.push_str(&format!("{},{},{}\n", p.log_c, p.log_gamma, p.accuracy));
    }
    out
}
