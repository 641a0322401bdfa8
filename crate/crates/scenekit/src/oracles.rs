//! Brute-force reference implementations for the test suites.
//!
//! Everything here trades speed for obviousness: plain loops, no caching,
//! no algebraic shortcuts. Test targets enable this module through the
//! `oracles` feature and compare the production paths against it.

use crate::descriptor::DescriptorSet;
use crate::error::Result;
use crate::svm::{kernel_eval, KernelSpec};

/// Index of the nearest center by an exhaustive scan; squared distances are
/// accumulated in f64 and ties resolve to the lowest index, mirroring the
/// assignment contract.
pub fn linear_scan_nearest(centers: &[f32], dim: usize, x: &[f32]) -> usize {
    assert_eq!(x.len(), dim, "query dimension mismatch");
    assert!(!centers.is_empty() && centers.len() % dim == 0);
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.chunks_exact(dim).enumerate() {
        let mut d = 0.0f64;
        for (a, b) in x.iter().zip(center) {
            let diff = (*a as f64) - (*b as f64);
            d += diff * diff;
        }
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Visual-word counts by scanning every (descriptor, center) pair.
pub fn brute_histogram(centers: &[f32], dim: usize, k: usize, descriptors: &DescriptorSet) -> Vec<f32> {
    assert_eq!(centers.len(), k * dim);
    let mut counts = vec![0.0f32; k];
    for row in descriptors.rows() {
        counts[linear_scan_nearest(centers, dim, row)] += 1.0;
    }
    counts
}

/// An exact solution of a tiny SVM dual problem.
#[derive(Debug, Clone)]
pub struct TinyQpSolution {
    pub alphas: Vec<f64>,
    /// The dual objective `sum(alpha) - 1/2 alpha' Q alpha`.
    pub objective: f64,
}

/// Solves `max sum(alpha) - 1/2 alpha' Q alpha` subject to `0 <= alpha <= C`
/// and `sum(alpha_i y_i) = 0` by enumerating every active set.
///
/// Each variable is pinned at 0, pinned at C, or free; for each of the `3^n`
/// assignments the free variables (plus the equality multiplier) solve a
/// dense linear system, infeasible or singular candidates are discarded, and
/// the best feasible objective wins. The optimum's own active set is always
/// among the candidates, so the result is exact up to solver arithmetic.
/// Only practical for n up to about 8.
pub fn tiny_qp_svm(
    features: &DescriptorSet,
    labels: &[i8],
    c: f64,
    kernel: &KernelSpec,
) -> Result<Option<TinyQpSolution>> {
    let n = features.count();
    assert!(n > 0 && n <= 8, "enumeration oracle is for tiny instances");
    assert_eq!(labels.len(), n);
    assert!(labels.iter().all(|&y| y == 1 || y == -1));

    // Q_ij = y_i y_j K(x_i, x_j).
    let mut q = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            q[i][j] = labels[i] as f64
                * labels[j] as f64
                * kernel_eval(kernel, features.row(i), features.row(j))?;
        }
    }

    let objective = |alpha: &[f64]| -> f64 {
        let linear: f64 = alpha.iter().sum();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += alpha[i] * alpha[j] * q[i][j];
            }
        }
        linear - 0.5 * quad
    };

    const AT_ZERO: usize = 0;
    const AT_C: usize = 1;
    const FREE: usize = 2;
    let eq_tol = 1e-7 * c.max(1.0);

    let mut best: Option<TinyQpSolution> = None;
    for assignment in 0..3usize.pow(n as u32) {
        let mut code = assignment;
        let states: Vec<usize> = (0..n)
            .map(|_| {
                let s = code % 3;
                code /= 3;
                s
            })
            .collect();
        let free: Vec<usize> = (0..n).filter(|&i| states[i] == FREE).collect();
        let mut alpha: Vec<f64> = states
            .iter()
            .map(|&s| match s {
                AT_C => c,
                AT_ZERO | FREE => 0.0,
                _ => unreachable!(),
            })
            .collect();

        if free.is_empty() {
            let residual: f64 = alpha
                .iter()
                .zip(labels)
                .map(|(a, &y)| a * y as f64)
                .sum();
            if residual.abs() > eq_tol {
                continue;
            }
        } else {
            // Stationarity for each free i:  sum_j Q_ij alpha_j + y_i b = 1,
            // plus the equality constraint, with pinned variables folded into
            // the right-hand side.
            let m = free.len();
            let mut matrix = vec![vec![0.0f64; m + 1]; m + 1];
            let mut rhs = vec![0.0f64; m + 1];
            for (row, &i) in free.iter().enumerate() {
                for (col, &j) in free.iter().enumerate() {
                    matrix[row][col] = q[i][j];
                }
                matrix[row][m] = labels[i] as f64;
                let pinned: f64 = (0..n)
                    .filter(|&j| states[j] == AT_C)
                    .map(|j| q[i][j] * c)
                    .sum();
                rhs[row] = 1.0 - pinned;
            }
            for (col, &j) in free.iter().enumerate() {
                matrix[m][col] = labels[j] as f64;
            }
            rhs[m] = -(0..n)
                .filter(|&j| states[j] == AT_C)
                .map(|j| labels[j] as f64 * c)
                .sum::<f64>();

            let solution = match solve_dense(matrix, rhs) {
                Some(s) => s,
                None => continue,
            };
            let mut feasible = true;
            for (idx, &i) in free.iter().enumerate() {
                let v = solution[idx];
                if !(v.is_finite() && v >= -1e-9 && v <= c + 1e-9) {
                    feasible = false;
                    break;
                }
                alpha[i] = v.clamp(0.0, c);
            }
            if !feasible {
                continue;
            }
            let residual: f64 = alpha
                .iter()
                .zip(labels)
                .map(|(a, &y)| a * y as f64)
                .sum();
            if residual.abs() > eq_tol {
                continue;
            }
        }

        let obj = objective(&alpha);
        if best.as_ref().is_none_or(|b| obj > b.objective) {
            best = Some(TinyQpSolution {
                alphas: alpha,
                objective: obj,
            });
        }
    }
    Ok(best)
}

/// Gaussian elimination with partial pivoting; `None` on a singular system.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0f64; n];
    for row in (0..n).rev() {
        let mut sum = b[row];
        for col in row + 1..n {
            sum -= a[row][col] * x[col];
        }
        x[row] = sum / a[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::DescriptorKind;

    #[test]
    fn linear_scan_breaks_ties_toward_lowest_index() {
        // Centers 1 and 2 are identical; the query is equidistant from both.
        let centers = [0.0, 5.0, 5.0];
        assert_eq!(linear_scan_nearest(&centers, 1, &[5.0]), 1);
        assert_eq!(linear_scan_nearest(&centers, 1, &[0.4]), 0);
    }

    #[test]
    fn tiny_qp_solves_the_two_point_margin_exactly() {
        // Points 0 and 2 on a line: the maximum margin is w = 1, b = -1, so
        // alpha = (0.5, 0.5) and the dual objective is 1 - w^2/2 = 0.5.
        let features =
            DescriptorSet::from_rows(DescriptorKind::Hybrid, 1, vec![0.0, 2.0]).unwrap();
        let solution = tiny_qp_svm(&features, &[-1, 1], 10.0, &KernelSpec::Linear)
            .unwrap()
            .expect("feasible problem");
        assert!((solution.alphas[0] - 0.5).abs() < 1e-9);
        assert!((solution.alphas[1] - 0.5).abs() < 1e-9);
        assert!((solution.objective - 0.5).abs() < 1e-9);
    }

    #[test]
    fn tiny_qp_respects_box_and_equality_constraints() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for labels in [[1i8, 1, -1, -1, 1, -1], [1, -1, 1, -1, -1, -1]] {
            let data: Vec<f32> = (0..6 * 2).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
            let features = DescriptorSet::from_rows(DescriptorKind::Hybrid, 2, data).unwrap();
            let c = 1.5;
            let solution = tiny_qp_svm(&features, &labels, c, &KernelSpec::Rbf { gamma: 0.7 })
                .unwrap()
                .expect("both classes present");
            let mut signed = 0.0;
            for (alpha, &y) in solution.alphas.iter().zip(&labels) {
                assert!(*alpha >= 0.0 && *alpha <= c);
                signed += alpha * y as f64;
            }
            assert!(signed.abs() < 1e-7);
        }
    }
}
