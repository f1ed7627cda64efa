//! Least squares over the unit simplex by a primal active-set method.
//!
//! Problems are handled in Gram form: `min ½ αᵀGα − cᵀα` subject to `1ᵀα = 1`
//! and `α ⪰ 0`, with `G = MᵀM` and `c = Mᵀr`. Sum-to-one is a hard equality in
//! every subproblem; nonnegativity is handled by moving indices between the
//! free set and the set of coordinates pinned at zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Solves the simplex-constrained quadratic program for one right-hand side.
///
/// `tol` is the KKT acceptance threshold on the bound multipliers, relative to
/// the magnitude of the problem data.
pub(crate) fn solve_simplex_qp(gram: &Matrix, c: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = c.len();
    debug_assert_eq!(gram.shape(), (n, n));
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let scale = 1.0
        + c.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        + (0..n).fold(0.0f64, |m, i| m.max(gram.get(i, i).abs()));
    let threshold = tol * scale;

    // Start from the best vertex of the simplex.
    let start = (0..n)
        .min_by(|&a, &b| {
            let fa = 0.5 * gram.get(a, a) - c[a];
            let fb = 0.5 * gram.get(b, b) - c[b];
            fa.total_cmp(&fb)
        })
        .expect("n >= 1");
    let mut alpha = vec![0.0; n];
    alpha[start] = 1.0;
    let mut free = vec![false; n];
    free[start] = true;

    // Free coordinates are visited in an order fixed by the data rather than by
    // their labels, so relabelling the endmembers relabels the result exactly.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        gram.get(a, a).total_cmp(&gram.get(b, b)).then(c[a].total_cmp(&c[b])).then(a.cmp(&b))
    });

    let max_iter = 50 * n + 50;
    for _ in 0..max_iter {
        let idx: Vec<usize> = order.iter().copied().filter(|&i| free[i]).collect();
        let p = equality_qp(gram, c, &idx);

        if p.iter().all(|&v| v >= 0.0) {
            for (&i, &v) in idx.iter().zip(&p) {
                alpha[i] = v;
            }
            let grad = gradient(gram, c, &alpha);
            let level = idx.iter().map(|&i| grad[i]).sum::<f64>() / idx.len() as f64;
            let entering = (0..n)
                .filter(|&i| !free[i])
                .map(|i| (i, grad[i] - level))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match entering {
                Some((i, multiplier)) if multiplier < -threshold => free[i] = true,
                _ => return Ok(alpha),
            }
        } else {
            // Move toward p until the first free coordinate hits zero.
            let mut step = 1.0;
            let mut blocking = idx[0];
            for (&i, &v) in idx.iter().zip(&p) {
                if v < 0.0 {
                    let t = alpha[i] / (alpha[i] - v);
                    if t < step {
                        step = t;
                        blocking = i;
                    }
                }
            }
            for (&i, &v) in idx.iter().zip(&p) {
                alpha[i] += step * (v - alpha[i]);
            }
            for &i in &idx {
                if i == blocking || alpha[i] <= 0.0 {
                    alpha[i] = 0.0;
                    free[i] = false;
                }
            }
        }
    }
    Err(Error::Solver(format!("active-set iteration did not terminate within {max_iter} steps")))
}

fn gradient(gram: &Matrix, c: &[f64], alpha: &[f64]) -> Vec<f64> {
    (0..c.len())
        .map(|i| gram.row(i).iter().zip(alpha).map(|(g, a)| g * a).sum::<f64>() - c[i])
        .collect()
}

/// Minimizes `½ pᵀG_FF p − c_Fᵀp` subject to `1ᵀp = 1` on the index set `idx`
/// through its KKT system.
fn equality_qp(gram: &Matrix, c: &[f64], idx: &[usize]) -> Vec<f64> {
    let m = idx.len();
    if m == 1 {
        return vec![1.0];
    }
    let n = m + 1;
    let mut kkt = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            kkt[a * n + b] = gram.get(i, j);
        }
        kkt[a * n + m] = 1.0;
        kkt[m * n + a] = 1.0;
        rhs[a] = c[i];
    }
    rhs[m] = 1.0;

    if let Some(x) = lu_solve(kkt.clone(), rhs.clone(), n) {
        return x[..m].to_vec();
    }
    // Singular KKT matrix: minimal-norm least-squares solution.
    let a = DMatrix::from_row_slice(n, n, &kkt);
    let b = DVector::from_vec(rhs);
    let svd = a.svd(true, true);
    let eps = 1e-12 * svd.singular_values.max();
    let x = svd.solve(&b, eps).expect("U and Vᵀ were requested");
    x.as_slice()[..m].to_vec()
}

/// Gaussian elimination with partial pivoting. Returns `None` when a pivot is
/// negligible relative to the matrix scale.
fn lu_solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tiny = 1e-13 * scale.max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))?;
        if a[pivot * n + col].abs() <= tiny {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * n + row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_small_system() {
        let x = lu_solve(vec![2.0, 1.0, 1.0, 3.0], vec![3.0, 5.0], 2).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-15 && (x[1] - 1.4).abs() < 1e-15);
        assert!(lu_solve(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 1.0], 2).is_none());
    }

    #[test]
    fn duplicate_columns_do_not_break_the_solver() {
        // G singular: two identical endmembers.
        let m = Matrix::from_row_major(3, 3, vec![1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.5, 0.5, 0.0]).unwrap();
        let r = [0.6, 0.4, 0.3];
        let g = m.gram();
        let c = m.transpose().mul_vec(&r).unwrap();
        let a = solve_simplex_qp(&g, &c, 1e-12).unwrap();
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(a.iter().all(|&v| v >= 0.0));
        // Mass on the duplicated pair is what matters.
        assert!((a[0] + a[1] - 0.6).abs() < 1e-9, "{a:?}");
    }
}
