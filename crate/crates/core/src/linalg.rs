//! Small dense linear-algebra kernels: a cyclic Jacobi eigensolver for
//! symmetric matrices and power iteration for the top eigenvalue of a PSD
//! operator. Problem sizes here are at most a few hundred, so neither needs
//! to be clever.

use ndarray::{Array1, Array2, ArrayView1};

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi
/// rotations. Only the upper triangle is trusted; the matrix is symmetrised
/// on entry.
pub fn symmetric_eigenvalues(matrix: &Array2<f64>) -> Vec<f64> {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "eigensolve needs a square matrix");
    let mut a = matrix.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = s;
            a[[j, i]] = s;
        }
    }
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum();
        if off.sqrt() <= 1e-15 * scale * n as f64 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cos = 1.0 / (t * t + 1.0).sqrt();
                let sin = t * cos;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = cos * akp - sin * akq;
                    a[[k, q]] = sin * akp + cos * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = cos * apk - sin * aqk;
                    a[[q, k]] = sin * apk + cos * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    eig
}

/// Largest eigenvalue of a symmetric positive semidefinite operator of the
/// given dimension, by power iteration. Stops once the eigen-residual
/// `‖Av − λv‖` falls below `tol · λ`, which bounds the eigenvalue error by the
/// same relative amount.
pub fn power_iteration<F>(dim: usize, apply: F, tol: f64, max_iter: usize) -> f64
where
    F: Fn(ArrayView1<f64>) -> Array1<f64>,
{
    if dim == 0 {
        return 0.0;
    }
    // Irregular deterministic start so it is not orthogonal to structured
    // eigenvectors such as the all-ones vector or coordinate axes.
    let mut v = Array1::from_shape_fn(dim, |j| 1.0 + 0.5 * ((j as f64 + 1.0) * 0.754_877_666_2).fract());
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = apply(v.view());
        lambda = v.dot(&w);
        let w_norm = w.dot(&w).sqrt();
        if w_norm == 0.0 {
            return 0.0;
        }
        let residual = (&w - &(&v * lambda)).mapv(|x| x * x).sum().sqrt();
        if residual <= tol * lambda.abs() {
            return lambda.max(0.0);
        }
        v = w / w_norm;
    }
    lambda.max(0.0)
}

/// `λ_max(AᵀA)` by power iteration on the Gram operator.
pub fn lambda_max_gram(a: &Array2<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    power_iteration(a.ncols(), |v| a.t().dot(&a.dot(&v)), 1e-10, 100_000)
}

pub fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}
