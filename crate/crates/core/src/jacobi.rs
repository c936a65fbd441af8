//! Cyclic Jacobi eigenvalue sweep for small dense symmetric matrices.

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric row-major `n x n` matrix, sorted descending.
/// Sweeps until the off-diagonal Frobenius norm drops below
/// `tol · max(1, ‖A‖_F)`; an absolute floor stalls on roundoff for large `n`.
/// Each eigenvalue is then within that norm of the truth (Weyl).
pub fn symmetric_eigenvalues(matrix: &[f64], n: usize, tol: f64) -> Result<Vec<f64>> {
    assert_eq!(matrix.len(), n * n, "matrix is not n x n");
    let mut a = matrix.to_vec();
    let scale = matrix.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    let mut off = off_norm(&a, n);
    let mut sweeps = 0;
    while off >= tol * scale {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence { off_norm: off });
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut a, n, p, q);
            }
        }
        off = off_norm(&a, n);
        sweeps += 1;
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    Ok(eig)
}

fn off_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Zeroes `a[p][q]` with a Givens rotation applied on both sides.
fn rotate(a: &mut [f64], n: usize, p: usize, q: usize) {
    let apq = a[p * n + q];
    if apq == 0.0 {
        return;
    }
    let app = a[p * n + p];
    let aqq = a[q * n + q];
    // Below the resolution of both diagonal entries: rotating would only
    // shuffle roundoff between equal eigenvalues.
    let g = 100.0 * apq.abs();
    if app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
        a[p * n + q] = 0.0;
        a[q * n + p] = 0.0;
        return;
    }
    let theta = (aqq - app) / (2.0 * apq);
    // Smaller root of t^2 + 2 t theta - 1 = 0 keeps the rotation below 45 degrees.
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a[k * n + p];
        let akq = a[k * n + q];
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        a[k * n + p] = new_kp;
        a[p * n + k] = new_kp;
        a[k * n + q] = new_kq;
        a[q * n + k] = new_kq;
    }
    a[p * n + p] = app - t * apq;
    a[q * n + q] = aqq + t * apq;
    a[p * n + q] = 0.0;
    a[q * n + p] = 0.0;
}
