//! Small dense solvers for the linear models. Matrices are row-major
//! `n x p` with `p` at most eight, so nothing here needs to be clever.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{abs, sqrt};

/// Least squares `min |A x - b|` by Householder QR.
///
/// Returns `None` when a diagonal entry of `R` is negligible relative to the
/// norm of its column, i.e. the design is numerically rank deficient.
pub fn lstsq_qr(a: &[f64], n: usize, p: usize, b: &[f64]) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * p);
    debug_assert_eq!(b.len(), n);
    if n < p {
        return None;
    }
    let mut r = a.to_vec();
    let mut qtb = b.to_vec();
    let col_norms: Vec<f64> = (0..p)
        .map(|j| sqrt((0..n).map(|i| r[i * p + j] * r[i * p + j]).sum()))
        .collect();
    for k in 0..p {
        let norm = sqrt((k..n).map(|i| r[i * p + k] * r[i * p + k]).sum());
        if norm <= 1e-10 * col_norms[k].max(f64::MIN_POSITIVE) || col_norms[k] == 0.0 {
            return None;
        }
        let alpha = if r[k * p + k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..n).map(|i| r[i * p + k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..p {
            let dot: f64 = (k..n).map(|i| v[i - k] * r[i * p + j]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..n {
                r[i * p + j] -= f * v[i - k];
            }
        }
        let dot: f64 = (k..n).map(|i| v[i - k] * qtb[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in k..n {
            qtb[i] -= f * v[i - k];
        }
    }
    let mut x = vec![0.0; p];
    for k in (0..p).rev() {
        let s: f64 = ((k + 1)..p).map(|j| r[k * p + j] * x[j]).sum();
        x[k] = (qtb[k] - s) / r[k * p + k];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Solve `M x = rhs` for symmetric positive definite `M` (p x p) by Cholesky.
pub fn solve_spd(m: &[f64], p: usize, rhs: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * p + k] * l[j * p + k]).sum();
            if i == j {
                let d = m[i * p + i] - s;
                if d <= 0.0 {
                    return None;
                }
                l[i * p + i] = sqrt(d);
            } else {
                l[i * p + j] = (m[i * p + j] - s) / l[j * p + j];
            }
        }
    }
    let mut y = vec![0.0; p];
    for i in 0..p {
        let s: f64 = (0..i).map(|k| l[i * p + k] * y[k]).sum();
        y[i] = (rhs[i] - s) / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = ((i + 1)..p).map(|k| l[k * p + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * p + i];
    }
    Some(x)
}

/// Ridge solution of `min |A x - b|^2 + lambda |x_{1..}|^2`, leaving column 0
/// (the intercept) unpenalized.
pub fn ridge(a: &[f64], n: usize, p: usize, b: &[f64], lambda: f64) -> Option<Vec<f64>> {
    let mut m = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    for i in 0..n {
        let row = &a[i * p..(i + 1) * p];
        for j in 0..p {
            rhs[j] += row[j] * b[i];
            for k in 0..p {
                m[j * p + k] += row[j] * row[k];
            }
        }
    }
    let trace: f64 = (0..p).map(|j| m[j * p + j]).sum::<f64>() / p as f64;
    let lam = lambda * trace.max(1.0);
    for j in 1..p {
        m[j * p + j] += lam;
    }
    // a vanishing intercept column would still be singular
    if abs(m[0]) == 0.0 {
        m[0] = lam;
    }
    solve_spd(&m, p, &rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_recovers_exact_solution() {
        // rows: [1, x, x^2]
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let a: Vec<f64> = xs.iter().flat_map(|&x| [1.0, x, x * x]).collect();
        let b: Vec<f64> = xs.iter().map(|&x| 2.0 - 3.0 * x + 0.5 * x * x).collect();
        let sol = lstsq_qr(&a, 5, 3, &b).unwrap();
        for (s, e) in sol.iter().zip([2.0, -3.0, 0.5]) {
            assert!((s - e).abs() < 1e-12);
        }
    }

    #[test]
    fn qr_flags_collinear_columns() {
        let a: Vec<f64> = (0..6).flat_map(|i| [1.0, i as f64, 2.0 * i as f64]).collect();
        let b: Vec<f64> = (0..6).map(|i| i as f64).collect();
        assert!(lstsq_qr(&a, 6, 3, &b).is_none());
        assert!(ridge(&a, 6, 3, &b, 1e-8).is_some());
    }

    #[test]
    fn cholesky_solves() {
        let m = [4.0, 2.0, 2.0, 3.0];
        let x = solve_spd(&m, 2, &[6.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        assert!(solve_spd(&[1.0, 2.0, 2.0, 1.0], 2, &[1.0, 1.0]).is_none());
    }
}
