use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::linalg::{lstsq_qr, ridge};
use super::{Normalizer, TrainFlags, N_FEATURES};
use crate::math::abs;
use crate::stats;

/// `y = bias + weights . z` on normalized inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub bias: f64,
    pub weights: [f64; N_FEATURES],
}

impl LinearModel {
    pub fn predict(&self, z: &[f64; N_FEATURES]) -> f64 {
        self.bias + self.weights.iter().zip(z).map(|(w, v)| w * v).sum::<f64>()
    }

    /// Intercept and slopes in the original feature units.
    pub fn raw_coefficients(&self, norm: &Normalizer) -> (f64, [f64; N_FEATURES]) {
        let mut bias = self.bias;
        let mut w = [0.0; N_FEATURES];
        for j in 0..N_FEATURES {
            if norm.is_constant(j) {
                continue;
            }
            w[j] = self.weights[j] / norm.std[j];
            bias -= w[j] * norm.mean[j];
        }
        (bias, w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustSettings {
    /// Bisquare tuning constant, in units of the robust residual scale.
    pub tuning: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RobustSettings {
    fn default() -> Self {
        RobustSettings { tuning: 4.685, tol: 1e-8, max_iter: 50 }
    }
}

const RIDGE_LAMBDA: f64 = 1e-8;

struct Design {
    /// Row-major, intercept first.
    a: Vec<f64>,
    n: usize,
    p: usize,
    active: Vec<usize>,
}

fn design(z: &[[f64; N_FEATURES]], norm: &Normalizer) -> Design {
    let active: Vec<usize> = (0..N_FEATURES).filter(|&j| !norm.is_constant(j)).collect();
    let p = active.len() + 1;
    let mut a = Vec::with_capacity(z.len() * p);
    for row in z {
        a.push(1.0);
        a.extend(active.iter().map(|&j| row[j]));
    }
    Design { a, n: z.len(), p, active }
}

fn weighted_solve(d: &Design, y: &[f64], w: Option<&[f64]>, flags: &mut TrainFlags) -> Vec<f64> {
    let (a, b) = match w {
        None => (d.a.clone(), y.to_vec()),
        Some(w) => {
            let mut a = d.a.clone();
            let mut b = y.to_vec();
            for i in 0..d.n {
                let s = crate::math::sqrt(w[i]);
                for v in &mut a[i * d.p..(i + 1) * d.p] {
                    *v *= s;
                }
                b[i] *= s;
            }
            (a, b)
        }
    };
    lstsq_qr(&a, d.n, d.p, &b).unwrap_or_else(|| {
        flags.ridge_fallback = true;
        ridge(&a, d.n, d.p, &b, RIDGE_LAMBDA).unwrap_or_else(|| {
            // every weight zero: fall back to the plain mean
            let mut beta = alloc::vec![0.0; d.p];
            beta[0] = stats::mean(y);
            beta
        })
    })
}

fn to_model(beta: &[f64], active: &[usize]) -> LinearModel {
    let mut weights = [0.0; N_FEATURES];
    for (k, &j) in active.iter().enumerate() {
        weights[j] = beta[k + 1];
    }
    LinearModel { bias: beta[0], weights }
}

fn predict_rows(d: &Design, beta: &[f64]) -> Vec<f64> {
    (0..d.n)
        .map(|i| d.a[i * d.p..(i + 1) * d.p].iter().zip(beta).map(|(a, b)| a * b).sum())
        .collect()
}

pub(super) fn fit_ols(
    z: &[[f64; N_FEATURES]],
    y: &[f64],
    norm: &Normalizer,
    flags: &mut TrainFlags,
) -> LinearModel {
    let d = design(z, norm);
    let beta = weighted_solve(&d, y, None, flags);
    to_model(&beta, &d.active)
}

/// Iteratively reweighted least squares with Tukey's bisquare weights,
/// starting from the ordinary least-squares fit. The residual scale is the
/// normalized median absolute deviation.
pub(super) fn fit_bisquare(
    z: &[[f64; N_FEATURES]],
    y: &[f64],
    norm: &Normalizer,
    settings: &RobustSettings,
    flags: &mut TrainFlags,
) -> LinearModel {
    let d = design(z, norm);
    let mut beta = weighted_solve(&d, y, None, flags);
    let y_level = stats::mean(&y.iter().map(|v| abs(*v)).collect::<Vec<_>>()).max(1e-300);
    let mut converged = false;
    for _ in 0..settings.max_iter {
        let fitted = predict_rows(&d, &beta);
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let med = stats::median_lower(&resid).unwrap_or(0.0);
        let mad_sorted = stats::sorted(&resid.iter().map(|r| abs(r - med)).collect::<Vec<_>>());
        let mad = stats::percentile_sorted(&mad_sorted, 50.0).unwrap_or(0.0);
        let scale = mad / 0.6745;
        if scale <= 1e-9 * y_level {
            // the majority of points is already fitted exactly
            converged = true;
            break;
        }
        let cutoff = settings.tuning * scale;
        let w: Vec<f64> = resid
            .iter()
            .map(|r| {
                let u = r / cutoff;
                if abs(u) < 1.0 {
                    let t = 1.0 - u * u;
                    t * t
                } else {
                    0.0
                }
            })
            .collect();
        let next = weighted_solve(&d, y, Some(&w), flags);
        let change = next.iter().zip(&beta).map(|(a, b)| abs(a - b)).fold(0.0, f64::max);
        beta = next;
        if change < settings.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        flags.non_converged = true;
    }
    to_model(&beta, &d.active)
}
