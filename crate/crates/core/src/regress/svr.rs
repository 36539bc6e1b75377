//! Epsilon-insensitive support vector regression.
//!
//! The dual over `beta = [alpha; alpha*]` (length `2n`) is
//!
//! ```text
//! min  1/2 beta' Q beta + p' beta
//! s.t. s' beta = 0,  0 <= beta_t <= C
//! ```
//!
//! with `s = [+1; -1]`, `Q_uv = s_u s_v K(x_u, x_v)` and
//! `p = [eps - y; eps + y]`. It is solved by sequential minimal optimization
//! using second-order working-set selection, without shrinking.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{TargetScaler, TrainFlags, N_FEATURES};
use crate::math::exp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Gaussian { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64; N_FEATURES], b: &[f64; N_FEATURES]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Gaussian { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                exp(-gamma * d2)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrSettings {
    /// Tube half-width on the standardized target.
    pub epsilon: f64,
    pub c: f64,
    /// Maximal KKT violation at termination.
    pub tol: f64,
    /// Iteration cap, in passes over the `2n` dual variables.
    pub max_passes: usize,
}

impl Default for SvrSettings {
    fn default() -> Self {
        SvrSettings { epsilon: 0.1, c: 1.0, tol: 1e-3, max_passes: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub kernel: Kernel,
    pub target: TargetScaler,
    /// Normalized inputs with a nonzero dual coefficient.
    pub support: Vec<[f64; N_FEATURES]>,
    /// `alpha_i - alpha*_i` for each support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
}

impl SvrModel {
    pub fn decision(&self, z: &[f64; N_FEATURES]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(sv, c)| c * self.kernel.eval(sv, z))
            .sum::<f64>()
            + self.bias
    }

    pub fn predict(&self, z: &[f64; N_FEATURES]) -> f64 {
        self.target.inverse(self.decision(z))
    }
}

const TAU: f64 = 1e-12;

struct Solution {
    beta: Vec<f64>,
    bias: f64,
    converged: bool,
}

fn solve(kmat: &[f64], n: usize, t: &[f64], s: &SvrSettings) -> Solution {
    let l = 2 * n;
    let sign = |u: usize| if u < n { 1.0 } else { -1.0 };
    let idx = |u: usize| if u < n { u } else { u - n };
    let q = |u: usize, v: usize| sign(u) * sign(v) * kmat[idx(u) * n + idx(v)];
    let qd: Vec<f64> = (0..l).map(|u| kmat[idx(u) * n + idx(u)]).collect();
    let c = s.c;

    let mut beta = vec![0.0; l];
    let mut grad: Vec<f64> = (0..l)
        .map(|u| if u < n { s.epsilon - t[u] } else { s.epsilon + t[u - n] })
        .collect();
    let max_iter = s.max_passes.saturating_mul(l).max(1);
    let mut converged = false;

    for _ in 0..max_iter {
        // working set: i maximizes -s_i G_i over the "up" set
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for u in 0..l {
            if sign(u) > 0.0 {
                if beta[u] < c && -grad[u] >= gmax {
                    gmax = -grad[u];
                    i = u;
                }
            } else if beta[u] > 0.0 && grad[u] >= gmax {
                gmax = grad[u];
                i = u;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for v in 0..l {
            let (viol, grad_diff, quad) = if sign(v) > 0.0 {
                if beta[v] <= 0.0 {
                    continue;
                }
                let gd = gmax + grad[v];
                let quad = if i == usize::MAX { 0.0 } else { qd[i] + qd[v] - 2.0 * sign(i) * q(i, v) };
                (grad[v], gd, quad)
            } else {
                if beta[v] >= c {
                    continue;
                }
                let gd = gmax - grad[v];
                let quad = if i == usize::MAX { 0.0 } else { qd[i] + qd[v] + 2.0 * sign(i) * q(i, v) };
                (-grad[v], gd, quad)
            };
            if viol >= gmax2 {
                gmax2 = viol;
            }
            if grad_diff > 0.0 {
                let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                if obj <= best {
                    best = obj;
                    j = v;
                }
            }
        }
        if gmax + gmax2 < s.tol || i == usize::MAX || j == usize::MAX {
            converged = true;
            break;
        }

        let (old_i, old_j) = (beta[i], beta[j]);
        if sign(i) != sign(j) {
            let mut quad = qd[i] + qd[j] + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = beta[i] - beta[j];
            beta[i] += delta;
            beta[j] += delta;
            if diff > 0.0 {
                if beta[j] < 0.0 {
                    beta[j] = 0.0;
                    beta[i] = diff;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = -diff;
            }
            if diff > 0.0 {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = c - diff;
                }
            } else if beta[j] > c {
                beta[j] = c;
                beta[i] = c + diff;
            }
        } else {
            let mut quad = qd[i] + qd[j] - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = beta[i] + beta[j];
            beta[i] -= delta;
            beta[j] += delta;
            if sum > c {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = sum - c;
                }
            } else if beta[j] < 0.0 {
                beta[j] = 0.0;
                beta[i] = sum;
            }
            if sum > c {
                if beta[j] > c {
                    beta[j] = c;
                    beta[i] = sum - c;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = sum;
            }
        }
        let (di, dj) = (beta[i] - old_i, beta[j] - old_j);
        for u in 0..l {
            grad[u] += q(i, u) * di + q(j, u) * dj;
        }
    }

    // bias from free variables, else the midpoint of the feasible interval
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for u in 0..l {
        let yg = sign(u) * grad[u];
        if beta[u] >= c {
            if sign(u) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if beta[u] <= 0.0 {
            if sign(u) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 { free_sum / free as f64 } else { 0.5 * (ub + lb) };
    Solution { beta, bias: -rho, converged }
}

pub(super) fn fit(
    z: &[[f64; N_FEATURES]],
    y: &[f64],
    kernel: Kernel,
    settings: &SvrSettings,
    flags: &mut TrainFlags,
) -> SvrModel {
    let n = z.len();
    let target = TargetScaler::fit(y);
    let t: Vec<f64> = y.iter().map(|v| target.forward(*v)).collect();
    let mut kmat = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let k = kernel.eval(&z[a], &z[b]);
            kmat[a * n + b] = k;
            kmat[b * n + a] = k;
        }
    }
    let sol = solve(&kmat, n, &t, settings);
    if !sol.converged {
        flags.non_converged = true;
    }
    let mut support = Vec::new();
    let mut coef = Vec::new();
    for i in 0..n {
        let cf = sol.beta[i] - sol.beta[i + n];
        if cf != 0.0 {
            support.push(z[i]);
            coef.push(cf);
        }
    }
    let bias = if sol.bias.is_finite() { sol.bias } else { 0.0 };
    SvrModel { kernel, target, support, coef, bias }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use rand::Rng;

    fn inputs(n: usize, seed: u64) -> Vec<[f64; N_FEATURES]> {
        let mut rng = StreamKey::new(seed).rng();
        (0..n).map(|_| core::array::from_fn(|_| rng.random_range(-1.5..1.5))).collect()
    }

    /// Dual objective and feasibility checked independently of the solver.
    #[test]
    fn kkt_conditions_hold_at_solution() {
        let z = inputs(40, 2);
        let y: Vec<f64> = z.iter().map(|r| 3.0 * r[0] - r[1] + 0.5 * libm::sin(3.0 * r[2])).collect();
        let mut flags = TrainFlags::default();
        let s = SvrSettings::default();
        let m = fit(&z, &y, Kernel::Gaussian { gamma: 1.0 / 7.0 }, &s, &mut flags);
        assert!(!flags.non_converged);
        // equality constraint: sum of coefficients is zero
        assert!(m.coef.iter().sum::<f64>().abs() < 1e-9);
        for c in &m.coef {
            assert!(c.abs() <= s.c + 1e-12);
        }
        // points strictly inside the tube carry no weight; points outside it sit at the bound
        for (zi, yi) in z.iter().zip(&y) {
            let r = m.target.forward(*yi) - m.decision(zi);
            let cf = m
                .support
                .iter()
                .position(|sv| sv == zi)
                .map_or(0.0, |k| m.coef[k]);
            if r.abs() < s.epsilon - 2e-3 {
                assert!(cf.abs() < 1e-9, "inside tube but coef {cf}");
            }
            if r > s.epsilon + 2e-3 {
                assert!((cf - s.c).abs() < 1e-9);
            }
            if r < -s.epsilon - 2e-3 {
                assert!((cf + s.c).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn linear_kernel_fits_within_tube() {
        let z = inputs(60, 4);
        let y: Vec<f64> = z.iter().map(|r| 10.0 + 2.0 * r[0] + r[5]).collect();
        let mut flags = TrainFlags::default();
        let m = fit(&z, &y, Kernel::Linear, &SvrSettings::default(), &mut flags);
        for (zi, yi) in z.iter().zip(&y) {
            let r = m.target.forward(*yi) - m.decision(zi);
            assert!(r.abs() <= 0.1 + 2e-3, "{r}");
        }
    }

    #[test]
    fn large_c_duplicate_point_is_harmless() {
        let z = inputs(30, 6);
        let y: Vec<f64> = z.iter().map(|r| 50.0 + 5.0 * r[0] * r[1]).collect();
        let s = SvrSettings { c: 1e3, tol: 1e-6, ..SvrSettings::default() };
        let mut flags = TrainFlags::default();
        let a = fit(&z, &y, Kernel::Gaussian { gamma: 1.0 / 7.0 }, &s, &mut flags);
        let mut z2 = z.clone();
        let mut y2 = y.clone();
        z2.push(z[0]);
        y2.push(y[0]);
        let b = fit(&z2, &y2, Kernel::Gaussian { gamma: 1.0 / 7.0 }, &s, &mut flags);
        // both fits reproduce the training targets to within the tube
        for (zi, yi) in z.iter().zip(&y) {
            assert!((a.predict(zi) - yi).abs() <= 0.1 * a.target.scale * 1.05);
            assert!((b.predict(zi) - yi).abs() <= 0.1 * b.target.scale * 1.05);
        }
    }
}
