//! Percentage residual of a room's predictive model, modelled as a Gaussian
//! kernel density over out-of-fold residuals.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::math::{powf, std_normal_cdf, std_normal_pdf};
use crate::stats;
use crate::{Error, Result};

pub const MIN_RESIDUALS: usize = 10;
pub const MIN_BANDWIDTH: f64 = 1e-4;
const MAX_REDRAWS: usize = 100;

/// `(predicted - actual) / actual` element-wise.
pub fn percent_residuals(pred: &[f64], actual: &[f64]) -> Result<Vec<f64>> {
    if pred.len() != actual.len() {
        return Err(Error::LengthMismatch(pred.len(), actual.len()));
    }
    pred.iter()
        .zip(actual)
        .enumerate()
        .map(|(index, (&p, &y))| {
            if y > 0.0 {
                Ok((p - y) / y)
            } else {
                Err(Error::ZeroActual { index, value: y })
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualModel {
    pub sample: Vec<f64>,
    pub bandwidth: f64,
}

/// Silverman's rule of thumb, `0.9 min(sd, IQR / 1.34) n^(-1/5)`, floored at
/// [`MIN_BANDWIDTH`].
pub fn silverman_bandwidth(sample: &[f64]) -> f64 {
    let n = sample.len();
    if n < 2 {
        return MIN_BANDWIDTH;
    }
    let sorted = stats::sorted(sample);
    let iqr = stats::percentile_sorted(&sorted, 75.0).unwrap_or(0.0)
        - stats::percentile_sorted(&sorted, 25.0).unwrap_or(0.0);
    let spread = stats::sample_std(sample).min(iqr / 1.34);
    let h = 0.9 * spread * powf(n as f64, -0.2);
    if h.is_finite() && h > MIN_BANDWIDTH {
        h
    } else {
        MIN_BANDWIDTH
    }
}

impl ResidualModel {
    pub fn fit(sample: Vec<f64>) -> Result<ResidualModel> {
        if sample.len() < MIN_RESIDUALS {
            return Err(Error::TooFewResiduals { need: MIN_RESIDUALS, got: sample.len() });
        }
        if !sample.iter().all(|e| e.is_finite()) {
            return Err(Error::NonFinite("residual sample"));
        }
        // both power values are nonnegative, so a residual below -1 is impossible
        let sample: Vec<f64> = sample.into_iter().map(|e| e.max(-1.0)).collect();
        let bandwidth = silverman_bandwidth(&sample);
        Ok(ResidualModel { sample, bandwidth })
    }

    /// Build with an explicit bandwidth, bypassing the sample-size rule.
    pub fn with_bandwidth(sample: Vec<f64>, bandwidth: f64) -> Result<ResidualModel> {
        if sample.is_empty() {
            return Err(Error::TooFewResiduals { need: 1, got: 0 });
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!("bandwidth {bandwidth} must be positive")));
        }
        Ok(ResidualModel { sample, bandwidth })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        self.sample.iter().map(|e| std_normal_pdf((x - e) / h)).sum::<f64>()
            / (self.sample.len() as f64 * h)
    }

    /// CDF of the (untruncated) kernel mixture.
    pub fn cdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        self.sample.iter().map(|e| std_normal_cdf((x - e) / h)).sum::<f64>() / self.sample.len() as f64
    }

    /// One draw: a sample point chosen uniformly plus Gaussian kernel noise.
    /// Draws below -1 are redrawn up to 100 times, then clamped.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut v = -1.0;
        for _ in 0..MAX_REDRAWS {
            let centre = self.sample[rng.random_range(0..self.sample.len())];
            let g: f64 = StandardNormal.sample(rng);
            v = centre + self.bandwidth * g;
            if v >= -1.0 {
                return v;
            }
        }
        v.max(-1.0)
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<f64> {
        (0..count).map(|_| self.draw(rng)).collect()
    }
}
