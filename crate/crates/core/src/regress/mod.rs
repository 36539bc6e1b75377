//! The thirteen regression structures used to predict segment EPI from the
//! seven segment-wise noisy factors.
//!
//! Every structure sees z-scored inputs (see [`Normalizer`]). SVR and ANN
//! additionally fit a z-scored target; linear models and trees fit watts
//! directly. Predictions are floored at 0 W.

mod ann;
pub mod linalg;
mod linear;
pub mod metrics;
mod svr;
mod tree;

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ann::{AnnModel, AnnSettings};
pub use linear::{LinearModel, RobustSettings};
pub use metrics::{mae, mape, rmse};
pub use svr::{Kernel, SvrModel, SvrSettings};
pub use tree::{TreeModel, TreeNode, TreeSettings};

use crate::stats;
use crate::{Error, Result};

pub const N_FEATURES: usize = 7;

/// Stable names of the seven segment-wise factors, in feature order.
pub const FACTOR_NAMES: [&str; N_FEATURES] = ["t_a", "h_a", "p_si", "t_ri", "t_r", "t_seg", "t_set"];

/// `[T_a, H_a, p_si, T_ri, T_r, t_seg, T_set]`, units as in
/// [`OperationSegment`](crate::ingest::OperationSegment).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

pub fn factor_index(name: &str) -> Result<usize> {
    FACTOR_NAMES
        .iter()
        .position(|f| f.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::UnknownFactor(name.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelStructure {
    #[serde(rename = "LR-normal")]
    LrNormal,
    #[serde(rename = "LR-robust")]
    LrRobust,
    #[serde(rename = "SVR-LKN")]
    SvrLkn,
    #[serde(rename = "SVR-GKN")]
    SvrGkn,
    #[serde(rename = "RT-full")]
    RtFull,
    #[serde(rename = "RT-PB3L")]
    RtPb3l,
    #[serde(rename = "RT-PB5L")]
    RtPb5l,
    #[serde(rename = "ANN-L1S5")]
    AnnL1s5,
    #[serde(rename = "ANN-L1S10")]
    AnnL1s10,
    #[serde(rename = "ANN-L1S15")]
    AnnL1s15,
    #[serde(rename = "ANN-L2S5")]
    AnnL2s5,
    #[serde(rename = "ANN-L2S10")]
    AnnL2s10,
    #[serde(rename = "ANN-L2S15")]
    AnnL2s15,
}

impl ModelStructure {
    /// All structures in tie-breaking order.
    pub const ALL: [ModelStructure; 13] = [
        ModelStructure::LrNormal,
        ModelStructure::LrRobust,
        ModelStructure::SvrLkn,
        ModelStructure::SvrGkn,
        ModelStructure::RtFull,
        ModelStructure::RtPb3l,
        ModelStructure::RtPb5l,
        ModelStructure::AnnL1s5,
        ModelStructure::AnnL1s10,
        ModelStructure::AnnL1s15,
        ModelStructure::AnnL2s5,
        ModelStructure::AnnL2s10,
        ModelStructure::AnnL2s15,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelStructure::LrNormal => "LR-normal",
            ModelStructure::LrRobust => "LR-robust",
            ModelStructure::SvrLkn => "SVR-LKN",
            ModelStructure::SvrGkn => "SVR-GKN",
            ModelStructure::RtFull => "RT-full",
            ModelStructure::RtPb3l => "RT-PB3L",
            ModelStructure::RtPb5l => "RT-PB5L",
            ModelStructure::AnnL1s5 => "ANN-L1S5",
            ModelStructure::AnnL1s10 => "ANN-L1S10",
            ModelStructure::AnnL1s15 => "ANN-L1S15",
            ModelStructure::AnnL2s5 => "ANN-L2S5",
            ModelStructure::AnnL2s10 => "ANN-L2S10",
            ModelStructure::AnnL2s15 => "ANN-L2S15",
        }
    }

    pub fn is_ann(self) -> bool {
        self.hidden_layers().is_some()
    }

    pub fn is_linear_family(self) -> bool {
        matches!(self, ModelStructure::LrNormal | ModelStructure::LrRobust | ModelStructure::SvrLkn)
    }

    /// Levels removed from the fully grown tree, for tree structures.
    fn prune_levels(self) -> Option<usize> {
        match self {
            ModelStructure::RtFull => Some(0),
            ModelStructure::RtPb3l => Some(3),
            ModelStructure::RtPb5l => Some(5),
            _ => None,
        }
    }

    fn hidden_layers(self) -> Option<&'static [usize]> {
        match self {
            ModelStructure::AnnL1s5 => Some(&[5]),
            ModelStructure::AnnL1s10 => Some(&[10]),
            ModelStructure::AnnL1s15 => Some(&[15]),
            ModelStructure::AnnL2s5 => Some(&[5, 5]),
            ModelStructure::AnnL2s10 => Some(&[10, 10]),
            ModelStructure::AnnL2s15 => Some(&[15, 15]),
            _ => None,
        }
    }
}

impl fmt::Display for ModelStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelStructure {
    type Err = Error;

    /// Case-insensitive; accepts `LR-normal`, `lr-normal`, `lr_normal`.
    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim();
        ModelStructure::ALL
            .iter()
            .copied()
            .find(|m| {
                let name = m.name();
                name.len() == wanted.len()
                    && name.bytes().zip(wanted.bytes()).all(|(a, b)| {
                        a.eq_ignore_ascii_case(&b) || (a == b'-' && b == b'_')
                    })
            })
            .ok_or_else(|| Error::UnknownStructure(String::from(wanted)))
    }
}

/// Per-feature z-scoring with the sample standard deviation.
///
/// A zero-variance feature keeps `std = 0` and is only centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: [f64; N_FEATURES],
    pub std: [f64; N_FEATURES],
}

impl Normalizer {
    pub fn fit(x: &[FeatureVector]) -> Result<Normalizer> {
        if x.len() < 2 {
            return Err(Error::TooFewRows { need: 2, got: x.len() });
        }
        let mut mean = [0.0; N_FEATURES];
        let mut std = [0.0; N_FEATURES];
        let mut col = Vec::with_capacity(x.len());
        for j in 0..N_FEATURES {
            col.clear();
            col.extend(x.iter().map(|r| r.0[j]));
            mean[j] = stats::mean(&col);
            let s = stats::sample_std(&col);
            // guard against rounding noise on a constant column
            std[j] = if s > 1e-12 * crate::math::abs(mean[j]).max(1e-300) { s } else { 0.0 };
        }
        Ok(Normalizer { mean, std })
    }

    fn scale(&self, j: usize) -> f64 {
        if self.std[j] > 0.0 {
            self.std[j]
        } else {
            1.0
        }
    }

    pub fn is_constant(&self, j: usize) -> bool {
        self.std[j] == 0.0
    }

    pub fn apply(&self, x: &FeatureVector) -> [f64; N_FEATURES] {
        core::array::from_fn(|j| (x.0[j] - self.mean[j]) / self.scale(j))
    }

    pub fn invert(&self, z: &[f64; N_FEATURES]) -> FeatureVector {
        FeatureVector(core::array::from_fn(|j| z[j] * self.scale(j) + self.mean[j]))
    }
}

/// Affine target transform `y = mean + scale * t`. A constant target gets
/// `scale = 0`, so any model output maps back to the constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: f64,
    pub scale: f64,
}

impl TargetScaler {
    pub fn fit(y: &[f64]) -> TargetScaler {
        let mean = stats::mean(y);
        let s = stats::sample_std(y);
        let scale = if s > 1e-12 * crate::math::abs(mean).max(1e-300) { s } else { 0.0 };
        TargetScaler { mean, scale }
    }

    pub fn forward(&self, y: f64) -> f64 {
        if self.scale > 0.0 {
            (y - self.mean) / self.scale
        } else {
            0.0
        }
    }

    pub fn inverse(&self, t: f64) -> f64 {
        self.mean + self.scale * t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Linear(LinearModel),
    Svr(SvrModel),
    Tree(TreeModel),
    Ann(AnnModel),
}

/// Conditions met during training that did not prevent a usable model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainFlags {
    /// An iterative solver hit its cap before meeting its tolerance.
    pub non_converged: bool,
    /// The linear design was rank deficient; a ridge solution was used.
    pub ridge_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPredictor {
    pub structure: ModelStructure,
    pub normalizer: Normalizer,
    pub params: ModelParams,
    pub n_train: usize,
    #[serde(default)]
    pub flags: TrainFlags,
}

impl TrainedPredictor {
    /// Model output in watts, before the 0 W floor.
    pub fn predict_raw(&self, x: &FeatureVector) -> f64 {
        let z = self.normalizer.apply(x);
        match &self.params {
            ModelParams::Linear(m) => m.predict(&z),
            ModelParams::Svr(m) => m.predict(&z),
            ModelParams::Tree(m) => m.predict(&z),
            ModelParams::Ann(m) => m.predict(&z),
        }
    }

    pub fn predict(&self, x: &FeatureVector) -> f64 {
        let y = self.predict_raw(x);
        if y > 0.0 {
            y
        } else {
            0.0
        }
    }

    pub fn predict_many(&self, xs: &[FeatureVector]) -> Vec<f64> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

pub const MIN_TRAIN_ROWS: usize = 10;

/// Fit one structure on raw features and watts. `seed` drives every random
/// choice made during training (only ANN currently uses it).
pub fn train(
    structure: ModelStructure,
    x: &[FeatureVector],
    y: &[f64],
    seed: u64,
) -> Result<TrainedPredictor> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < MIN_TRAIN_ROWS {
        return Err(Error::TooFewRows { need: MIN_TRAIN_ROWS, got: x.len() });
    }
    if !x.iter().all(FeatureVector::is_finite) {
        return Err(Error::NonFinite("training features"));
    }
    if !y.iter().all(|v| v.is_finite() && *v >= 0.0) {
        return Err(Error::NonFinite("training targets"));
    }
    let normalizer = Normalizer::fit(x)?;
    let z: Vec<[f64; N_FEATURES]> = x.iter().map(|r| normalizer.apply(r)).collect();
    let mut flags = TrainFlags::default();
    let params = match structure {
        ModelStructure::LrNormal => ModelParams::Linear(linear::fit_ols(&z, y, &normalizer, &mut flags)),
        ModelStructure::LrRobust => ModelParams::Linear(linear::fit_bisquare(
            &z,
            y,
            &normalizer,
            &RobustSettings::default(),
            &mut flags,
        )),
        ModelStructure::SvrLkn | ModelStructure::SvrGkn => {
            let kernel = if structure == ModelStructure::SvrLkn {
                Kernel::Linear
            } else {
                Kernel::Gaussian { gamma: 1.0 / N_FEATURES as f64 }
            };
            ModelParams::Svr(svr::fit(&z, y, kernel, &SvrSettings::default(), &mut flags))
        }
        ModelStructure::RtFull | ModelStructure::RtPb3l | ModelStructure::RtPb5l => {
            let levels = structure.prune_levels().unwrap_or(0);
            ModelParams::Tree(tree::fit(&z, y, &TreeSettings::default(), levels))
        }
        _ => {
            let hidden = structure.hidden_layers().unwrap_or(&[]);
            ModelParams::Ann(ann::fit(&z, y, hidden, &AnnSettings::default(), seed))
        }
    };
    Ok(TrainedPredictor { structure, normalizer, params, n_train: x.len(), flags })
}
