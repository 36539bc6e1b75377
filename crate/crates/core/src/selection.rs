//! Per-room choice of regression structure by repeated K-fold
//! cross-validation.
//!
//! Every trial draws one random partition shared by all structures, so the
//! structures are compared on identical folds. Each (structure, trial) cell
//! trains with its own stream keyed by `(seed, room, structure, trial)`.
//! The trial MAPE pools the out-of-fold predictions of all folds.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::RoomDataset;
use crate::regress::{self, FeatureVector, ModelStructure};
use crate::rng::StreamKey;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub k_cv: usize,
    pub n_cv: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { k_cv: 10, n_cv: 10, seed: 0 }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_cv < 2 {
            return Err(Error::InvalidConfig(format!("k_cv = {} must be at least 2", self.k_cv)));
        }
        if self.n_cv < 1 {
            return Err(Error::InvalidConfig("n_cv must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// Random fold label in `0..k` for each of `n` points; fold sizes differ by
/// at most one.
pub fn cv_partition<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k == 0 || n < k {
        return Err(Error::TooFewSegments { n, k });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut labels = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        labels[i] = pos % k;
    }
    Ok(labels)
}

fn room_key(seed: u64, room_id: &str) -> StreamKey {
    StreamKey::new(seed).with_str(room_id)
}

pub fn partition_key(seed: u64, room_id: &str, trial: usize) -> StreamKey {
    room_key(seed, room_id).with_str("partition").with_u64(trial as u64)
}

pub fn cell_key(seed: u64, room_id: &str, structure: ModelStructure, trial: usize) -> StreamKey {
    room_key(seed, room_id).with_str(structure.name()).with_u64(trial as u64)
}

/// Key of the extra winner run that feeds the residual model.
pub fn residual_key(seed: u64, room_id: &str) -> StreamKey {
    room_key(seed, room_id).with_str("residual")
}

/// Key of the winner's final fit on all segments.
pub fn final_key(seed: u64, room_id: &str) -> StreamKey {
    room_key(seed, room_id).with_str("final")
}

/// Out-of-fold predictions: `fit_predict(train, test)` must return one
/// prediction per test index, using a model fitted on `train` only.
pub fn out_of_fold<F>(folds: &[usize], k: usize, mut fit_predict: F) -> Result<Vec<f64>>
where
    F: FnMut(&[usize], &[usize]) -> Result<Vec<f64>>,
{
    let mut pred = vec![f64::NAN; folds.len()];
    for f in 0..k {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..folds.len()).partition(|&i| folds[i] == f);
        let p = fit_predict(&train, &test)?;
        if p.len() != test.len() {
            return Err(Error::LengthMismatch(p.len(), test.len()));
        }
        for (i, v) in test.into_iter().zip(p) {
            pred[i] = v;
        }
    }
    Ok(pred)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvRun {
    pub predictions: Vec<f64>,
    /// Pooled MAPE, percent.
    pub mape: f64,
    /// Mean wall-clock seconds per fold fit, as reported by the clock.
    pub train_time_s: f64,
}

/// Clock returning seconds; the no_std core has none of its own.
pub type Clock<'a> = &'a dyn Fn() -> f64;

pub fn no_clock() -> f64 {
    0.0
}

/// One CV trial of `structure` on `(x, y)` over the given fold labels.
pub fn cross_validate(
    structure: ModelStructure,
    x: &[FeatureVector],
    y: &[f64],
    folds: &[usize],
    k: usize,
    key: StreamKey,
    clock: Clock,
) -> Result<CvRun> {
    if x.len() != y.len() || folds.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let mut spent = 0.0;
    let mut fold = 0u64;
    let predictions = out_of_fold(folds, k, |train, test| {
        let xt: Vec<FeatureVector> = train.iter().map(|&i| x[i]).collect();
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let t0 = clock();
        let model = regress::train(structure, &xt, &yt, key.with_u64(fold).value())?;
        spent += clock() - t0;
        fold += 1;
        Ok(test.iter().map(|&i| model.predict(&x[i])).collect())
    })?;
    let mape = regress::mape(&predictions, y)?;
    if !mape.is_finite() {
        return Err(Error::NonFinite("cross-validated MAPE"));
    }
    Ok(CvRun { predictions, mape, train_time_s: spent / k as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub room_id: String,
    pub structures: Vec<ModelStructure>,
    /// Mean trial MAPE per structure, `None` if any trial failed.
    pub mean_mape: Vec<Option<f64>>,
    /// `structures.len() x n_cv`.
    pub trial_mape: Vec<Vec<Option<f64>>>,
    /// First error seen per structure.
    pub failures: Vec<Option<String>>,
    pub chosen: ModelStructure,
    /// Out-of-fold predictions of the extra winner run, in segment order.
    pub oof_predictions: Vec<f64>,
    pub oof_mape: f64,
    /// Mean seconds per fit, per structure. Wall-clock, so kept out of the
    /// serialized record.
    #[serde(skip)]
    pub train_time_s: Vec<f64>,
}

impl SelectionRecord {
    pub fn mean_of(&self, s: ModelStructure) -> Option<f64> {
        self.structures.iter().position(|t| *t == s).and_then(|i| self.mean_mape[i])
    }
}

/// Index of the smallest mean; the earliest wins ties. `None` if all failed.
pub fn argmin_structure(structures: &[ModelStructure], means: &[Option<f64>]) -> Option<usize> {
    let mut order: Vec<usize> = (0..structures.len()).collect();
    order.sort_by_key(|&i| structures[i]);
    let mut best: Option<(usize, f64)> = None;
    for i in order {
        if let Some(m) = means[i] {
            if best.is_none_or(|(_, b)| m < b) {
                best = Some((i, m));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Result of one (structure, trial) cell, for callers that schedule the
/// cells themselves.
pub fn run_cell(
    dataset: &RoomDataset,
    cfg: &CvConfig,
    structure: ModelStructure,
    trial: usize,
    clock: Clock,
) -> Result<CvRun> {
    let (x, y) = dataset.design();
    let id = dataset.room_id();
    let folds = cv_partition(x.len(), cfg.k_cv, &mut partition_key(cfg.seed, id, trial).rng())?;
    cross_validate(structure, &x, &y, &folds, cfg.k_cv, cell_key(cfg.seed, id, structure, trial), clock)
}

/// The extra CV run of the chosen structure whose residuals feed the
/// residual model.
pub fn residual_run(dataset: &RoomDataset, cfg: &CvConfig, structure: ModelStructure, clock: Clock) -> Result<CvRun> {
    let (x, y) = dataset.design();
    let key = residual_key(cfg.seed, dataset.room_id());
    let folds = cv_partition(x.len(), cfg.k_cv, &mut key.with_str("partition").rng())?;
    cross_validate(structure, &x, &y, &folds, cfg.k_cv, key.with_str(structure.name()), clock)
}

/// Combine cell results (`cells[i][t]` for structure `i`, trial `t`) into a
/// record, then run the winner once more for its residuals.
pub fn assemble(
    dataset: &RoomDataset,
    cfg: &CvConfig,
    structures: &[ModelStructure],
    cells: Vec<Vec<Result<CvRun>>>,
    clock: Clock,
) -> Result<SelectionRecord> {
    let mut mean_mape = Vec::with_capacity(structures.len());
    let mut trial_mape = Vec::with_capacity(structures.len());
    let mut failures = Vec::with_capacity(structures.len());
    let mut train_time_s = Vec::with_capacity(structures.len());
    for row in &cells {
        let trials: Vec<Option<f64>> = row.iter().map(|c| c.as_ref().ok().map(|r| r.mape)).collect();
        let failure = row.iter().find_map(|c| c.as_ref().err().map(|e| e.to_string()));
        let mean = if failure.is_none() && !trials.is_empty() {
            Some(trials.iter().flatten().sum::<f64>() / trials.len() as f64)
        } else {
            None
        };
        let ok: Vec<f64> = row.iter().filter_map(|c| c.as_ref().ok().map(|r| r.train_time_s)).collect();
        train_time_s.push(if ok.is_empty() { 0.0 } else { ok.iter().sum::<f64>() / ok.len() as f64 });
        mean_mape.push(mean);
        trial_mape.push(trials);
        failures.push(failure);
    }
    let room_id = dataset.room_id().to_string();
    let Some(win) = argmin_structure(structures, &mean_mape) else {
        return Err(Error::AllStructuresFailed(room_id));
    };
    let chosen = structures[win];
    let run = residual_run(dataset, cfg, chosen, clock)?;
    Ok(SelectionRecord {
        room_id,
        structures: structures.to_vec(),
        mean_mape,
        trial_mape,
        failures,
        chosen,
        oof_predictions: run.predictions,
        oof_mape: run.mape,
        train_time_s,
    })
}

/// Sequential selection over `structures` for one room.
pub fn select_structure(
    dataset: &RoomDataset,
    cfg: &CvConfig,
    structures: &[ModelStructure],
    clock: Clock,
) -> Result<SelectionRecord> {
    cfg.validate()?;
    if structures.is_empty() {
        return Err(Error::InvalidConfig("empty structure list".to_string()));
    }
    if dataset.n_seg() < cfg.k_cv {
        return Err(Error::TooFewSegments { n: dataset.n_seg(), k: cfg.k_cv });
    }
    let cells = structures
        .iter()
        .map(|&s| (0..cfg.n_cv).map(|t| run_cell(dataset, cfg, s, t, clock)).collect())
        .collect();
    assemble(dataset, cfg, structures, cells, clock)
}

/// Final predictor of the chosen structure, fitted on all segments.
pub fn fit_final(dataset: &RoomDataset, cfg: &CvConfig, structure: ModelStructure) -> Result<regress::TrainedPredictor> {
    let (x, y) = dataset.design();
    regress::train(structure, &x, &y, final_key(cfg.seed, dataset.room_id()).value())
}

/// Estimated total running time of the selection over a fleet:
/// `n_rooms * k_cv * n_cv * sum(t_train)`, seconds.
pub fn estimate_total_time(n_rooms: usize, k_cv: usize, n_cv: usize, t_train: &[f64]) -> f64 {
    (n_rooms * k_cv * n_cv) as f64 * t_train.iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{OperationSegment, RoomMeta};
    use core::cell::RefCell;
    use rand_distr::{Distribution, StandardNormal};

    fn room(n: usize, noise: f64, seed: u64, f: impl Fn(&[f64; 7]) -> f64) -> RoomDataset {
        let mut rng = StreamKey::new(seed).rng();
        let segments = (0..n)
            .map(|i| {
                let v: [f64; 7] = [
                    rng.random_range(26.0..34.0),
                    rng.random_range(50.0..90.0),
                    rng.random_range(0.0..400.0),
                    rng.random_range(27.0..31.0),
                    rng.random_range(23.0..27.0),
                    rng.random_range(3600.0..20000.0),
                    rng.random_range(22.0..27.0),
                ];
                let g: f64 = StandardNormal.sample(&mut rng);
                OperationSegment {
                    room_id: "r".to_string(),
                    start: i as i64,
                    end: i as i64 + 1,
                    t_seg: v[5],
                    epi: f(&v) * (1.0 + noise * g).max(0.05),
                    t_a: v[0],
                    h_a: v[1],
                    p_si: v[2],
                    t_ri: v[3],
                    t_r: v[4],
                    t_set: v[6],
                }
            })
            .collect();
        RoomDataset { meta: RoomMeta { room_id: "r".to_string(), area: 12.0, orientation: None }, segments }
    }

    fn linear(v: &[f64; 7]) -> f64 {
        400.0 + 20.0 * v[0] + 0.5 * v[2] - 15.0 * v[6] + 0.01 * v[5]
    }

    #[test]
    fn partition_sizes() {
        let mut rng = StreamKey::new(1).rng();
        let p = cv_partition(10, 10, &mut rng).unwrap();
        let mut counts = [0; 10];
        p.iter().for_each(|&f| counts[f] += 1);
        assert!(counts.iter().all(|&c| c == 1));

        let p = cv_partition(23, 10, &mut rng).unwrap();
        let mut counts = [0usize; 10];
        p.iter().for_each(|&f| counts[f] += 1);
        let mut sorted = counts.to_vec();
        sorted.sort();
        assert_eq!(sorted, [2, 2, 2, 2, 2, 2, 2, 3, 3, 3]);

        let a = cv_partition(57, 10, &mut StreamKey::new(5).rng()).unwrap();
        let b = cv_partition(57, 10, &mut StreamKey::new(5).rng()).unwrap();
        assert_eq!(a, b);
        assert_eq!(cv_partition(9, 10, &mut rng), Err(Error::TooFewSegments { n: 9, k: 10 }));
    }

    #[test]
    fn out_of_fold_never_sees_its_point() {
        let folds = cv_partition(37, 7, &mut StreamKey::new(2).rng()).unwrap();
        let seen = RefCell::new(vec![0usize; 37]);
        let pred = out_of_fold(&folds, 7, |train, test| {
            for t in test {
                assert!(!train.contains(t));
                seen.borrow_mut()[*t] += 1;
            }
            assert_eq!(train.len() + test.len(), 37);
            Ok(test.iter().map(|&i| i as f64).collect())
        })
        .unwrap();
        assert!(seen.borrow().iter().all(|&c| c == 1));
        assert_eq!(pred, (0..37).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn noiseless_linear_lr_normal() {
        let d = room(60, 0.0, 3, linear);
        let (x, y) = d.design();
        let folds = cv_partition(60, 10, &mut StreamKey::new(1).rng()).unwrap();
        let run = cross_validate(ModelStructure::LrNormal, &x, &y, &folds, 10, StreamKey::new(1), &no_clock).unwrap();
        assert_eq!(run.predictions.len(), 60);
        assert!(run.mape <= 0.01, "{}", run.mape);
    }

    #[test]
    fn constant_target_all_structures() {
        let d = room(30, 0.0, 4, |_| 600.0);
        let cfg = CvConfig { k_cv: 5, n_cv: 1, seed: 9 };
        for s in ModelStructure::ALL {
            let run = run_cell(&d, &cfg, s, 0, &no_clock).unwrap();
            assert!(run.mape <= 1e-6, "{s}: {}", run.mape);
        }
    }

    #[test]
    fn linear_truth_picks_linear_family() {
        let d = room(100, 0.0, 6, linear);
        let zoo: Vec<ModelStructure> = ModelStructure::ALL.into_iter().filter(|s| !s.is_ann()).collect();
        let cfg = CvConfig { k_cv: 10, n_cv: 3, seed: 1 };
        let rec = select_structure(&d, &cfg, &zoo, &no_clock).unwrap();
        assert!(rec.chosen.is_linear_family(), "{}", rec.chosen);
        assert!(rec.mean_of(rec.chosen).unwrap() <= 0.5);
        assert_eq!(rec.mean_mape.len(), zoo.len());
        assert!(rec.trial_mape.iter().all(|r| r.len() == 3));
        assert_eq!(rec.oof_predictions.len(), 100);
        let again = select_structure(&d, &cfg, &zoo, &no_clock).unwrap();
        assert_eq!(rec, again);
    }

    #[test]
    fn ties_go_to_enum_order() {
        use ModelStructure::*;
        let s = [SvrGkn, LrRobust, LrNormal];
        assert_eq!(argmin_structure(&s, &[Some(1.0), Some(1.0), Some(2.0)]), Some(1));
        assert_eq!(argmin_structure(&s, &[Some(1.0), Some(2.0), Some(1.0)]), Some(2));
        assert_eq!(argmin_structure(&s, &[None, None, None]), None);
    }

    #[test]
    fn record_shape_for_full_zoo() {
        let d = room(24, 0.05, 8, linear);
        let cfg = CvConfig { k_cv: 4, n_cv: 2, seed: 3 };
        let cells = ModelStructure::ALL
            .iter()
            .map(|&s| {
                (0..2)
                    .map(|t| if s.is_ann() { Err(Error::NonFinite("skip")) } else { run_cell(&d, &cfg, s, t, &no_clock) })
                    .collect()
            })
            .collect();
        let rec = assemble(&d, &cfg, &ModelStructure::ALL, cells, &no_clock).unwrap();
        assert_eq!(rec.mean_mape.len(), 13);
        assert_eq!(rec.trial_mape.len(), 13);
        assert!(rec.trial_mape.iter().all(|r| r.len() == 2));
        let best = rec.mean_of(rec.chosen).unwrap();
        assert!(rec.mean_mape.iter().flatten().all(|m| best <= *m));
        assert!(rec.failures.iter().zip(ModelStructure::ALL).all(|(f, s)| f.is_some() == s.is_ann()));
    }

    #[test]
    fn all_failed() {
        let d = room(24, 0.05, 8, linear);
        let cfg = CvConfig { k_cv: 4, n_cv: 1, seed: 3 };
        let cells = vec![vec![Err(Error::NonFinite("x"))]];
        assert_eq!(
            assemble(&d, &cfg, &[ModelStructure::LrNormal], cells, &no_clock),
            Err(Error::AllStructuresFailed("r".to_string()))
        );
    }

    #[test]
    fn more_noise_means_higher_error() {
        let zoo = [ModelStructure::LrNormal, ModelStructure::LrRobust, ModelStructure::RtFull];
        let cfg = CvConfig { k_cv: 5, n_cv: 2, seed: 2 };
        let levels = [0.02, 0.05, 0.1, 0.2, 0.4];
        let errs: Vec<f64> = levels
            .iter()
            .map(|&s| {
                let rec = select_structure(&room(80, s, 11, linear), &cfg, &zoo, &no_clock).unwrap();
                rec.mean_of(rec.chosen).unwrap()
            })
            .collect();
        let inversions = errs.windows(2).filter(|w| w[1] < w[0]).count();
        assert!(inversions <= 1, "{errs:?}");
        assert!(crate::stats::pearson(&levels, &errs) > 0.0);
    }

    #[test]
    fn timing_estimates() {
        let h = estimate_total_time(44, 10, 10, &[1.568]) / 3600.0;
        assert!((h - 1.92).abs() < 0.005, "{h}");
        let m = estimate_total_time(44, 10, 10, &[0.093]) / 60.0;
        assert!((m - 6.82).abs() < 0.005, "{m}");
        assert_eq!(estimate_total_time(0, 10, 10, &[1.0]), 0.0);
        assert_eq!(estimate_total_time(3, 10, 10, &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn clock_is_used_for_timing() {
        let d = room(20, 0.0, 1, linear);
        let ticks = RefCell::new(0.0);
        let clock = || {
            let mut t = ticks.borrow_mut();
            *t += 0.5;
            *t
        };
        let cfg = CvConfig { k_cv: 4, n_cv: 1, seed: 0 };
        let run = run_cell(&d, &cfg, ModelStructure::LrNormal, 0, &clock).unwrap();
        assert_eq!(run.train_time_s, 0.5);
    }
}
