//! Stochastic benchmarking scores.
//!
//! Each room's predictor is evaluated at its cluster's uniform conditions,
//! the prediction is perturbed by `S` sampled percentage residuals, and on
//! every draw each room is scored by `min over rooms / own value`.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::regress::{factor_index, FeatureVector, TrainedPredictor};
use crate::residual::ResidualModel;
use crate::rng::StreamKey;
use crate::stats;
use crate::{Error, Result};

pub const DEFAULT_SAMPLE_SIZE: usize = 1000;
/// Draws are floored here before scoring so ratios stay in `(0, 1]`.
pub const MIN_DRAW_W: f64 = 1.0;

pub fn deterministic_epi(predictor: &TrainedPredictor, uniform: &FeatureVector) -> f64 {
    predictor.predict(uniform)
}

/// Stream for a room's residual draws.
pub fn score_key(seed: u64, room_id: &str) -> StreamKey {
    StreamKey::new(seed).with_str(room_id).with_str("score")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticEpi {
    pub room_id: String,
    pub deterministic: f64,
    pub draws: Vec<f64>,
}

pub fn stochastic_epi<R: Rng + ?Sized>(
    room_id: &str,
    det: f64,
    residual: &ResidualModel,
    sample_size: usize,
    rng: &mut R,
) -> StochasticEpi {
    let draws = (0..sample_size).map(|_| (det * (1.0 + residual.draw(rng))).max(0.0)).collect();
    StochasticEpi { room_id: String::from(room_id), deterministic: det, draws }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub room_id: String,
    pub cluster_id: usize,
    pub deterministic: f64,
    pub eta: Vec<f64>,
    pub median: f64,
    pub mean: f64,
    pub p5: f64,
    pub p95: f64,
    /// Fraction of draws on which this room was the cluster minimum.
    pub share_best: f64,
    /// False for a room alone in its cluster.
    pub comparative: bool,
}

fn summarize(room: &StochasticEpi, cluster_id: usize, eta: Vec<f64>, share_best: f64, comparative: bool) -> Result<ScoreReport> {
    let sorted = stats::sorted(&eta);
    Ok(ScoreReport {
        room_id: room.room_id.clone(),
        cluster_id,
        deterministic: room.deterministic,
        median: stats::percentile_sorted(&sorted, 50.0)?,
        mean: stats::mean(&eta),
        p5: stats::percentile_sorted(&sorted, 5.0)?,
        p95: stats::percentile_sorted(&sorted, 95.0)?,
        eta,
        share_best,
        comparative,
    })
}

/// Per-draw scores of the rooms of one cluster.
pub fn benchmark_scores(cluster_id: usize, rooms: &[StochasticEpi]) -> Result<Vec<ScoreReport>> {
    let Some(first) = rooms.first() else {
        return Err(Error::EmptySample);
    };
    let s = first.draws.len();
    if s == 0 {
        return Err(Error::EmptySample);
    }
    if let Some(r) = rooms.iter().find(|r| r.draws.len() != s) {
        return Err(Error::SampleSizeMismatch(s, r.draws.len()));
    }
    if rooms.len() == 1 {
        return Ok(alloc::vec![summarize(first, cluster_id, alloc::vec![1.0; s], 1.0, false)?]);
    }
    let floored: Vec<Vec<f64>> =
        rooms.iter().map(|r| r.draws.iter().map(|v| v.max(MIN_DRAW_W)).collect()).collect();
    let mut eta: Vec<Vec<f64>> = alloc::vec![Vec::with_capacity(s); rooms.len()];
    let mut best = alloc::vec![0usize; rooms.len()];
    for d in 0..s {
        let min = floored.iter().map(|r| r[d]).fold(f64::INFINITY, f64::min);
        for (i, r) in floored.iter().enumerate() {
            eta[i].push(min / r[d]);
            if r[d] == min {
                best[i] += 1;
            }
        }
    }
    rooms
        .iter()
        .zip(eta)
        .zip(best)
        .map(|((r, e), b)| summarize(r, cluster_id, e, b as f64 / s as f64, true))
        .collect()
}

/// Predictions with one factor swept over `grid` and the other six pinned at
/// the uniform values.
pub fn factor_sweep(
    predictor: &TrainedPredictor,
    uniform: &FeatureVector,
    factor: &str,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let j = factor_index(factor)?;
    Ok(grid
        .iter()
        .map(|&v| {
            let mut x = *uniform;
            x.0[j] = v;
            (v, predictor.predict(&x))
        })
        .collect())
}

/// `n` evenly spaced points over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{OperationSegment, RoomDataset, RoomMeta};
    use crate::regress::{train, ModelStructure};
    use crate::thermsim::{segment_power, RoomPhysical, SegmentScenario};
    use alloc::string::ToString;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;
    use rand::Rng;

    fn epi(id: &str, draws: Vec<f64>) -> StochasticEpi {
        StochasticEpi { room_id: id.to_string(), deterministic: draws[0], draws }
    }

    fn constant_predictor(y: f64) -> TrainedPredictor {
        let x: Vec<FeatureVector> = (0..12).map(|i| FeatureVector([i as f64; 7])).collect();
        train(ModelStructure::LrNormal, &x, &[y; 12], 0).unwrap()
    }

    #[test]
    fn constant_predictor_epi() {
        let p = constant_predictor(600.0);
        assert!((deterministic_epi(&p, &FeatureVector([3.0; 7])) - 600.0).abs() < 1e-9);
    }

    #[test]
    fn linear_predictor_epi() {
        let mut rng = StreamKey::new(2).rng();
        let x: Vec<FeatureVector> =
            (0..30).map(|_| FeatureVector(core::array::from_fn(|_| rng.random_range(0.0..10.0)))).collect();
        let w = [2.0, -1.0, 0.5, 3.0, 0.0, 1.5, -2.0];
        let f = |x: &FeatureVector| 100.0 + x.0.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        let y: Vec<f64> = x.iter().map(f).collect();
        let p = train(ModelStructure::LrNormal, &x, &y, 0).unwrap();
        let q = FeatureVector([4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        assert!((deterministic_epi(&p, &q) - f(&q)).abs() < 1e-8);
    }

    #[test]
    fn residual_perturbation() {
        let flat = ResidualModel::with_bandwidth(vec![0.0; 20], 1e-9).unwrap();
        let s = stochastic_epi("a", 800.0, &flat, 50, &mut score_key(1, "a").rng());
        assert!(s.draws.iter().all(|v| (v - 800.0).abs() < 1e-4));
        let tenth = ResidualModel::with_bandwidth(vec![0.1], 1e-12).unwrap();
        let s = stochastic_epi("a", 1000.0, &tenth, 3, &mut score_key(1, "a").rng());
        assert!(s.draws.iter().all(|v| (v - 1100.0).abs() < 1e-6));
        let m = ResidualModel::with_bandwidth(vec![-0.2, 0.0, 0.3], 0.05).unwrap();
        let a = stochastic_epi("a", 500.0, &m, 200, &mut score_key(9, "a").rng());
        let b = stochastic_epi("a", 500.0, &m, 200, &mut score_key(9, "a").rng());
        assert_eq!(a, b);
        assert_eq!(a.draws.len(), 200);
    }

    #[test]
    fn hand_example() {
        let r = benchmark_scores(1, &[epi("a", vec![500.0; 4]), epi("b", vec![1000.0; 4])]).unwrap();
        assert_eq!(r[0].eta, vec![1.0; 4]);
        assert_eq!(r[1].eta, vec![0.5; 4]);
        assert_eq!((r[0].share_best, r[1].share_best), (1.0, 0.0));
        assert!(r.iter().all(|x| x.comparative));
    }

    #[test]
    fn identical_draws_all_best() {
        let d = vec![300.0, 200.0, 250.0];
        let r = benchmark_scores(2, &[epi("a", d.clone()), epi("b", d.clone()), epi("c", d)]).unwrap();
        assert!(r.iter().all(|x| x.eta == [1.0; 3] && x.share_best == 1.0));
    }

    #[test]
    fn singleton_and_errors() {
        let r = benchmark_scores(4, &[epi("solo", vec![123.0, 456.0])]).unwrap();
        assert_eq!(r[0].eta, vec![1.0, 1.0]);
        assert!(!r[0].comparative);
        assert_eq!(benchmark_scores(1, &[]), Err(Error::EmptySample));
        assert_eq!(
            benchmark_scores(1, &[epi("a", vec![1.0, 2.0]), epi("b", vec![1.0])]),
            Err(Error::SampleSizeMismatch(2, 1))
        );
    }

    #[test]
    fn zero_draws_are_floored() {
        let r = benchmark_scores(1, &[epi("a", vec![0.0, 10.0]), epi("b", vec![5.0, 0.0])]).unwrap();
        assert_eq!(r[0].eta, vec![1.0, 0.1]);
        assert_eq!(r[1].eta, vec![0.2, 1.0]);
    }

    fn cluster() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..6, 1usize..40).prop_flat_map(|(rooms, s)| {
            prop::collection::vec(prop::collection::vec(0.0f64..5000.0, s), rooms)
        })
    }

    proptest! {
        #[test]
        fn score_invariants(draws in cluster(), c in 1.0f64..20.0) {
            let rooms: Vec<StochasticEpi> =
                draws.iter().enumerate().map(|(i, d)| epi(&alloc::format!("r{i}"), d.clone())).collect();
            let r = benchmark_scores(1, &rooms).unwrap();
            let s = draws[0].len();
            for d in 0..s {
                let etas: Vec<f64> = r.iter().map(|x| x.eta[d]).collect();
                prop_assert!(etas.iter().all(|e| *e > 0.0 && *e <= 1.0));
                prop_assert_eq!(etas.iter().cloned().fold(0.0, f64::max), 1.0);
            }
            prop_assert!(r.iter().map(|x| x.share_best).sum::<f64>() >= 1.0 - 1e-12);
            // above the floor, scaling every draw leaves the scores alone
            let scaled: Vec<StochasticEpi> = draws
                .iter()
                .enumerate()
                .map(|(i, d)| epi(&alloc::format!("r{i}"), d.iter().map(|v| (v + 1.0) * c).collect()))
                .collect();
            let base: Vec<StochasticEpi> = draws
                .iter()
                .enumerate()
                .map(|(i, d)| epi(&alloc::format!("r{i}"), d.iter().map(|v| (v + 1.0) * 2.0).collect()))
                .collect();
            let (a, b) = (benchmark_scores(1, &base).unwrap(), benchmark_scores(1, &scaled).unwrap());
            for (x, y) in a.iter().zip(&b) {
                for (u, v) in x.eta.iter().zip(&y.eta) {
                    prop_assert!((u - v).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn separated_rooms_rank_by_epi() {
        let m = ResidualModel::with_bandwidth(vec![-0.05, 0.0, 0.05], 0.02).unwrap();
        let dets = [400.0, 700.0, 1000.0];
        let rooms: Vec<StochasticEpi> = dets
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let id = alloc::format!("r{i}");
                stochastic_epi(&id, d, &m, 1000, &mut score_key(3, &id).rng())
            })
            .collect();
        let r = benchmark_scores(1, &rooms).unwrap();
        assert!(r[0].median >= r[1].median && r[1].median >= r[2].median);
        assert!(r[0].share_best > 0.99);
    }

    fn sim_room() -> (RoomPhysical, RoomDataset) {
        let phys = RoomPhysical {
            area: 15.0,
            height: 2.6,
            wall_area: 20.0,
            wall_thickness: 0.2,
            conductivity: 0.5,
            eer: 3.2,
            c_s2h: 0.2,
            q_hum_w: 90.0,
        };
        let mut rng = StreamKey::new(21).rng();
        let segments = (0..120)
            .map(|i| {
                let t_set = rng.random_range(22.0..27.0);
                let s = SegmentScenario {
                    t_seg: rng.random_range(3600.0..14400.0),
                    t_set,
                    t_ri: rng.random_range(27.0..31.0),
                    t_a: rng.random_range(28.0..34.0),
                    t_r: t_set + rng.random_range(-0.5..0.5),
                    p_si: rng.random_range(0.0..800.0),
                    h_a: rng.random_range(55.0..90.0),
                };
                let x = s.features();
                OperationSegment {
                    room_id: "sim".to_string(),
                    start: i,
                    end: i + 1,
                    t_seg: s.t_seg,
                    epi: segment_power(&phys, &s),
                    t_a: x.0[0],
                    h_a: x.0[1],
                    p_si: x.0[2],
                    t_ri: x.0[3],
                    t_r: x.0[4],
                    t_set: x.0[6],
                }
            })
            .collect();
        (phys, RoomDataset { meta: RoomMeta { room_id: "sim".to_string(), area: 15.0, orientation: None }, segments })
    }

    #[test]
    fn simulator_trained_prediction_near_physics() {
        let (phys, room) = sim_room();
        let (x, y) = room.design();
        let p = train(ModelStructure::LrNormal, &x, &y, 0).unwrap();
        let s = SegmentScenario { t_seg: 7200.0, t_set: 24.5, t_ri: 29.0, t_a: 31.0, t_r: 24.6, p_si: 400.0, h_a: 70.0 };
        let truth = segment_power(&phys, &s);
        let got = deterministic_epi(&p, &s.features());
        assert!((got / truth - 1.0).abs() < 0.1, "{got} vs {truth}");
    }

    #[test]
    fn sweep_shape_and_consistency() {
        let (_, room) = sim_room();
        let (x, y) = room.design();
        let p = train(ModelStructure::LrNormal, &x, &y, 0).unwrap();
        let u = FeatureVector([31.0, 70.0, 400.0, 29.0, 24.6, 7200.0, 24.5]);
        let grid = linspace(22.0, 27.0, 11);
        let sw = factor_sweep(&p, &u, "t_set", &grid).unwrap();
        assert_eq!(sw.len(), 11);
        let one = factor_sweep(&p, &u, "t_set", &[24.5]).unwrap();
        assert_eq!(one[0].1, deterministic_epi(&p, &u));
        assert!(matches!(factor_sweep(&p, &u, "humidity", &grid), Err(Error::UnknownFactor(_))));
        let mut coupled = u;
        let pts: Vec<f64> = grid
            .iter()
            .map(|&t| {
                coupled.0[6] = t;
                coupled.0[4] = t + 0.1;
                deterministic_epi(&p, &coupled)
            })
            .collect();
        assert!(pts.windows(2).all(|w| w[1] <= w[0]));
    }
}
