//! Uniform noisy-factor values for a cluster.
//!
//! For each factor the per-room ranges `[P40, P60]`, `[P25, P75]`,
//! `[P10, P90]` and `[min, max]` are tried in that order; the first one whose
//! intersection over all member rooms is non-empty gives the common range,
//! and its midpoint is the uniform value. Intervals are closed.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ingest::RoomDataset;
use crate::regress::{FeatureVector, FACTOR_NAMES, N_FEATURES};
use crate::stats;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    A,
    B,
    C,
    D,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::A, Tier::B, Tier::C, Tier::D];

    /// Lower and upper percentile of the tier.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Tier::A => (40.0, 60.0),
            Tier::B => (25.0, 75.0),
            Tier::C => (10.0, 90.0),
            Tier::D => (0.0, 100.0),
        }
    }
}

pub const TABLE_PERCENTILES: [f64; 9] = [0.0, 10.0, 25.0, 40.0, 50.0, 60.0, 75.0, 90.0, 100.0];

/// Percentiles of one room's history of one factor, at [`TABLE_PERCENTILES`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileTable(pub [f64; 9]);

impl PercentileTable {
    pub fn of(sample: &[f64]) -> Result<PercentileTable> {
        let sorted = stats::sorted(sample);
        let mut out = [0.0; 9];
        for (o, p) in out.iter_mut().zip(TABLE_PERCENTILES) {
            *o = stats::percentile_sorted(&sorted, p)?;
        }
        Ok(PercentileTable(out))
    }

    pub fn range(&self, tier: Tier) -> (f64, f64) {
        let at = |p: f64| self.0[TABLE_PERCENTILES.iter().position(|q| *q == p).expect("tabulated")];
        let (lo, hi) = tier.bounds();
        (at(lo), at(hi))
    }
}

/// First tier at which all rooms' ranges intersect, with the intersection.
pub fn common_range_from_tables(tables: &[&PercentileTable]) -> Result<(Tier, f64, f64)> {
    if tables.is_empty() {
        return Err(Error::EmptySample);
    }
    for tier in Tier::ALL {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for t in tables {
            let (a, b) = t.range(tier);
            lo = lo.max(a);
            hi = hi.min(b);
        }
        if lo <= hi {
            return Ok((tier, lo, hi));
        }
    }
    Err(Error::NoOverlap)
}

pub fn common_range(samples: &[&[f64]]) -> Result<(Tier, f64, f64)> {
    let tables = samples.iter().map(|s| PercentileTable::of(s)).collect::<Result<Vec<_>>>()?;
    common_range_from_tables(&tables.iter().collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCondition {
    pub factor: String,
    pub tier: Tier,
    pub lo: f64,
    pub hi: f64,
    pub uniform: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomPercentiles {
    pub room_id: String,
    /// One table per factor, in feature order.
    pub tables: Vec<PercentileTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformConditions {
    pub cluster_id: usize,
    pub factors: Vec<FactorCondition>,
    pub rooms: Vec<RoomPercentiles>,
}

impl UniformConditions {
    pub fn uniform_vector(&self) -> FeatureVector {
        FeatureVector(core::array::from_fn(|j| self.factors[j].uniform))
    }

    pub fn room(&self, room_id: &str) -> Option<&RoomPercentiles> {
        self.rooms.iter().find(|r| r.room_id == room_id)
    }
}

/// Uniform conditions for the rooms of one cluster, factor by factor.
pub fn uniform_conditions(cluster_id: usize, members: &[&RoomDataset]) -> Result<UniformConditions> {
    if members.is_empty() {
        return Err(Error::EmptySample);
    }
    let rooms: Vec<RoomPercentiles> = members
        .iter()
        .map(|r| {
            let tables = (0..N_FEATURES)
                .map(|j| {
                    let col: Vec<f64> = r.segments.iter().map(|s| s.features().0[j]).collect();
                    PercentileTable::of(&col)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RoomPercentiles { room_id: r.meta.room_id.clone(), tables })
        })
        .collect::<Result<_>>()?;
    let factors = (0..N_FEATURES)
        .map(|j| {
            let tables: Vec<&PercentileTable> = rooms.iter().map(|r| &r.tables[j]).collect();
            let (tier, lo, hi) = common_range_from_tables(&tables)?;
            Ok(FactorCondition { factor: String::from(FACTOR_NAMES[j]), tier, lo, hi, uniform: 0.5 * (lo + hi) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UniformConditions { cluster_id, factors, rooms })
}
