//! Summary tables over finished stage artifacts.

use acbench_core::stats::{percentile, sorted, percentile_sorted};
use acbench_core::ModelStructure;
use serde::{Deserialize, Serialize};

use crate::artifacts::write_csv;
use crate::error::AppResult;
use crate::stages::{load_clusters, load_datasets, load_scores, load_selection, load_timing, Context, ScoreRow};

pub const REPORT_CV: &str = "report_cv_mape.csv";
pub const REPORT_ROOMS: &str = "report_rooms.csv";
pub const REPORT_SCORES: &str = "report_scores.csv";

/// Spread of per-room mean CV MAPE for one structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub structure: ModelStructure,
    pub rooms: usize,
    pub mape_min: f64,
    pub mape_q1: f64,
    pub mape_median: f64,
    pub mape_q3: f64,
    pub mape_max: f64,
    pub adopted_by: usize,
    pub mean_train_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomRow {
    pub room_id: String,
    pub cluster_id: Option<usize>,
    pub n_seg: usize,
    pub epi_min_w: f64,
    pub epi_q1_w: f64,
    pub epi_median_w: f64,
    pub epi_q3_w: f64,
    pub epi_max_w: f64,
    pub t_a_median_c: f64,
    pub t_set_median_c: f64,
}

/// Historical-ratio scores next to the stochastic score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub room_id: String,
    pub cluster_id: usize,
    pub median_epi_w: f64,
    /// Lowest median historical EPI across all rooms over this room's.
    pub type_a: f64,
    /// Same, within the room's cluster.
    pub type_b: f64,
    pub median_eta: f64,
    pub b_minus_a: f64,
    pub eta_minus_b: f64,
}

fn five_numbers(xs: &[f64]) -> AppResult<[f64; 5]> {
    let s = sorted(xs);
    let mut out = [0.0; 5];
    for (o, p) in out.iter_mut().zip([0.0, 25.0, 50.0, 75.0, 100.0]) {
        *o = percentile_sorted(&s, p)?;
    }
    Ok(out)
}

pub fn comparison(scores: &[ScoreRow], medians: &[(String, f64)]) -> Vec<ComparisonRow> {
    let median_of = |room: &str| medians.iter().find(|(r, _)| r == room).map(|(_, m)| *m);
    let scored: Vec<(&ScoreRow, f64)> = scores.iter().filter_map(|s| median_of(&s.room_id).map(|m| (s, m))).collect();
    let global = scored.iter().map(|(_, m)| *m).fold(f64::INFINITY, f64::min);
    scored
        .iter()
        .map(|(s, m)| {
            let local = scored
                .iter()
                .filter(|(o, _)| o.cluster_id == s.cluster_id)
                .map(|(_, m)| *m)
                .fold(f64::INFINITY, f64::min);
            let (type_a, type_b) = (global / m, local / m);
            ComparisonRow {
                room_id: s.room_id.clone(),
                cluster_id: s.cluster_id,
                median_epi_w: *m,
                type_a,
                type_b,
                median_eta: s.median_eta,
                b_minus_a: type_b - type_a,
                eta_minus_b: s.median_eta - type_b,
            }
        })
        .collect()
}

/// Write the report tables. Stages that have not run are skipped.
pub fn cmd_report(ctx: &Context) -> AppResult<()> {
    let datasets = load_datasets(ctx)?;
    let clusters = load_clusters(ctx).ok();

    if let Ok(sel) = load_selection(ctx) {
        let timing = load_timing(ctx).ok();
        let mut rows = Vec::new();
        for (i, &s) in sel.rooms.first().map(|r| r.structures.clone()).unwrap_or_default().iter().enumerate() {
            let mapes: Vec<f64> = sel.rooms.iter().filter_map(|r| r.mean_mape.get(i).copied().flatten()).collect();
            if mapes.is_empty() {
                continue;
            }
            let [mn, q1, md, q3, mx] = five_numbers(&mapes)?;
            rows.push(CvRow {
                structure: s,
                rooms: mapes.len(),
                mape_min: mn,
                mape_q1: q1,
                mape_median: md,
                mape_q3: q3,
                mape_max: mx,
                adopted_by: sel.rooms.iter().filter(|r| r.chosen == s).count(),
                mean_train_time_s: timing
                    .as_ref()
                    .and_then(|t| t.rows.iter().find(|r| r.structure == s))
                    .map(|r| r.mean_train_time_s),
            });
        }
        write_csv(&ctx.out(REPORT_CV), Some(&ctx.stamp), &rows)?;
    }

    let mut rooms = Vec::new();
    let mut medians = Vec::new();
    for d in &datasets {
        let epi: Vec<f64> = d.segments.iter().map(|s| s.epi).collect();
        let t_a: Vec<f64> = d.segments.iter().map(|s| s.t_a).collect();
        let t_set: Vec<f64> = d.segments.iter().map(|s| s.t_set).collect();
        let [mn, q1, md, q3, mx] = five_numbers(&epi)?;
        medians.push((d.room_id().to_string(), md));
        rooms.push(RoomRow {
            room_id: d.room_id().to_string(),
            cluster_id: clusters.as_ref().and_then(|c| c.clustering.cluster_of(d.room_id())).map(|c| c.id),
            n_seg: d.n_seg(),
            epi_min_w: mn,
            epi_q1_w: q1,
            epi_median_w: md,
            epi_q3_w: q3,
            epi_max_w: mx,
            t_a_median_c: percentile(&t_a, 50.0)?,
            t_set_median_c: percentile(&t_set, 50.0)?,
        });
    }
    write_csv(&ctx.out(REPORT_ROOMS), Some(&ctx.stamp), &rooms)?;

    if let Ok(scores) = load_scores(ctx) {
        write_csv(&ctx.out(REPORT_SCORES), Some(&ctx.stamp), comparison(&scores, &medians))?;
    }
    Ok(())
}
