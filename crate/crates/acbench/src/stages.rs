//! Pipeline stages. Each `cmd_*` reads its inputs from the output directory
//! (or the raw input files), runs the stage and writes exactly its own
//! artifacts, so stages can be rerun one at a time.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use acbench_core::cluster::{self, Clustering, RoomFeature};
use acbench_core::conditions::{self, UniformConditions};
use acbench_core::ingest::{
    self, DroppedRoom, OperationSegment, RejectReason, RejectTally, RoomDataset, RoomMeta, TelemetryRecord,
    WeatherRecord,
};
use acbench_core::regress::factor_index;
use acbench_core::residual::{self, ResidualModel};
use acbench_core::rng::StreamKey;
use acbench_core::scoring::{self, ScoreReport};
use acbench_core::selection::{self, CvRun, SelectionRecord};
use acbench_core::{Error, ModelStructure, TrainedPredictor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::{read_csv, read_document, write_csv, write_json, Document, Stamp};
use crate::config::RunConfig;
use crate::error::{AppError, AppResult};

pub const SEGMENTS: &str = "segments.csv";
pub const ROOMS: &str = "rooms.csv";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const PREDICTORS: &str = "predictors.json";
pub const SELECTION: &str = "selection.json";
pub const TIMING: &str = "timing.json";
pub const CLUSTERS: &str = "clusters.json";
pub const CONDITIONS: &str = "conditions.json";
pub const SCORES: &str = "scores.csv";
pub const DRAWS: &str = "scores_draws.csv";
pub const SWEEP: &str = "sweep.csv";

const FMT_INGEST: &str = "acbench-ingest-report";
const FMT_PREDICTORS: &str = "acbench-predictors";
const FMT_SELECTION: &str = "acbench-selection";
const FMT_TIMING: &str = "acbench-timing";
const FMT_CLUSTERS: &str = "acbench-clusters";
const FMT_CONDITIONS: &str = "acbench-conditions";

pub struct Context {
    pub cfg: RunConfig,
    pub stamp: Stamp,
    pool: rayon::ThreadPool,
}

impl Context {
    pub fn new(cfg: RunConfig) -> AppResult<Context> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| AppError::Config(format!("thread pool: {e}")))?;
        let stamp = Stamp { config_hash: cfg.hash(), seed: cfg.seed };
        Ok(Context { cfg, stamp, pool })
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomCount {
    pub room_id: String,
    pub n_seg: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub telemetry_rows: usize,
    pub weather_rows: usize,
    pub room_rows: usize,
    /// Rejected records, segments and rooms by reason.
    pub rejects: RejectTally,
    pub segments_extracted: usize,
    pub segments_kept: usize,
    pub rooms_kept: Vec<RoomCount>,
    pub dropped_rooms: Vec<DroppedRoom>,
}

fn keep_valid<T>(rows: Vec<T>, check: impl Fn(&T) -> Result<(), RejectReason>, tally: &mut RejectTally) -> Vec<T> {
    rows.into_iter()
        .filter(|r| match check(r) {
            Ok(()) => true,
            Err(reason) => {
                tally.add(reason);
                false
            }
        })
        .collect()
}

/// Segments and qualified rooms from raw telemetry, weather and room files.
pub fn ingest(ctx: &Context) -> AppResult<(Vec<RoomDataset>, IngestReport)> {
    let cfg = &ctx.cfg;
    let telemetry: Vec<TelemetryRecord> = read_csv(&cfg.inputs.telemetry)?;
    let weather: Vec<WeatherRecord> = read_csv(&cfg.inputs.weather)?;
    let metas: Vec<RoomMeta> = read_csv(&cfg.inputs.rooms)?;
    for (rows, what) in [(telemetry.len(), "telemetry"), (weather.len(), "weather"), (metas.len(), "rooms")] {
        if rows == 0 {
            return Err(Error::EmptyInput(what.to_string()).into());
        }
    }
    let (telemetry_rows, weather_rows, room_rows) = (telemetry.len(), weather.len(), metas.len());
    let mut tally = RejectTally::default();
    let telemetry = keep_valid(telemetry, TelemetryRecord::check, &mut tally);
    let weather = keep_valid(weather, WeatherRecord::check, &mut tally);
    let mut metas = keep_valid(metas, RoomMeta::check, &mut tally);
    let before = metas.len();
    metas.sort_by(|a, b| a.room_id.cmp(&b.room_id));
    metas.dedup_by(|a, b| a.room_id == b.room_id);
    for _ in metas.len()..before {
        tally.add(RejectReason::DuplicateRoom);
    }

    let streams = ingest::into_room_streams(telemetry, &mut tally);
    let weather = ingest::sort_weather(weather, &mut tally);
    let per_room: Vec<(String, Vec<OperationSegment>, RejectTally, usize)> = ctx.install(|| {
        streams
            .par_iter()
            .map(|(room, stream)| {
                let mut t = RejectTally::default();
                let segs = ingest::room_segments(stream, &weather, &cfg.filter, &mut t);
                let extracted = segs.len() + t.0.get(&RejectReason::NoWeatherCoverage).copied().unwrap_or(0);
                let kept = ingest::filter_segments(segs, &cfg.filter, &mut t);
                (room.clone(), kept, t, extracted)
            })
            .collect()
    });
    let mut segments = BTreeMap::new();
    let mut segments_extracted = 0;
    for (room, segs, t, extracted) in per_room {
        tally.merge(&t);
        segments_extracted += extracted;
        segments.insert(room, segs);
    }
    let segments = ingest::apply_multisplit_exclusion(segments, &streams, &cfg.filter, &mut tally)?;
    let (datasets, dropped_rooms) = ingest::filter_rooms(segments, &metas, &cfg.filter)?;
    for d in &dropped_rooms {
        tally.add(d.reason);
    }
    let report = IngestReport {
        telemetry_rows,
        weather_rows,
        room_rows,
        rejects: tally,
        segments_extracted,
        segments_kept: datasets.iter().map(RoomDataset::n_seg).sum(),
        rooms_kept: datasets.iter().map(|d| RoomCount { room_id: d.room_id().to_string(), n_seg: d.n_seg() }).collect(),
        dropped_rooms,
    };
    Ok((datasets, report))
}

pub fn cmd_ingest(ctx: &Context) -> AppResult<IngestReport> {
    let (datasets, report) = ingest(ctx)?;
    write_csv(&ctx.out(SEGMENTS), Some(&ctx.stamp), datasets.iter().flat_map(|d| d.segments.iter()))?;
    write_csv(&ctx.out(ROOMS), Some(&ctx.stamp), datasets.iter().map(|d| &d.meta))?;
    write_json(&ctx.out(INGEST_REPORT), &Document::new(FMT_INGEST, &ctx.stamp, &report))?;
    Ok(report)
}

/// Qualified rooms as written by the ingest stage.
pub fn load_datasets(ctx: &Context) -> AppResult<Vec<RoomDataset>> {
    let metas: Vec<RoomMeta> = read_csv(&ctx.out(ROOMS))?;
    let segments: Vec<OperationSegment> = read_csv(&ctx.out(SEGMENTS))?;
    let mut by_room: BTreeMap<String, Vec<OperationSegment>> = BTreeMap::new();
    for s in segments {
        by_room.entry(s.room_id.clone()).or_default().push(s);
    }
    let datasets: Vec<RoomDataset> = metas
        .into_iter()
        .map(|meta| {
            let segments = by_room.remove(&meta.room_id).unwrap_or_default();
            RoomDataset { meta, segments }
        })
        .collect();
    if datasets.is_empty() {
        return Err(Error::EmptyInput(ROOMS.to_string()).into());
    }
    Ok(datasets)
}

// ---------------------------------------------------------------- model

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomModel {
    pub room_id: String,
    pub predictor: TrainedPredictor,
    pub residual: ResidualModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adoption {
    pub structure: ModelStructure,
    pub rooms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDoc {
    pub rooms: Vec<SelectionRecord>,
    pub adoption: Vec<Adoption>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub structure: ModelStructure,
    /// Mean seconds per fit, averaged over rooms.
    pub mean_train_time_s: f64,
    pub adopted_by: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub n_rooms: usize,
    pub k_cv: usize,
    pub n_cv: usize,
    pub rows: Vec<TimingRow>,
    pub sum_train_time_s: f64,
    /// `n_rooms * k_cv * n_cv * sum_train_time_s`.
    pub estimated_total_s: f64,
    pub wall_clock_s: f64,
}

pub struct ModelOutput {
    pub models: Vec<RoomModel>,
    pub selection: SelectionDoc,
    pub timing: TimingReport,
}

fn fit_room(ctx: &Context, d: &RoomDataset, cells: Vec<Vec<acbench_core::Result<CvRun>>>) -> AppResult<(RoomModel, SelectionRecord)> {
    let cv = ctx.cfg.cv_config();
    let t0 = Instant::now();
    let clock = move || t0.elapsed().as_secs_f64();
    let record = selection::assemble(d, &cv, &ctx.cfg.structures, cells, &clock)?;
    let predictor = selection::fit_final(d, &cv, record.chosen)?;
    let (_, y) = d.design();
    let residual = ResidualModel::fit(residual::percent_residuals(&record.oof_predictions, &y)?)?;
    Ok((RoomModel { room_id: d.room_id().to_string(), predictor, residual }, record))
}

/// Structure selection, final fits and residual models for every room.
pub fn model(ctx: &Context, datasets: &[RoomDataset]) -> AppResult<ModelOutput> {
    let started = Instant::now();
    let cv = ctx.cfg.cv_config();
    let structures = &ctx.cfg.structures;
    for d in datasets {
        if d.n_seg() < cv.k_cv {
            return Err(Error::TooFewSegments { n: d.n_seg(), k: cv.k_cv }.into());
        }
    }
    let cells: Vec<(usize, usize, usize)> = (0..datasets.len())
        .flat_map(|r| (0..structures.len()).flat_map(move |s| (0..cv.n_cv).map(move |t| (r, s, t))))
        .collect();
    let runs: Vec<acbench_core::Result<CvRun>> = ctx.install(|| {
        cells
            .par_iter()
            .map(|&(r, s, t)| {
                let t0 = Instant::now();
                let clock = move || t0.elapsed().as_secs_f64();
                selection::run_cell(&datasets[r], &cv, structures[s], t, &clock)
            })
            .collect()
    });
    let mut runs = runs.into_iter();
    let grouped: Vec<Vec<Vec<acbench_core::Result<CvRun>>>> = datasets
        .iter()
        .map(|_| structures.iter().map(|_| runs.by_ref().take(cv.n_cv).collect()).collect())
        .collect();
    let fitted: Vec<AppResult<(RoomModel, SelectionRecord)>> = ctx.install(|| {
        datasets.par_iter().zip(grouped.into_par_iter()).map(|(d, cells)| fit_room(ctx, d, cells)).collect()
    });
    let mut models = Vec::with_capacity(datasets.len());
    let mut records = Vec::with_capacity(datasets.len());
    for f in fitted {
        let (m, r) = f?;
        models.push(m);
        records.push(r);
    }

    let adoption: Vec<Adoption> = structures
        .iter()
        .map(|&s| Adoption { structure: s, rooms: records.iter().filter(|r| r.chosen == s).count() })
        .collect();
    let rows: Vec<TimingRow> = structures
        .iter()
        .enumerate()
        .map(|(i, &s)| TimingRow {
            structure: s,
            mean_train_time_s: records.iter().map(|r| r.train_time_s[i]).sum::<f64>() / records.len().max(1) as f64,
            adopted_by: adoption[i].rooms,
        })
        .collect();
    let t_train: Vec<f64> = rows.iter().map(|r| r.mean_train_time_s).collect();
    let timing = TimingReport {
        n_rooms: datasets.len(),
        k_cv: cv.k_cv,
        n_cv: cv.n_cv,
        sum_train_time_s: t_train.iter().sum(),
        estimated_total_s: selection::estimate_total_time(datasets.len(), cv.k_cv, cv.n_cv, &t_train),
        wall_clock_s: started.elapsed().as_secs_f64(),
        rows,
    };
    Ok(ModelOutput { models, selection: SelectionDoc { rooms: records, adoption }, timing })
}

pub fn cmd_model(ctx: &Context) -> AppResult<ModelOutput> {
    let datasets = load_datasets(ctx)?;
    let out = model(ctx, &datasets)?;
    write_json(&ctx.out(PREDICTORS), &Document::new(FMT_PREDICTORS, &ctx.stamp, &out.models))?;
    write_json(&ctx.out(SELECTION), &Document::new(FMT_SELECTION, &ctx.stamp, &out.selection))?;
    write_json(&ctx.out(TIMING), &Document::new(FMT_TIMING, &ctx.stamp, &out.timing))?;
    Ok(out)
}

pub fn load_models(ctx: &Context) -> AppResult<Vec<RoomModel>> {
    Ok(read_document(&ctx.out(PREDICTORS), FMT_PREDICTORS)?.data)
}

pub fn load_selection(ctx: &Context) -> AppResult<SelectionDoc> {
    Ok(read_document(&ctx.out(SELECTION), FMT_SELECTION)?.data)
}

pub fn load_timing(ctx: &Context) -> AppResult<TimingReport> {
    Ok(read_document(&ctx.out(TIMING), FMT_TIMING)?.data)
}

// ---------------------------------------------------------------- cluster

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDoc {
    pub features: Vec<RoomFeature>,
    pub clustering: Clustering,
}

pub fn cluster_key(seed: u64) -> StreamKey {
    StreamKey::new(seed).with_str("cluster")
}

pub fn clusters(ctx: &Context, datasets: &[RoomDataset]) -> AppResult<ClusterDoc> {
    let features = cluster::build_features(datasets)?;
    let c = &ctx.cfg.cluster;
    let clustering = cluster::cluster_rooms(&features, c.k_min, c.k_max, cluster_key(ctx.cfg.seed))?;
    Ok(ClusterDoc { features, clustering })
}

pub fn cmd_cluster(ctx: &Context) -> AppResult<ClusterDoc> {
    let doc = clusters(ctx, &load_datasets(ctx)?)?;
    write_json(&ctx.out(CLUSTERS), &Document::new(FMT_CLUSTERS, &ctx.stamp, &doc))?;
    Ok(doc)
}

pub fn load_clusters(ctx: &Context) -> AppResult<ClusterDoc> {
    Ok(read_document(&ctx.out(CLUSTERS), FMT_CLUSTERS)?.data)
}

// ---------------------------------------------------------------- conditions

pub fn uniform_conditions(ctx: &Context, datasets: &[RoomDataset], doc: &ClusterDoc) -> AppResult<Vec<UniformConditions>> {
    let results: Vec<acbench_core::Result<UniformConditions>> = ctx.install(|| {
        doc.clustering
            .clusters
            .par_iter()
            .map(|c| {
                let members: Vec<&RoomDataset> = c
                    .members
                    .iter()
                    .map(|m| datasets.iter().find(|d| d.room_id() == m).ok_or_else(|| Error::EmptyInput(m.clone())))
                    .collect::<acbench_core::Result<_>>()?;
                conditions::uniform_conditions(c.id, &members)
            })
            .collect()
    });
    Ok(results.into_iter().collect::<acbench_core::Result<_>>()?)
}

pub fn cmd_conditions(ctx: &Context) -> AppResult<Vec<UniformConditions>> {
    let conds = uniform_conditions(ctx, &load_datasets(ctx)?, &load_clusters(ctx)?)?;
    write_json(&ctx.out(CONDITIONS), &Document::new(FMT_CONDITIONS, &ctx.stamp, &conds))?;
    Ok(conds)
}

pub fn load_conditions(ctx: &Context) -> AppResult<Vec<UniformConditions>> {
    Ok(read_document(&ctx.out(CONDITIONS), FMT_CONDITIONS)?.data)
}

// ---------------------------------------------------------------- score

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub room_id: String,
    pub cluster_id: usize,
    pub median_eta: f64,
    pub mean_eta: f64,
    pub p5_eta: f64,
    pub p95_eta: f64,
    pub share_of_draws_best: f64,
    pub comparative: bool,
    pub deterministic_epi_w: f64,
}

impl From<&ScoreReport> for ScoreRow {
    fn from(r: &ScoreReport) -> Self {
        ScoreRow {
            room_id: r.room_id.clone(),
            cluster_id: r.cluster_id,
            median_eta: r.median,
            mean_eta: r.mean,
            p5_eta: r.p5,
            p95_eta: r.p95,
            share_of_draws_best: r.share_best,
            comparative: r.comparative,
            deterministic_epi_w: r.deterministic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawRow {
    pub room_id: String,
    pub cluster_id: usize,
    pub draw: usize,
    pub epi_w: f64,
    pub eta: f64,
}

pub struct ScoreOutput {
    pub reports: Vec<ScoreReport>,
    /// Stochastic EPI draws per room, aligned with `reports`.
    pub draws: Vec<Vec<f64>>,
}

fn find_model<'a>(models: &'a [RoomModel], room: &str) -> AppResult<&'a RoomModel> {
    models
        .iter()
        .find(|m| m.room_id == room)
        .ok_or_else(|| AppError::Config(format!("no predictor for room {room}; rerun the model stage")))
}

pub fn score(ctx: &Context, models: &[RoomModel], doc: &ClusterDoc, conds: &[UniformConditions]) -> AppResult<ScoreOutput> {
    let s = ctx.cfg.scoring.sample_size;
    let seed = ctx.cfg.seed;
    let mut reports = Vec::new();
    let mut draws = Vec::new();
    for c in &doc.clustering.clusters {
        let cond = conds
            .iter()
            .find(|u| u.cluster_id == c.id)
            .ok_or_else(|| AppError::Config(format!("no conditions for cluster {}; rerun the conditions stage", c.id)))?;
        let uniform = cond.uniform_vector();
        let members: Vec<&RoomModel> = c.members.iter().map(|m| find_model(models, m)).collect::<AppResult<_>>()?;
        let epis: Vec<scoring::StochasticEpi> = ctx.install(|| {
            members
                .par_iter()
                .map(|m| {
                    let det = scoring::deterministic_epi(&m.predictor, &uniform);
                    scoring::stochastic_epi(&m.room_id, det, &m.residual, s, &mut scoring::score_key(seed, &m.room_id).rng())
                })
                .collect()
        });
        reports.extend(scoring::benchmark_scores(c.id, &epis)?);
        draws.extend(epis.into_iter().map(|e| e.draws));
    }
    Ok(ScoreOutput { reports, draws })
}

pub fn cmd_score(ctx: &Context) -> AppResult<ScoreOutput> {
    let out = score(ctx, &load_models(ctx)?, &load_clusters(ctx)?, &load_conditions(ctx)?)?;
    write_csv(&ctx.out(SCORES), Some(&ctx.stamp), out.reports.iter().map(ScoreRow::from))?;
    if ctx.cfg.scoring.write_draws {
        let rows = out.reports.iter().zip(&out.draws).flat_map(|(r, d)| {
            d.iter().zip(&r.eta).enumerate().map(move |(k, (&epi_w, &eta))| DrawRow {
                room_id: r.room_id.clone(),
                cluster_id: r.cluster_id,
                draw: k,
                epi_w,
                eta,
            })
        });
        write_csv(&ctx.out(DRAWS), Some(&ctx.stamp), rows)?;
    }
    Ok(out)
}

pub fn load_scores(ctx: &Context) -> AppResult<Vec<ScoreRow>> {
    read_csv(&ctx.out(SCORES))
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub room_id: String,
    pub cluster_id: usize,
    pub factor: String,
    pub value: f64,
    pub epi_w: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepRequest {
    /// Defaults to the run config's sweep factor.
    pub factor: Option<String>,
    /// Explicit grid; otherwise each room's historical range.
    pub grid: Option<Vec<f64>>,
    /// Explicit rooms; otherwise the best-scoring room of every cluster.
    pub rooms: Option<Vec<String>>,
}

/// Highest median score per cluster; ties go to the earlier row.
pub fn best_rooms(scores: &[ScoreRow]) -> Vec<String> {
    let mut best: BTreeMap<usize, &ScoreRow> = BTreeMap::new();
    for r in scores {
        let e = best.entry(r.cluster_id).or_insert(r);
        if r.median_eta > e.median_eta {
            *e = r;
        }
    }
    best.values().map(|r| r.room_id.clone()).collect()
}

pub fn sweep(
    ctx: &Context,
    models: &[RoomModel],
    doc: &ClusterDoc,
    conds: &[UniformConditions],
    rooms: &[String],
    req: &SweepRequest,
) -> AppResult<Vec<SweepRow>> {
    let factor = req.factor.clone().unwrap_or_else(|| ctx.cfg.sweep.factor.clone());
    let j = factor_index(&factor)?;
    let mut rows = Vec::new();
    for room in rooms {
        let info = doc
            .clustering
            .cluster_of(room)
            .ok_or_else(|| AppError::Config(format!("room {room} is not in any cluster")))?;
        let cond = conds
            .iter()
            .find(|u| u.cluster_id == info.id)
            .ok_or_else(|| AppError::Config(format!("no conditions for cluster {}", info.id)))?;
        let table = &cond
            .room(room)
            .ok_or_else(|| AppError::Config(format!("no percentile table for room {room}")))?
            .tables[j];
        let (lo, hi) = (table.0[0], table.0[8]);
        let grid = match &req.grid {
            Some(g) => g.clone(),
            None => scoring::linspace(lo, hi, ctx.cfg.sweep.points),
        };
        if grid.iter().any(|v| *v < lo || *v > hi) {
            eprintln!("warning: sweep grid for {room} leaves its historical {factor} range [{lo}, {hi}]");
        }
        let model = find_model(models, room)?;
        for (value, epi_w) in scoring::factor_sweep(&model.predictor, &cond.uniform_vector(), &factor, &grid)? {
            rows.push(SweepRow { room_id: room.clone(), cluster_id: info.id, factor: factor.clone(), value, epi_w });
        }
    }
    Ok(rows)
}

pub fn cmd_sweep(ctx: &Context, req: &SweepRequest) -> AppResult<Vec<SweepRow>> {
    let rooms = match &req.rooms {
        Some(r) => r.clone(),
        None => best_rooms(&load_scores(ctx)?),
    };
    let rows = sweep(ctx, &load_models(ctx)?, &load_clusters(ctx)?, &load_conditions(ctx)?, &rooms, req)?;
    write_csv(&ctx.out(SWEEP), Some(&ctx.stamp), &rows)?;
    Ok(rows)
}

// ---------------------------------------------------------------- run

/// Every stage in order, each reading the previous stage's artifacts.
pub fn cmd_run(ctx: &Context) -> AppResult<()> {
    cmd_ingest(ctx)?;
    cmd_model(ctx)?;
    cmd_cluster(ctx)?;
    cmd_conditions(ctx)?;
    cmd_score(ctx)?;
    crate::report::cmd_report(ctx)?;
    Ok(())
}
