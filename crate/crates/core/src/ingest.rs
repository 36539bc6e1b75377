//! Telemetry to AC operation segments.
//!
//! A segment is one maximal run of `status = on` in cooling or dehumidifying
//! mode. Values are sample-and-hold: each record holds until the next one,
//! and the last record of a run holds until the record that ends it (when
//! that record follows within the gap limit). Weather is joined by nearest
//! record, restricted to records within the join tolerance.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::regress::FeatureVector;
use crate::{Error, Result};

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcStatus {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcMode {
    Cooling,
    Dehumidifying,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub timestamp: Timestamp,
    pub room_id: String,
    pub status: AcStatus,
    pub mode: AcMode,
    /// Set point, °C.
    #[serde(rename = "set_point_c")]
    pub set_point: f64,
    /// Indoor temperature, °C.
    #[serde(rename = "indoor_temp_c")]
    pub indoor_temp: f64,
    /// AC electric power, W.
    #[serde(rename = "power_w")]
    pub power: f64,
    #[serde(default)]
    pub compressor_id: Option<String>,
}

impl TelemetryRecord {
    pub fn check(&self) -> core::result::Result<(), RejectReason> {
        if !(self.set_point.is_finite() && self.indoor_temp.is_finite() && self.power.is_finite())
        {
            return Err(RejectReason::NonFinite);
        }
        if self.power < 0.0 {
            return Err(RejectReason::NegativePower);
        }
        if self.status == AcStatus::On && !(16.0..=32.0).contains(&self.set_point) {
            return Err(RejectReason::SetPointOutOfRange);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub timestamp: Timestamp,
    /// Outdoor temperature, °C.
    #[serde(rename = "outdoor_temp_c")]
    pub outdoor_temp: f64,
    /// Relative humidity, %.
    #[serde(rename = "rel_humidity_pct")]
    pub rel_humidity: f64,
    /// Solar irradiance, W/m².
    #[serde(rename = "solar_irradiance_wm2")]
    pub solar_irradiance: f64,
}

impl WeatherRecord {
    pub fn check(&self) -> core::result::Result<(), RejectReason> {
        if !(self.outdoor_temp.is_finite()
            && self.rel_humidity.is_finite()
            && self.solar_irradiance.is_finite())
        {
            return Err(RejectReason::NonFinite);
        }
        if !(self.rel_humidity > 0.0 && self.rel_humidity < 100.0) {
            return Err(RejectReason::HumidityOutOfRange);
        }
        if self.solar_irradiance < 0.0 {
            return Err(RejectReason::NegativeIrradiance);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomMeta {
    pub room_id: String,
    /// Floor area, m².
    #[serde(rename = "area_m2")]
    pub area: f64,
    #[serde(default)]
    pub orientation: Option<String>,
}

impl RoomMeta {
    pub fn check(&self) -> core::result::Result<(), RejectReason> {
        if self.area.is_finite() && self.area > 0.0 {
            Ok(())
        } else {
            Err(RejectReason::NonPositiveArea)
        }
    }
}

/// One AC run with its EPI and segment-wise noisy factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationSegment {
    pub room_id: String,
    pub start: Timestamp,
    pub end: Timestamp,
    /// Duration, s.
    #[serde(rename = "t_seg_s")]
    pub t_seg: f64,
    /// Segment-average AC power, W.
    #[serde(rename = "epi_w")]
    pub epi: f64,
    #[serde(rename = "t_a_c")]
    pub t_a: f64,
    #[serde(rename = "h_a_pct")]
    pub h_a: f64,
    #[serde(rename = "p_si_wm2")]
    pub p_si: f64,
    #[serde(rename = "t_ri_c")]
    pub t_ri: f64,
    #[serde(rename = "t_r_c")]
    pub t_r: f64,
    #[serde(rename = "t_set_c")]
    pub t_set: f64,
}

impl OperationSegment {
    pub fn features(&self) -> FeatureVector {
        FeatureVector([
            self.t_a, self.h_a, self.p_si, self.t_ri, self.t_r, self.t_seg, self.t_set,
        ])
    }

    fn factors_finite(&self) -> bool {
        self.epi.is_finite() && self.features().0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomDataset {
    pub meta: RoomMeta,
    pub segments: Vec<OperationSegment>,
}

impl RoomDataset {
    pub fn room_id(&self) -> &str {
        &self.meta.room_id
    }

    pub fn n_seg(&self) -> usize {
        self.segments.len()
    }

    pub fn design(&self) -> (Vec<FeatureVector>, Vec<f64>) {
        self.segments.iter().map(|s| (s.features(), s.epi)).unzip()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub t_seg_min: f64,
    pub t_seg_max: f64,
    pub n_seg_min: usize,
    pub exclusive_multisplit: bool,
    /// Drop dehumidifying-mode runs and keep cooling only.
    pub cooling_only: bool,
    /// Telemetry gap (s) that splits an on-run.
    pub max_gap_s: i64,
    /// Nearest-record tolerance (s) for the weather join.
    pub weather_tolerance_s: i64,
    /// Segments below this EPI (W) are dropped so percentage errors stay finite.
    pub min_epi_w: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            t_seg_min: 3600.0,
            t_seg_max: 86400.0,
            n_seg_min: 20,
            exclusive_multisplit: false,
            cooling_only: false,
            max_gap_s: 600,
            weather_tolerance_s: 900,
            min_epi_w: 1.0,
        }
    }
}

impl FilterConfig {
    /// `k_cv` is the CV fold count the datasets will be used with.
    pub fn validate(&self, k_cv: usize) -> Result<()> {
        if !(self.t_seg_min > 0.0 && self.t_seg_min < self.t_seg_max) {
            return Err(Error::InvalidConfig(
                "need 0 < t_seg_min < t_seg_max".to_string(),
            ));
        }
        if self.n_seg_min < 2 * k_cv {
            return Err(Error::InvalidConfig(alloc::format!(
                "n_seg_min = {} must be at least 2 * K_cv = {}",
                self.n_seg_min,
                2 * k_cv
            )));
        }
        if self.max_gap_s <= 0 || self.weather_tolerance_s < 0 {
            return Err(Error::InvalidConfig("gap and tolerance must be positive".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NonFinite,
    NegativePower,
    SetPointOutOfRange,
    HumidityOutOfRange,
    NegativeIrradiance,
    NonPositiveArea,
    DuplicateTimestamp,
    DuplicateRoom,
    NoWeatherCoverage,
    TooShort,
    TooLong,
    InvalidFactor,
    EpiBelowFloor,
    SiblingOverlap,
    NoMetadata,
    TooFewSegments,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::NonFinite => "non_finite",
            RejectReason::NegativePower => "negative_power",
            RejectReason::SetPointOutOfRange => "set_point_out_of_range",
            RejectReason::HumidityOutOfRange => "humidity_out_of_range",
            RejectReason::NegativeIrradiance => "negative_irradiance",
            RejectReason::NonPositiveArea => "non_positive_area",
            RejectReason::DuplicateTimestamp => "duplicate_timestamp",
            RejectReason::DuplicateRoom => "duplicate_room",
            RejectReason::NoWeatherCoverage => "no_weather_coverage",
            RejectReason::TooShort => "too_short",
            RejectReason::TooLong => "too_long",
            RejectReason::InvalidFactor => "invalid_factor",
            RejectReason::EpiBelowFloor => "epi_below_floor",
            RejectReason::SiblingOverlap => "sibling_overlap",
            RejectReason::NoMetadata => "no_metadata",
            RejectReason::TooFewSegments => "too_few_segments",
        }
    }
}

/// Reject counts keyed by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectTally(pub BTreeMap<RejectReason, usize>);

impl RejectTally {
    pub fn add(&mut self, reason: RejectReason) {
        *self.0.entry(reason).or_insert(0) += 1;
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn merge(&mut self, other: &RejectTally) {
        for (r, n) in &other.0 {
            *self.0.entry(*r).or_insert(0) += n;
        }
    }
}

/// Split records into per-room streams sorted by time. A record repeating an
/// existing (room, timestamp) pair is rejected.
pub fn into_room_streams(
    records: Vec<TelemetryRecord>,
    rejects: &mut RejectTally,
) -> BTreeMap<String, Vec<TelemetryRecord>> {
    let mut rooms: BTreeMap<String, Vec<TelemetryRecord>> = BTreeMap::new();
    for r in records {
        rooms.entry(r.room_id.clone()).or_default().push(r);
    }
    for stream in rooms.values_mut() {
        // stable: the first occurrence of a duplicated timestamp wins
        stream.sort_by_key(|r| r.timestamp);
        let before = stream.len();
        stream.dedup_by_key(|r| r.timestamp);
        for _ in stream.len()..before {
            rejects.add(RejectReason::DuplicateTimestamp);
        }
    }
    rooms
}

/// Sort weather by time, dropping repeated timestamps.
pub fn sort_weather(mut weather: Vec<WeatherRecord>, rejects: &mut RejectTally) -> Vec<WeatherRecord> {
    weather.sort_by_key(|w| w.timestamp);
    let before = weather.len();
    weather.dedup_by_key(|w| w.timestamp);
    for _ in weather.len()..before {
        rejects.add(RejectReason::DuplicateTimestamp);
    }
    weather
}

/// Index range of one on-run inside a room stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawSegment {
    /// First on-record.
    pub first: usize,
    /// Last on-record (inclusive).
    pub last: usize,
    pub start: Timestamp,
    pub end: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentRules {
    pub max_gap_s: i64,
    pub cooling_only: bool,
}

impl From<&FilterConfig> for SegmentRules {
    fn from(cfg: &FilterConfig) -> Self {
        SegmentRules { max_gap_s: cfg.max_gap_s, cooling_only: cfg.cooling_only }
    }
}

impl Default for SegmentRules {
    fn default() -> Self {
        SegmentRules::from(&FilterConfig::default())
    }
}

/// Find on-runs in a time-sorted stream. Runs of zero duration are skipped.
pub fn extract_segments(stream: &[TelemetryRecord], rules: SegmentRules) -> Vec<RawSegment> {
    let qualifies = |r: &TelemetryRecord| {
        r.status == AcStatus::On
            && match r.mode {
                AcMode::Cooling => true,
                AcMode::Dehumidifying => !rules.cooling_only,
                AcMode::Other => false,
            }
    };
    let mut out = Vec::new();
    let mut i = 0;
    while i < stream.len() {
        if !qualifies(&stream[i]) {
            i += 1;
            continue;
        }
        let first = i;
        let mut last = i;
        while last + 1 < stream.len()
            && qualifies(&stream[last + 1])
            && stream[last + 1].timestamp - stream[last].timestamp <= rules.max_gap_s
        {
            last += 1;
        }
        let end = match stream.get(last + 1) {
            Some(next) if next.timestamp - stream[last].timestamp <= rules.max_gap_s => {
                next.timestamp
            }
            _ => stream[last].timestamp,
        };
        let start = stream[first].timestamp;
        if end > start {
            out.push(RawSegment { first, last, start, end });
        }
        i = last + 1;
    }
    out
}

/// Time-weighted mean of the nearest-record weather signal over
/// `[start, end)`. Parts of the window farther than `tolerance` from every
/// record are left out of both numerator and denominator.
///
/// Returns `(outdoor temp, humidity, irradiance)` or `None` if nothing is
/// covered. `weather` must be sorted by timestamp.
pub fn weather_means(
    weather: &[WeatherRecord],
    start: Timestamp,
    end: Timestamp,
    tolerance: i64,
) -> Option<[f64; 3]> {
    if weather.is_empty() || end <= start {
        return None;
    }
    let (s, e) = (start as f64, end as f64);
    let tol = tolerance as f64;
    let from = weather.partition_point(|w| w.timestamp + tolerance <= start);
    let mut acc = [0.0; 3];
    let mut covered = 0.0;
    for k in from..weather.len() {
        let w = &weather[k];
        if w.timestamp - tolerance >= end {
            break;
        }
        let t = w.timestamp as f64;
        let mut lo = t - tol;
        let mut hi = t + tol;
        if k > 0 {
            lo = lo.max(0.5 * (weather[k - 1].timestamp as f64 + t));
        }
        if k + 1 < weather.len() {
            hi = hi.min(0.5 * (t + weather[k + 1].timestamp as f64));
        }
        let len = hi.min(e) - lo.max(s);
        if len > 0.0 {
            acc[0] += w.outdoor_temp * len;
            acc[1] += w.rel_humidity * len;
            acc[2] += w.solar_irradiance * len;
            covered += len;
        }
    }
    if covered > 0.0 {
        Some([acc[0] / covered, acc[1] / covered, acc[2] / covered])
    } else {
        None
    }
}

/// Build the EPI and noisy factors of one raw segment.
pub fn compute_segment_features(
    stream: &[TelemetryRecord],
    raw: &RawSegment,
    weather: &[WeatherRecord],
    weather_tolerance_s: i64,
) -> Result<OperationSegment> {
    let records = &stream[raw.first..=raw.last];
    let mut w_sum = 0.0;
    let mut p = 0.0;
    let mut tr = 0.0;
    let mut tset = 0.0;
    for (j, r) in records.iter().enumerate() {
        let until = records.get(j + 1).map_or(raw.end, |n| n.timestamp);
        let d = (until - r.timestamp) as f64;
        w_sum += d;
        p += r.power * d;
        tr += r.indoor_temp * d;
        tset += r.set_point * d;
    }
    let [t_a, h_a, p_si] = weather_means(weather, raw.start, raw.end, weather_tolerance_s)
        .ok_or(Error::NoWeatherCoverage { start: raw.start, end: raw.end })?;
    Ok(OperationSegment {
        room_id: records[0].room_id.clone(),
        start: raw.start,
        end: raw.end,
        t_seg: (raw.end - raw.start) as f64,
        epi: p / w_sum,
        t_a,
        h_a,
        p_si,
        t_ri: records[0].indoor_temp,
        t_r: tr / w_sum,
        t_set: tset / w_sum,
    })
}

/// Extract and featurize every segment of one room stream.
pub fn room_segments(
    stream: &[TelemetryRecord],
    weather: &[WeatherRecord],
    cfg: &FilterConfig,
    rejects: &mut RejectTally,
) -> Vec<OperationSegment> {
    extract_segments(stream, SegmentRules::from(cfg))
        .iter()
        .filter_map(|raw| {
            match compute_segment_features(stream, raw, weather, cfg.weather_tolerance_s) {
                Ok(seg) => Some(seg),
                Err(_) => {
                    rejects.add(RejectReason::NoWeatherCoverage);
                    None
                }
            }
        })
        .collect()
}

fn segment_verdict(s: &OperationSegment, cfg: &FilterConfig) -> core::result::Result<(), RejectReason> {
    if !s.factors_finite() {
        return Err(RejectReason::NonFinite);
    }
    if s.t_seg < cfg.t_seg_min {
        return Err(RejectReason::TooShort);
    }
    if s.t_seg > cfg.t_seg_max {
        return Err(RejectReason::TooLong);
    }
    if !(s.h_a > 0.0 && s.h_a < 100.0) || s.p_si < 0.0 {
        return Err(RejectReason::InvalidFactor);
    }
    if s.epi < cfg.min_epi_w {
        return Err(RejectReason::EpiBelowFloor);
    }
    Ok(())
}

/// Keep segments with a duration inside `[t_seg_min, t_seg_max]` and
/// physically valid factors.
pub fn filter_segments(
    segments: Vec<OperationSegment>,
    cfg: &FilterConfig,
    rejects: &mut RejectTally,
) -> Vec<OperationSegment> {
    segments
        .into_iter()
        .filter(|s| match segment_verdict(s, cfg) {
            Ok(()) => true,
            Err(reason) => {
                rejects.add(reason);
                false
            }
        })
        .collect()
}

/// Half-open on-intervals of a stream, any mode. A record holds for at most
/// `max_gap_s`.
fn on_intervals(stream: &[TelemetryRecord], max_gap_s: i64) -> Vec<(Timestamp, Timestamp)> {
    let mut out: Vec<(Timestamp, Timestamp)> = Vec::new();
    for (j, r) in stream.iter().enumerate() {
        if r.status != AcStatus::On {
            continue;
        }
        let until = stream
            .get(j + 1)
            .map_or(r.timestamp + max_gap_s, |n| n.timestamp.min(r.timestamp + max_gap_s));
        match out.last_mut() {
            Some(last) if last.1 >= r.timestamp => last.1 = last.1.max(until),
            _ => out.push((r.timestamp, until)),
        }
    }
    out
}

fn compressor_of(stream: &[TelemetryRecord]) -> Option<&str> {
    stream.iter().find_map(|r| r.compressor_id.as_deref())
}

/// Drop segments during which another indoor unit on the same compressor
/// was on. A no-op unless `cfg.exclusive_multisplit` is set.
pub fn apply_multisplit_exclusion(
    segments: BTreeMap<String, Vec<OperationSegment>>,
    streams: &BTreeMap<String, Vec<TelemetryRecord>>,
    cfg: &FilterConfig,
    rejects: &mut RejectTally,
) -> Result<BTreeMap<String, Vec<OperationSegment>>> {
    if !cfg.exclusive_multisplit {
        return Ok(segments);
    }
    let mut compressor: BTreeMap<&str, &str> = BTreeMap::new();
    for (room, stream) in streams {
        let id = compressor_of(stream).ok_or_else(|| Error::MissingCompressorId(room.clone()))?;
        compressor.insert(room.as_str(), id);
    }
    let intervals: BTreeMap<&str, Vec<(Timestamp, Timestamp)>> = streams
        .iter()
        .map(|(room, s)| (room.as_str(), on_intervals(s, cfg.max_gap_s)))
        .collect();

    let mut out = BTreeMap::new();
    for (room, segs) in segments {
        let Some(&comp) = compressor.get(room.as_str()) else {
            return Err(Error::MissingCompressorId(room));
        };
        let siblings: Vec<&Vec<(Timestamp, Timestamp)>> = compressor
            .iter()
            .filter(|(r, c)| **c == comp && **r != room.as_str())
            .map(|(r, _)| &intervals[r])
            .collect();
        let kept: Vec<OperationSegment> = segs
            .into_iter()
            .filter(|s| {
                let clash = siblings
                    .iter()
                    .any(|iv| iv.iter().any(|&(a, b)| a < s.end && s.start < b));
                if clash {
                    rejects.add(RejectReason::SiblingOverlap);
                }
                !clash
            })
            .collect();
        out.insert(room, kept);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedRoom {
    pub room_id: String,
    pub n_seg: usize,
    pub reason: RejectReason,
}

/// Keep rooms with at least `n_seg_min` valid segments and known metadata.
pub fn filter_rooms(
    segments: BTreeMap<String, Vec<OperationSegment>>,
    metas: &[RoomMeta],
    cfg: &FilterConfig,
) -> Result<(Vec<RoomDataset>, Vec<DroppedRoom>)> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (room, segs) in segments {
        let n_seg = segs.len();
        let Some(meta) = metas.iter().find(|m| m.room_id == room) else {
            dropped.push(DroppedRoom { room_id: room, n_seg, reason: RejectReason::NoMetadata });
            continue;
        };
        if n_seg < cfg.n_seg_min {
            dropped.push(DroppedRoom { room_id: room, n_seg, reason: RejectReason::TooFewSegments });
            continue;
        }
        kept.push(RoomDataset { meta: meta.clone(), segments: segs });
    }
    if kept.is_empty() {
        return Err(Error::NoQualifiedRooms { n_seg_min: cfg.n_seg_min });
    }
    Ok((kept, dropped))
}
