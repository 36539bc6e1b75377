//! Segment-integrated heat balance of a cooled room, and a generator of
//! synthetic fleets with known efficiency.
//!
//! Over one segment the average AC electric power is
//!
//! ```text
//! p = (1/EER) * [ -(C_a rho_a H_r A_r / t) (T_set - T_ri)
//!                 + (k_w A_w / U_w) (T_a - T_r)
//!                 + C_s2h p_si
//!                 + Q_hum / t ]
//! ```
//!
//! floored at zero. `Q_hum / t` is the mean internal gain over the segment
//! and is stored directly as a rate. Humidity has no term; the generator
//! uses it only to widen the measurement noise.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ingest::{self, AcMode, AcStatus, OperationSegment, RoomMeta, TelemetryRecord, Timestamp, WeatherRecord};
use crate::math::{ceil, exp, floor, sin, sqrt};
use crate::regress::FeatureVector;
use crate::rng::StreamKey;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Specific heat of air, J/(kg K).
    pub c_a: f64,
    /// Air density, kg/m³.
    pub rho_a: f64,
}

impl PhysicalConstants {
    pub const AIR: PhysicalConstants = PhysicalConstants { c_a: 1005.0, rho_a: 1.2 };
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::AIR
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomPhysical {
    /// Floor area A_r, m².
    pub area: f64,
    /// Ceiling height H_r, m.
    pub height: f64,
    /// Envelope area A_w, m².
    pub wall_area: f64,
    /// Envelope thickness U_w, m.
    pub wall_thickness: f64,
    /// Envelope conductivity k_w, W/(m K).
    pub conductivity: f64,
    pub eer: f64,
    /// Share of incident solar irradiance that ends up as room heat, m².
    pub c_s2h: f64,
    /// Mean internal moisture and occupant gain, W.
    pub q_hum_w: f64,
}

impl RoomPhysical {
    /// Envelope conductance `k_w A_w / U_w`, W/K.
    pub fn conductance(&self) -> f64 {
        self.conductivity * self.wall_area / self.wall_thickness
    }

    /// Air heat capacity `C_a rho_a H_r A_r`, J/K.
    pub fn heat_capacity(&self, c: &PhysicalConstants) -> f64 {
        c.c_a * c.rho_a * self.height * self.area
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [self.area, self.height, self.wall_area, self.wall_thickness, self.conductivity, self.eer];
        if !pos.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::InvalidSpec("room dimensions and EER must be positive".to_string()));
        }
        if !(self.c_s2h >= 0.0 && self.q_hum_w >= 0.0 && self.q_hum_w.is_finite() && self.c_s2h.is_finite()) {
            return Err(Error::InvalidSpec("c_s2h and q_hum_w must be nonnegative".to_string()));
        }
        Ok(())
    }
}

/// Segment-average conditions of one AC run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentScenario {
    /// Duration, s.
    pub t_seg: f64,
    pub t_set: f64,
    /// Indoor temperature when the AC was switched on.
    pub t_ri: f64,
    pub t_a: f64,
    pub t_r: f64,
    pub p_si: f64,
    pub h_a: f64,
}

impl SegmentScenario {
    pub fn features(&self) -> FeatureVector {
        FeatureVector([self.t_a, self.h_a, self.p_si, self.t_ri, self.t_r, self.t_seg, self.t_set])
    }

    pub fn from_features(x: &FeatureVector) -> SegmentScenario {
        let [t_a, h_a, p_si, t_ri, t_r, t_seg, t_set] = x.0;
        SegmentScenario { t_seg, t_set, t_ri, t_a, t_r, p_si, h_a }
    }
}

fn bracket(room: &RoomPhysical, s: &SegmentScenario) -> f64 {
    let c = PhysicalConstants::AIR;
    -room.heat_capacity(&c) / s.t_seg * (s.t_set - s.t_ri)
        + room.conductance() * (s.t_a - s.t_r)
        + room.c_s2h * s.p_si
        + room.q_hum_w
}

/// Segment-average AC electric power, W.
pub fn segment_power(room: &RoomPhysical, s: &SegmentScenario) -> f64 {
    (bracket(room, s) / room.eer).max(0.0)
}

/// Partial derivatives of [`segment_power`] in feature order
/// (`t_a, h_a, p_si, t_ri, t_r, t_seg, t_set`). All zero where the power is
/// floored.
pub fn segment_power_gradient(room: &RoomPhysical, s: &SegmentScenario) -> [f64; 7] {
    if bracket(room, s) <= 0.0 {
        return [0.0; 7];
    }
    let c = room.heat_capacity(&PhysicalConstants::AIR);
    let e = room.eer;
    [
        room.conductance() / e,
        0.0,
        room.c_s2h / e,
        c / s.t_seg / e,
        -room.conductance() / e,
        c * (s.t_set - s.t_ri) / (s.t_seg * s.t_seg) / e,
        -c / s.t_seg / e,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetPointChoice {
    pub value: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoomSpec {
    pub room_id: String,
    pub orientation: Option<String>,
    pub area: f64,
    pub height: f64,
    pub wall_area: f64,
    pub wall_thickness: f64,
    pub conductivity: f64,
    pub eer: f64,
    pub c_s2h: f64,
    pub q_hum_w: f64,
    /// The tenant's set-point habit.
    pub set_points: Vec<SetPointChoice>,
    pub t_seg_min_s: f64,
    pub t_seg_max_s: f64,
    /// Window for the switch-on time, hours of the day.
    pub start_hour_min: f64,
    pub start_hour_max: f64,
    pub t_ri_min: f64,
    pub t_ri_max: f64,
    /// Std of the segment-average room temperature around the set point.
    pub t_r_noise: f64,
    /// Rooms naming the same stream draw identical scenarios (timing, set
    /// points, initial temperatures). Defaults to the room id.
    pub scenario_stream: Option<String>,
}

impl Default for RoomSpec {
    fn default() -> Self {
        RoomSpec {
            room_id: String::new(),
            orientation: None,
            area: 15.0,
            height: 2.6,
            wall_area: 22.0,
            wall_thickness: 0.2,
            conductivity: 0.5,
            eer: 3.5,
            c_s2h: 0.2,
            q_hum_w: 80.0,
            set_points: vec![SetPointChoice { value: 25.0, weight: 1.0 }],
            t_seg_min_s: 3600.0,
            t_seg_max_s: 4.0 * 3600.0,
            start_hour_min: 9.0,
            start_hour_max: 14.0,
            t_ri_min: 27.0,
            t_ri_max: 31.0,
            t_r_noise: 0.5,
            scenario_stream: None,
        }
    }
}

impl RoomSpec {
    pub fn physical(&self) -> RoomPhysical {
        RoomPhysical {
            area: self.area,
            height: self.height,
            wall_area: self.wall_area,
            wall_thickness: self.wall_thickness,
            conductivity: self.conductivity,
            eer: self.eer,
            c_s2h: self.c_s2h,
            q_hum_w: self.q_hum_w,
        }
    }

    fn stream_label(&self) -> &str {
        self.scenario_stream.as_deref().unwrap_or(&self.room_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Log-scale std of the multiplicative EPI noise.
    pub sigma: f64,
    /// Extra relative noise at saturated humidity.
    pub humidity_gain: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { sigma: 0.1, humidity_gain: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeatherSpec {
    pub t_mean: f64,
    pub t_amplitude: f64,
    pub rh_mean: f64,
    pub rh_amplitude: f64,
    pub solar_peak: f64,
}

impl Default for WeatherSpec {
    fn default() -> Self {
        WeatherSpec { t_mean: 29.0, t_amplitude: 3.5, rh_mean: 75.0, rh_amplitude: 12.0, solar_peak: 850.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FleetSpec {
    pub seed: u64,
    /// Midnight of the first simulated day.
    pub start: Timestamp,
    pub segments_per_room: usize,
    pub telemetry_step_s: i64,
    pub weather_step_s: i64,
    /// Must match the ingest join tolerance for an exact round trip.
    pub weather_tolerance_s: i64,
    pub noise: NoiseSpec,
    pub weather: WeatherSpec,
    pub rooms: Vec<RoomSpec>,
}

impl Default for FleetSpec {
    fn default() -> Self {
        FleetSpec {
            seed: 0,
            start: 1_704_067_200,
            segments_per_room: 60,
            telemetry_step_s: 60,
            weather_step_s: 300,
            weather_tolerance_s: 900,
            noise: NoiseSpec::default(),
            weather: WeatherSpec::default(),
            rooms: Vec::new(),
        }
    }
}

const DAY: i64 = 86_400;

impl FleetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.rooms.is_empty() {
            return bad("fleet has no rooms".to_string());
        }
        if self.segments_per_room == 0 {
            return bad("segments_per_room must be positive".to_string());
        }
        if self.telemetry_step_s <= 0 || self.weather_step_s <= 0 || self.weather_tolerance_s < 0 {
            return bad("steps must be positive".to_string());
        }
        if !(self.noise.sigma >= 0.0 && self.noise.humidity_gain >= 0.0) {
            return bad("noise parameters must be nonnegative".to_string());
        }
        let mut ids = BTreeSet::new();
        for r in &self.rooms {
            let who = &r.room_id;
            if r.room_id.is_empty() || !ids.insert(r.room_id.as_str()) {
                return bad(format!("room id {who:?} is empty or repeated"));
            }
            r.physical().validate().map_err(|e| Error::InvalidSpec(format!("{who}: {e}")))?;
            if r.set_points.is_empty()
                || !r.set_points.iter().all(|c| c.weight > 0.0 && (16.0..=32.0).contains(&c.value))
            {
                return bad(format!("{who}: set points need positive weights and values in [16, 32]"));
            }
            let step = self.telemetry_step_s as f64;
            if !(r.t_seg_min_s >= 2.0 * step && r.t_seg_min_s <= r.t_seg_max_s) {
                return bad(format!("{who}: need 2 * telemetry step <= t_seg_min_s <= t_seg_max_s"));
            }
            if !(0.0 <= r.start_hour_min
                && r.start_hour_min <= r.start_hour_max
                && r.start_hour_max * 3600.0 + r.t_seg_max_s < DAY as f64)
            {
                return bad(format!("{who}: segments must fit inside one day"));
            }
            if !(r.t_ri_min <= r.t_ri_max && r.t_r_noise >= 0.0) {
                return bad(format!("{who}: invalid temperature ranges"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub room_id: String,
    #[serde(rename = "eer_o")]
    pub eer: f64,
    pub c_s2h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    pub rooms: Vec<RoomMeta>,
    pub telemetry: Vec<TelemetryRecord>,
    pub weather: Vec<WeatherRecord>,
    /// The segments as generated, for checking the ingest round trip.
    pub segments: Vec<OperationSegment>,
    pub truth: Vec<GroundTruth>,
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn weather_series(spec: &FleetSpec, days: i64) -> Vec<WeatherRecord> {
    let w = &spec.weather;
    let mut rng = StreamKey::new(spec.seed).with_str("weather").rng();
    let mut out = Vec::new();
    let first = spec.start - DAY;
    let last = spec.start + (days + 1) * DAY;
    let mut day_offset = 0.0;
    let mut cloud = 1.0;
    let mut t = first;
    while t <= last {
        let sec = (t - spec.start).rem_euclid(DAY);
        if sec < spec.weather_step_s {
            day_offset = 0.8 * normal(&mut rng);
            cloud = rng.random_range(0.6..1.0);
        }
        let hour = sec as f64 / 3600.0;
        let phase = sin(core::f64::consts::PI * (hour - 9.0) / 12.0);
        let sun = sin(core::f64::consts::PI * (hour - 7.0) / 12.0).max(0.0);
        out.push(WeatherRecord {
            timestamp: t,
            outdoor_temp: w.t_mean + day_offset + w.t_amplitude * phase + 0.2 * normal(&mut rng),
            rel_humidity: (w.rh_mean - w.rh_amplitude * phase + 1.5 * normal(&mut rng)).clamp(5.0, 99.0),
            solar_irradiance: (w.solar_peak * sun * cloud * (1.0 + 0.05 * normal(&mut rng))).max(0.0),
        });
        t += spec.weather_step_s;
    }
    out
}

fn pick_set_point<R: Rng>(choices: &[SetPointChoice], rng: &mut R) -> f64 {
    let total: f64 = choices.iter().map(|c| c.weight).sum();
    let mut u = rng.random_range(0.0..total);
    for c in choices {
        if u < c.weight {
            return c.value;
        }
        u -= c.weight;
    }
    choices[choices.len() - 1].value
}

fn round_to(v: f64, step: i64) -> i64 {
    floor(v / step as f64 + 0.5) as i64 * step
}

/// Generate weather, telemetry and the ground truth for a fleet. Each room
/// runs its AC once a day; the telemetry reproduces the drawn segment
/// averages exactly under sample-and-hold integration.
pub fn generate_fleet(spec: &FleetSpec) -> Result<Fleet> {
    spec.validate()?;
    let n = spec.segments_per_room;
    let weather = weather_series(spec, n as i64);
    let step = spec.telemetry_step_s;
    let mut telemetry = Vec::new();
    let mut segments = Vec::new();

    for room in &spec.rooms {
        let phys = room.physical();
        let mut scen_rng = StreamKey::new(spec.seed).with_str("scenario").with_str(room.stream_label()).rng();
        let mut noise_rng = StreamKey::new(spec.seed).with_str("noise").with_str(&room.room_id).rng();
        for k in 0..n {
            let hour = if room.start_hour_max > room.start_hour_min {
                scen_rng.random_range(room.start_hour_min..=room.start_hour_max)
            } else {
                room.start_hour_min
            };
            let start = spec.start + k as i64 * DAY + round_to(hour * 3600.0, step);
            let span = if room.t_seg_max_s > room.t_seg_min_s {
                scen_rng.random_range(room.t_seg_min_s..=room.t_seg_max_s)
            } else {
                room.t_seg_min_s
            };
            let lo = ceil(room.t_seg_min_s / step as f64) as i64 * step;
            let hi = floor(room.t_seg_max_s / step as f64) as i64 * step;
            let t_seg = round_to(span, step).clamp(lo, hi.max(lo));
            let end = start + t_seg;
            let t_set = pick_set_point(&room.set_points, &mut scen_rng);
            let t_ri = if room.t_ri_max > room.t_ri_min {
                scen_rng.random_range(room.t_ri_min..=room.t_ri_max)
            } else {
                room.t_ri_min
            };
            let t_r = t_set + room.t_r_noise * normal(&mut scen_rng);
            let [t_a, h_a, p_si] = ingest::weather_means(&weather, start, end, spec.weather_tolerance_s)
                .ok_or(Error::NoWeatherCoverage { start, end })?;
            let scen = SegmentScenario { t_seg: t_seg as f64, t_set, t_ri, t_a, t_r, p_si, h_a };
            let clean = segment_power(&phys, &scen);
            let g = normal(&mut noise_rng);
            let sigma = spec.noise.sigma * (1.0 + spec.noise.humidity_gain * ((h_a - 40.0) / 60.0).clamp(0.0, 1.0));
            let epi = clean * exp(sigma * g - 0.5 * sigma * sigma);

            let count = (t_seg / step) as usize;
            let rest = (count as f64 * t_r - t_ri) / (count as f64 - 1.0);
            for j in 0..count {
                telemetry.push(TelemetryRecord {
                    timestamp: start + j as i64 * step,
                    room_id: room.room_id.clone(),
                    status: AcStatus::On,
                    mode: AcMode::Cooling,
                    set_point: t_set,
                    indoor_temp: if j == 0 { t_ri } else { rest },
                    power: epi,
                    compressor_id: None,
                });
            }
            telemetry.push(TelemetryRecord {
                timestamp: end,
                room_id: room.room_id.clone(),
                status: AcStatus::Off,
                mode: AcMode::Cooling,
                set_point: t_set,
                indoor_temp: t_r,
                power: 0.0,
                compressor_id: None,
            });
            segments.push(OperationSegment {
                room_id: room.room_id.clone(),
                start,
                end,
                t_seg: t_seg as f64,
                epi,
                t_a,
                h_a,
                p_si,
                t_ri,
                t_r,
                t_set,
            });
        }
    }
    let rooms = spec
        .rooms
        .iter()
        .map(|r| RoomMeta { room_id: r.room_id.clone(), area: r.area, orientation: r.orientation.clone() })
        .collect();
    let truth = spec
        .rooms
        .iter()
        .map(|r| GroundTruth { room_id: r.room_id.clone(), eer: r.eer, c_s2h: r.c_s2h })
        .collect();
    Ok(Fleet { rooms, telemetry, weather, segments, truth })
}

/// Rooms on `areas.len()` area levels, `per_level` rooms each, with EERs
/// evenly spread over `[eer_lo, eer_hi]` and shuffled within each level.
/// Rooms of one level share their scenario draws and differ only in EER.
pub fn graded_fleet(seed: u64, areas: &[f64], per_level: usize, eer_lo: f64, eer_hi: f64) -> FleetSpec {
    let mut rooms = Vec::new();
    for (level, &area) in areas.iter().enumerate() {
        let mut eers: Vec<f64> = (0..per_level)
            .map(|j| {
                if per_level > 1 {
                    eer_lo + (eer_hi - eer_lo) * j as f64 / (per_level - 1) as f64
                } else {
                    0.5 * (eer_lo + eer_hi)
                }
            })
            .collect();
        eers.shuffle(&mut StreamKey::new(seed).with_str("eer").with_u64(level as u64).rng());
        for (j, eer) in eers.into_iter().enumerate() {
            rooms.push(RoomSpec {
                room_id: format!("L{}-R{}", level + 1, j + 1),
                area,
                wall_area: 4.0 * sqrt(area) * 2.6 * 0.6,
                q_hum_w: 40.0 + 4.0 * area,
                eer,
                set_points: vec![
                    SetPointChoice { value: 23.0, weight: 1.0 },
                    SetPointChoice { value: 24.0, weight: 2.0 },
                    SetPointChoice { value: 25.0, weight: 4.0 },
                    SetPointChoice { value: 26.0, weight: 2.0 },
                    SetPointChoice { value: 27.0, weight: 1.0 },
                ],
                scenario_stream: Some(format!("level-{}", level + 1)),
                ..RoomSpec::default()
            });
        }
    }
    FleetSpec { seed, rooms, ..FleetSpec::default() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{FilterConfig, RejectTally};

    fn fixture_room() -> RoomPhysical {
        // conductance 20 W/K, heat capacity 1005 * 1.2 * 2.6 * 12
        RoomPhysical {
            area: 12.0,
            height: 2.6,
            wall_area: 10.0,
            wall_thickness: 0.25,
            conductivity: 0.5,
            eer: 3.0,
            c_s2h: 0.3,
            q_hum_w: 0.0,
        }
    }

    fn fixture_scenario() -> SegmentScenario {
        SegmentScenario { t_seg: 7200.0, t_set: 24.0, t_ri: 30.0, t_a: 33.0, t_r: 25.0, p_si: 400.0, h_a: 70.0 }
    }

    #[test]
    fn hand_evaluated_segment() {
        let p = segment_power(&fixture_room(), &fixture_scenario());
        let expected = (1005.0 * 1.2 * 2.6 * 12.0 * 6.0 / 7200.0 + 160.0 + 120.0) / 3.0;
        assert!((p - expected).abs() < 1e-12);
        assert!((p - 103.785).abs() < 1e-3, "{p}");
    }

    #[test]
    fn vanishing_terms_give_zero() {
        let mut s = fixture_scenario();
        s.t_set = s.t_ri;
        s.t_a = s.t_r;
        s.p_si = 0.0;
        assert_eq!(segment_power(&fixture_room(), &s), 0.0);
    }

    #[test]
    fn doubling_eer_halves_power() {
        let mut r = fixture_room();
        let p = segment_power(&r, &fixture_scenario());
        r.eer *= 2.0;
        assert!((segment_power(&r, &fixture_scenario()) - 0.5 * p).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = StreamKey::new(77).rng();
        for _ in 0..200 {
            let room = RoomPhysical {
                area: rng.random_range(8.0..60.0),
                height: rng.random_range(2.4..3.2),
                wall_area: rng.random_range(5.0..40.0),
                wall_thickness: rng.random_range(0.1..0.4),
                conductivity: rng.random_range(0.2..1.5),
                eer: rng.random_range(2.0..6.0),
                c_s2h: rng.random_range(0.05..1.0),
                q_hum_w: rng.random_range(0.0..200.0),
            };
            let s = SegmentScenario {
                t_seg: rng.random_range(3600.0..30000.0),
                t_set: rng.random_range(20.0..28.0),
                t_ri: rng.random_range(26.0..33.0),
                t_a: rng.random_range(29.0..36.0),
                t_r: rng.random_range(22.0..27.0),
                p_si: rng.random_range(0.0..900.0),
                h_a: rng.random_range(40.0..95.0),
            };
            let x = s.features();
            let grad = segment_power_gradient(&room, &s);
            for j in 0..7 {
                let h = 1e-4 * (1.0 + x.0[j].abs());
                let (mut up, mut down) = (x, x);
                up.0[j] += h;
                down.0[j] -= h;
                let fd = (segment_power(&room, &SegmentScenario::from_features(&up))
                    - segment_power(&room, &SegmentScenario::from_features(&down)))
                    / (2.0 * h);
                assert!((fd - grad[j]).abs() <= 1e-6 * (1.0 + grad[j].abs()), "feature {j}: {fd} vs {}", grad[j]);
            }
            // linear in p_si and in the temperature difference
            let mut s2 = s;
            s2.p_si += 100.0;
            let dp = segment_power(&room, &s2) - segment_power(&room, &s);
            assert!((dp - 100.0 * room.c_s2h / room.eer).abs() < 1e-9 * (1.0 + dp.abs()));
        }
    }

    fn small_spec(sigma: f64) -> FleetSpec {
        let mut spec = graded_fleet(5, &[12.0, 30.0], 2, 3.0, 4.0);
        spec.noise.sigma = sigma;
        spec.segments_per_room = 25;
        spec
    }

    #[test]
    fn noiseless_fleet_follows_physics() {
        let spec = small_spec(0.0);
        let fleet = generate_fleet(&spec).unwrap();
        assert_eq!(fleet.segments.len(), 4 * 25);
        for seg in &fleet.segments {
            let room = spec.rooms.iter().find(|r| r.room_id == seg.room_id).unwrap();
            let scen = SegmentScenario::from_features(&seg.features());
            assert_eq!(seg.epi, segment_power(&room.physical(), &scen));
        }
    }

    #[test]
    fn shared_scenarios_order_by_eer() {
        let fleet = generate_fleet(&small_spec(0.0)).unwrap();
        let by = |id: &str| fleet.segments.iter().filter(|s| s.room_id == id).collect::<Vec<_>>();
        let truth = |id: &str| fleet.truth.iter().find(|t| t.room_id == id).unwrap().eer;
        let (a, b) = (by("L1-R1"), by("L1-R2"));
        let (lo, hi) = if truth("L1-R1") > truth("L1-R2") { (a, b) } else { (b, a) };
        for (x, y) in lo.iter().zip(&hi) {
            assert_eq!(x.features(), y.features());
            assert!(x.epi < y.epi);
        }
    }

    #[test]
    fn ingest_round_trip() {
        let spec = small_spec(0.1);
        let fleet = generate_fleet(&spec).unwrap();
        let cfg = FilterConfig::default();
        let mut tally = RejectTally::default();
        let streams = ingest::into_room_streams(fleet.telemetry.clone(), &mut tally);
        let weather = ingest::sort_weather(fleet.weather.clone(), &mut tally);
        let mut got = Vec::new();
        for stream in streams.values() {
            got.extend(ingest::room_segments(stream, &weather, &cfg, &mut tally));
        }
        assert_eq!(tally.total(), 0);
        assert_eq!(got.len(), fleet.segments.len());
        let mut want = fleet.segments.clone();
        want.sort_by(|a, b| (a.room_id.as_str(), a.start).cmp(&(b.room_id.as_str(), b.start)));
        for (g, w) in got.iter().zip(&want) {
            assert_eq!((&g.room_id, g.start, g.end), (&w.room_id, w.start, w.end));
            for (u, v) in g.features().0.iter().zip(w.features().0) {
                assert!((u - v).abs() <= 1e-9 * (1.0 + v.abs()), "{u} vs {v}");
            }
            assert!((g.epi - w.epi).abs() <= 1e-9 * w.epi);
        }
    }

    #[test]
    fn fleet_shape_and_determinism() {
        let mut spec = graded_fleet(1, &[10.0, 20.0, 35.0, 55.0], 5, 2.5, 4.5);
        assert_eq!(spec.rooms.len(), 20);
        let a = generate_fleet(&spec).unwrap();
        assert_eq!(a.segments.len(), 1200);
        assert_eq!(a, generate_fleet(&spec).unwrap());
        for level in 0..4 {
            let mut eers: Vec<f64> = spec.rooms[5 * level..5 * level + 5].iter().map(|r| r.eer).collect();
            eers.sort_by(f64::total_cmp);
            assert_eq!(eers, [2.5, 3.0, 3.5, 4.0, 4.5]);
        }
        spec.rooms[0].set_points.clear();
        assert!(matches!(generate_fleet(&spec), Err(Error::InvalidSpec(_))));
    }
}
