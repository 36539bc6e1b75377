//! Synthetic fleets written as ordinary input files.

use std::path::Path;

use acbench_core::thermsim::{self, Fleet, FleetSpec};
use serde::{Deserialize, Serialize};

use crate::artifacts::write_csv;
use crate::config::RunConfig;
use crate::error::{AppError, AppResult};

pub const GROUND_TRUTH: &str = "ground_truth.csv";
pub const RUN_CONFIG: &str = "run.toml";

/// Rooms on evenly spaced area levels with shuffled efficiencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Graded {
    pub areas: Vec<f64>,
    pub per_level: usize,
    pub eer_min: f64,
    pub eer_max: f64,
}

/// Fleet file: a full spec, or a graded layout whose rooms replace `rooms`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FleetFile {
    #[serde(flatten)]
    pub spec: FleetSpec,
    pub graded: Option<Graded>,
}

impl FleetFile {
    pub fn load(path: &Path) -> AppResult<FleetFile> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        toml::from_str(&text).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(&self, seed: Option<u64>) -> FleetSpec {
        let seed = seed.unwrap_or(self.spec.seed);
        let mut spec = match &self.graded {
            Some(g) => {
                let graded = thermsim::graded_fleet(seed, &g.areas, g.per_level, g.eer_min, g.eer_max);
                FleetSpec { rooms: graded.rooms, ..self.spec.clone() }
            }
            None => self.spec.clone(),
        };
        spec.seed = seed;
        spec
    }
}

/// Write telemetry, weather, room and ground-truth files plus a run config
/// pointing at them.
pub fn write_fleet(fleet: &Fleet, spec: &FleetSpec, dir: &Path) -> AppResult<()> {
    write_csv(&dir.join("telemetry.csv"), None, &fleet.telemetry)?;
    write_csv(&dir.join("weather.csv"), None, &fleet.weather)?;
    write_csv(&dir.join("rooms.csv"), None, &fleet.rooms)?;
    write_csv(&dir.join(GROUND_TRUTH), None, &fleet.truth)?;
    let mut cfg = RunConfig { seed: spec.seed, out: "out".into(), ..RunConfig::default() };
    cfg.filter.weather_tolerance_s = spec.weather_tolerance_s;
    let text = toml::to_string(&cfg).map_err(|e| AppError::Config(e.to_string()))?;
    let path = dir.join(RUN_CONFIG);
    std::fs::write(&path, text).map_err(|e| AppError::io(&path, e))
}

pub fn cmd_simulate(fleet_file: &Path, seed: Option<u64>, dir: &Path) -> AppResult<Fleet> {
    let spec = FleetFile::load(fleet_file)?.resolve(seed);
    let fleet = thermsim::generate_fleet(&spec)?;
    write_fleet(&fleet, &spec, dir)?;
    Ok(fleet)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_file_expands_rooms() {
        let f: FleetFile = toml::from_str(
            "seed = 4\nsegments_per_room = 20\n[graded]\nareas = [10.0, 30.0]\nper_level = 3\neer_min = 2.5\neer_max = 4.5\n",
        )
        .unwrap();
        let spec = f.resolve(None);
        assert_eq!(spec.rooms.len(), 6);
        assert_eq!((spec.seed, spec.segments_per_room), (4, 20));
        assert_eq!(f.resolve(Some(9)).seed, 9);
    }
}
