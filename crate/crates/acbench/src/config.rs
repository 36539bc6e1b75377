//! Run configuration, read from TOML and overridden by command-line flags.

use std::path::{Path, PathBuf};

use acbench_core::ingest::FilterConfig;
use acbench_core::selection::CvConfig;
use acbench_core::ModelStructure;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub telemetry: PathBuf,
    pub weather: PathBuf,
    pub rooms: PathBuf,
}

impl Default for Inputs {
    fn default() -> Self {
        Inputs {
            telemetry: PathBuf::from("telemetry.csv"),
            weather: PathBuf::from("weather.csv"),
            rooms: PathBuf::from("rooms.csv"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSection {
    pub k_cv: usize,
    pub n_cv: usize,
}

impl Default for CvSection {
    fn default() -> Self {
        CvSection { k_cv: 10, n_cv: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection { k_min: 2, k_max: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringSection {
    pub sample_size: usize,
    /// Also write every draw to `scores_draws.csv`.
    pub write_draws: bool,
}

impl Default for ScoringSection {
    fn default() -> Self {
        ScoringSection { sample_size: acbench_core::scoring::DEFAULT_SAMPLE_SIZE, write_draws: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub factor: String,
    pub points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { factor: "t_set".to_string(), points: 11 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; 0 uses one per core.
    pub threads: usize,
    pub inputs: Inputs,
    pub filter: FilterConfig,
    pub cv: CvSection,
    pub structures: Vec<ModelStructure>,
    pub cluster: ClusterSection,
    pub scoring: ScoringSection,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("out"),
            threads: 0,
            inputs: Inputs::default(),
            filter: FilterConfig::default(),
            cv: CvSection::default(),
            structures: ModelStructure::ALL.to_vec(),
            cluster: ClusterSection::default(),
            scoring: ScoringSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl RunConfig {
    /// Load a TOML file. Relative input paths are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> AppResult<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.inputs.telemetry, &mut cfg.inputs.weather, &mut cfg.inputs.rooms, &mut cfg.out] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig { k_cv: self.cv.k_cv, n_cv: self.cv.n_cv, seed: self.seed }
    }

    pub fn validate(&self) -> AppResult<()> {
        self.cv_config().validate()?;
        self.filter.validate(self.cv.k_cv)?;
        if self.structures.is_empty() {
            return Err(AppError::Config("structure list is empty".to_string()));
        }
        if self.scoring.sample_size == 0 {
            return Err(AppError::Config("scoring.sample_size must be positive".to_string()));
        }
        if self.cluster.k_min < 2 || self.cluster.k_min > self.cluster.k_max {
            return Err(AppError::Config(format!(
                "invalid cluster k range {}..={}",
                self.cluster.k_min, self.cluster.k_max
            )));
        }
        Ok(())
    }

    /// Short digest of every setting that can change a numeric output.
    /// The output directory and thread count are left out.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.out = PathBuf::new();
        canon.threads = 0;
        let json = serde_json::to_string(&canon).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse `lr-normal,svr-gkn` style lists.
pub fn parse_structures(list: &str) -> AppResult<Vec<ModelStructure>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<ModelStructure>().map_err(AppError::from))
        .collect()
}
