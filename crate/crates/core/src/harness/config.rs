use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{build_octagon_track, GeometryError, TrackSpec};
use crate::traffic::{Mode, SimConfig, SimError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid parameter `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

impl From<SimError> for ConfigError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig { key, reason } => ConfigError::Invalid {
                key: key.to_string(),
                reason,
            },
            other => ConfigError::Invalid {
                key: "sim".into(),
                reason: other.to_string(),
            },
        }
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackConfig {
    pub straight_len: f64,
    pub arc_radius: f64,
    pub lane_count: usize,
    pub lane_width: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            straight_len: 80.0,
            arc_radius: 40.0,
            lane_count: 3,
            lane_width: 3.5,
        }
    }
}

impl TrackConfig {
    pub fn build(&self) -> Result<TrackSpec, ConfigError> {
        build_octagon_track(self.straight_len, self.arc_radius, self.lane_count, self.lane_width).map_err(
            |e| {
                let key = match e {
                    GeometryError::ArcTooTight { .. } => "track.arc_radius",
                    _ => "track",
                };
                invalid(key, e.to_string())
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixConfig {
    pub thresholds: Vec<f64>,
    pub modes: Vec<Mode>,
    pub base_seed: u64,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            thresholds: vec![50.0, 75.0, 100.0, 150.0],
            modes: Mode::ALL.to_vec(),
            base_seed: 1,
        }
    }
}

/// Whole experiment description as read from a TOML file. Every section and
/// key is optional; omitted values take the defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub track: TrackConfig,
    pub sim: SimConfig,
    pub matrix: MatrixConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.track.build()?;
        self.sim.validate()?;
        if self.matrix.thresholds.is_empty() {
            return Err(invalid("matrix.thresholds", "need at least one threshold"));
        }
        if self.matrix.thresholds.iter().any(|t| !(*t > 0.0)) {
            return Err(invalid("matrix.thresholds", "thresholds must be > 0"));
        }
        if self.matrix.modes.is_empty() {
            return Err(invalid("matrix.modes", "need at least one mode"));
        }
        Ok(())
    }

    /// The (threshold, mode) runs in index order: threshold-major.
    pub fn runs(&self) -> Vec<RunSpec> {
        let mut out = Vec::new();
        for &thresh in &self.matrix.thresholds {
            for &mode in &self.matrix.modes {
                let index = out.len();
                let mut sim = self.sim.clone();
                sim.tv_dist_thresh = thresh;
                sim.mode = mode;
                sim.rng_seed = self.matrix.base_seed.wrapping_add(index as u64);
                out.push(RunSpec { index, sim });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub index: usize,
    pub sim: SimConfig,
}

impl RunSpec {
    pub fn name(&self) -> String {
        format!("run_{:02}_{}_{}", self.index, self.sim.mode.as_str(), self.sim.tv_dist_thresh)
    }
}
