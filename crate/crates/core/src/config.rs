//! Pipeline configuration, read from and written to TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activeness::CategoryBounds;
use crate::error::{Error, Result};
use crate::kmeans::KMeansParams;
use crate::similarity::{validate_sessions, SessionSpec};
use crate::spectral::{ClusterConfig, Weights};

pub const DEFAULT_MIN_VALID_FRACTION: f64 = 0.10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputPaths {
    pub readings: PathBuf,
    pub static_features: PathBuf,
    /// Holiday calendar; without one every date is labelled by weekday.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calendar: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WiedConfig {
    pub window_bins: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputPaths,
    #[serde(default = "default_min_valid")]
    pub min_valid_fraction: f64,
    #[serde(default = "default_wied")]
    pub wied: WiedConfig,
    #[serde(default = "SessionSpec::defaults")]
    pub sessions: [SessionSpec; 4],
    #[serde(default)]
    pub weights: Weights,
    #[serde(default = "default_k_range")]
    pub k_range: (usize, usize),
    #[serde(default)]
    pub kmeans: KMeansParams,
    #[serde(default)]
    pub category_bounds: CategoryBounds,
    #[serde(default)]
    pub significance_margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_min_valid() -> f64 {
    DEFAULT_MIN_VALID_FRACTION
}

fn default_wied() -> WiedConfig {
    WiedConfig { window_bins: 2 }
}

fn default_k_range() -> (usize, usize) {
    (2, 10)
}

impl PipelineConfig {
    /// Defaults for everything except the inputs.
    pub fn new(readings: impl Into<PathBuf>, static_features: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            input: InputPaths {
                readings: readings.into(),
                static_features: static_features.into(),
                calendar: None,
            },
            min_valid_fraction: DEFAULT_MIN_VALID_FRACTION,
            wied: default_wied(),
            sessions: SessionSpec::defaults(),
            weights: Weights::default(),
            k_range: default_k_range(),
            kmeans: KMeansParams::default(),
            category_bounds: CategoryBounds::default(),
            significance_margin: 0.0,
            output_dir: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative input and output paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.input.readings);
        resolve(&mut cfg.input.static_features);
        if let Some(c) = cfg.input.calendar.as_mut() {
            resolve(c);
        }
        if let Some(o) = cfg.output_dir.as_mut() {
            resolve(o);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_valid_fraction) {
            return Err(Error::Config(format!(
                "min_valid_fraction must lie in [0, 1], got {}",
                self.min_valid_fraction
            )));
        }
        if !(self.significance_margin >= 0.0 && self.significance_margin.is_finite()) {
            return Err(Error::Config("significance_margin must be non-negative".into()));
        }
        if self.k_range.0 < 2 || self.k_range.0 > self.k_range.1 {
            return Err(Error::Config(format!("k_range {:?} is invalid", self.k_range)));
        }
        self.weights.validate()?;
        self.category_bounds.validate()?;
        validate_sessions(&self.sessions)
    }

    pub fn cluster_config(&self) -> ClusterConfig {
        ClusterConfig {
            weights: self.weights,
            window_bins: self.wied.window_bins,
            sessions: self.sessions,
            k_range: self.k_range,
            kmeans: self.kmeans,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let cfg = PipelineConfig::from_toml(
            "[input]\nreadings = \"r.csv\"\nstatic_features = \"s.csv\"\n",
        )
        .unwrap();
        assert_eq!(cfg, PipelineConfig::new("r.csv", "s.csv"));
        assert_eq!(cfg.min_valid_fraction, 0.10);
        assert_eq!(cfg.weights, Weights { w1: 0.5, w2: 0.5 });
        assert_eq!(cfg.category_bounds.0, [0.30, 0.20, 0.10, 0.03]);
    }

    #[test]
    fn round_trip() {
        let mut cfg = PipelineConfig::new("a/r.csv", "s.csv");
        cfg.input.calendar = Some("cal.toml".into());
        cfg.weights = Weights { w1: 0.3, w2: 0.7 };
        cfg.kmeans.seed = 7;
        cfg.k_range = (3, 6);
        cfg.significance_margin = 0.05;
        cfg.output_dir = Some("out".into());
        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_values() {
        let base = "[input]\nreadings = \"r\"\nstatic_features = \"s\"\n";
        for extra in [
            "min_valid_fraction = 1.5\n",
            "k_range = [1, 4]\n",
            "[weights]\nw1 = 0.9\nw2 = 0.9\n",
            "unknown_key = 1\n",
        ] {
            let text = if extra.starts_with('[') { format!("{base}{extra}") } else { format!("{extra}{base}") };
            assert!(matches!(PipelineConfig::from_toml(&text), Err(Error::Config(_))), "{extra}");
        }
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "[input]\nreadings = \"r.csv\"\nstatic_features = \"/abs/s.csv\"\n").unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.input.readings, dir.path().join("r.csv"));
        assert_eq!(cfg.input.static_features, PathBuf::from("/abs/s.csv"));
    }
}
