//! Top-level run configuration, read from JSON with every field defaulted.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DflError, Result};
use crate::link_state::{Emission, HmmConfig};
use crate::simulator::ScenarioConfig;
use crate::spectral::SpectralConfig;
use crate::tracker::{MeasurementModel, TrackerConfig};

/// Link-state HMM settings. Unset emissions are derived from the empty-room noise
/// level measured during calibration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct HmmSettings {
    pub emissions: Option<[Emission; 3]>,
    pub transition: Option<[[f64; 3]; 3]>,
    pub initial: Option<[f64; 3]>,
    pub feature_window: Option<usize>,
    /// Overrides the calibrated noise level, dB.
    pub noise_level: Option<f64>,
}

impl HmmSettings {
    pub fn resolve(&self, calibrated_noise: f64) -> Result<HmmConfig> {
        let noise = self.noise_level.unwrap_or(calibrated_noise);
        let noise = if noise.is_finite() { noise } else { 0.5 };
        let mut cfg = HmmConfig::for_noise_level(noise);
        if let Some(e) = self.emissions {
            cfg.emissions = e;
        }
        if let Some(t) = self.transition {
            cfg.transition = t;
        }
        if let Some(i) = self.initial {
            cfg.initial = i;
        }
        if let Some(w) = self.feature_window {
            cfg.feature_window = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioConfig,
    pub spectral: SpectralConfig,
    pub tracker: TrackerConfig,
    pub hmm: HmmSettings,
    /// Leading seconds of a trace used for the empty-room means.
    pub calibration_window: f64,
    /// Prior walking direction for track initialization, radians. Defaults to the
    /// scenario heading.
    pub heading_hint: Option<f64>,
}

impl Default for Config {
    fn default() -> Self {
        let scenario = ScenarioConfig::default();
        Self {
            calibration_window: scenario.preamble,
            scenario,
            spectral: SpectralConfig::default(),
            tracker: TrackerConfig::default(),
            hmm: HmmSettings::default(),
            heading_hint: None,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| DflError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DflError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.spectral.validate()?;
        self.tracker.validate()?;
        self.hmm.resolve(0.5)?;
        if (self.scenario.sample_interval - self.spectral.sample_interval).abs() > 1e-12 {
            return Err(DflError::config(
                "scenario.sample_interval and spectral.sample_interval must agree",
            ));
        }
        if !(self.calibration_window > 0.0) {
            return Err(DflError::config("calibration_window must be positive"));
        }
        if self.heading_hint.is_some_and(|h| !h.is_finite()) {
            return Err(DflError::config("heading_hint must be finite"));
        }
        Ok(())
    }

    pub fn heading_hint(&self) -> f64 {
        self.heading_hint.unwrap_or(self.scenario.trajectory.heading)
    }

    pub fn measurement_model(&self) -> MeasurementModel {
        MeasurementModel {
            reflection: self.scenario.reflection,
            ellipse: self.scenario.ellipse,
            spectral: self.spectral.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = Config::from_json("{}").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.tracker.particles, 512);
        assert_eq!(cfg.spectral.window_len, 20);
        assert_eq!(cfg.scenario.channels, 16);
    }

    #[test]
    fn round_trips_through_json() {
        let mut cfg = Config::default();
        cfg.tracker.use_frequency = false;
        cfg.hmm.noise_level = Some(1.0);
        assert_eq!(Config::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn nested_override() {
        let cfg = Config::from_json(r#"{"tracker": {"measurement_noise": [[3.0, 0.0], [0.0, 1.0]]}}"#).unwrap();
        assert_eq!(cfg.tracker.measurement_noise.covariance(), [[3.0, 0.0], [0.0, 1.0]]);
        assert_eq!(cfg.tracker.particles, 512);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(Config::from_json(r#"{"spectral": {"sample_interval": 0.05}}"#).is_err());
        assert!(Config::from_json(r#"{"tracker": {"measurement_noise": [[1.0, 2.0], [2.0, 1.0]]}}"#).is_err());
        assert!(Config::from_json(r#"{"no_such_field": 1}"#).is_err());
        assert!(Config::from_json("not json").is_err());
    }
}
