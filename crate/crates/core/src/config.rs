//! JSON run configuration.
//!
//! A single document with sections `plant`, `bounds`, `integrator`, `de`
//! and `campaign`; every field defaults to the studied baseline, so an
//! empty object `{}` reproduces the reference setup (friction 0.3, spring
//! 2.5, damping 1.0, mass ratio 10, control in [-4, 4], horizon [0, 100],
//! K from 2 to 10, 5 trials).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{CampaignConfig, CampaignMode};
use crate::capsule::CapsuleParams;
use crate::fourier::ControlBounds;
use crate::integrator::IntegratorConfig;
use crate::optimizer::DeConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

/// Campaign-level settings (everything not owned by another section).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignSection {
    pub k_min: usize,
    pub k_max: usize,
    pub trials: usize,
    pub tau0: f64,
    pub tauf: f64,
    pub mode: CampaignMode,
    pub base_seed: u64,
    pub improvement_threshold: f64,
    pub omega_max: f64,
    pub span_floor: f64,
    pub span_ceiling: f64,
}

impl Default for CampaignSection {
    fn default() -> Self {
        let c = CampaignConfig::default();
        Self {
            k_min: c.k_min,
            k_max: c.k_max,
            trials: c.trials,
            tau0: c.tau0,
            tauf: c.tauf,
            mode: c.mode,
            base_seed: c.base_seed,
            improvement_threshold: c.improvement_threshold,
            omega_max: c.omega_max,
            span_floor: c.span_floor,
            span_ceiling: c.span_ceiling,
        }
    }
}

/// Top-level configuration document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub plant: CapsuleParams,
    pub bounds: ControlBounds,
    pub integrator: IntegratorConfig,
    pub de: DeConfig,
    pub campaign: CampaignSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        serde_json::from_str(&text)
            .map_err(|source| ConfigError::Parse { path: path.display().to_string(), source })
    }

    pub fn to_campaign(&self) -> CampaignConfig {
        CampaignConfig {
            k_min: self.campaign.k_min,
            k_max: self.campaign.k_max,
            trials: self.campaign.trials,
            tau0: self.campaign.tau0,
            tauf: self.campaign.tauf,
            plant: self.plant,
            bounds: self.bounds,
            integrator: self.integrator,
            de: self.de.clone(),
            mode: self.campaign.mode,
            base_seed: self.campaign.base_seed,
            improvement_threshold: self.campaign.improvement_threshold,
            omega_max: self.campaign.omega_max,
            span_floor: self.campaign.span_floor,
            span_ceiling: self.campaign.span_ceiling,
        }
    }

    /// Schema check without running anything; empty means valid.
    pub fn violations(&self) -> Vec<String> {
        self.to_campaign().violations()
    }

    pub fn validated(self) -> Result<Self, ConfigError> {
        let violations = self.violations();
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(ConfigError::Invalid(violations))
        }
    }
}

/// Command-line overrides layered on top of the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
    pub mode: Option<CampaignMode>,
}

impl Overrides {
    pub fn apply(&self, config: &mut FileConfig) {
        if let Some(seed) = self.seed {
            config.campaign.base_seed = seed;
        }
        if let Some(trials) = self.trials {
            config.campaign.trials = trials;
        }
        if let Some(k_min) = self.k_min {
            config.campaign.k_min = k_min;
        }
        if let Some(k_max) = self.k_max {
            config.campaign.k_max = k_max;
        }
        if let Some(mode) = self.mode {
            config.campaign.mode = mode;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_baseline() {
        let parsed: FileConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(parsed, FileConfig::default());
        assert!(parsed.violations().is_empty());
        let campaign = parsed.to_campaign();
        assert_eq!(campaign.plant.mu, 0.3);
        assert_eq!(campaign.plant.gamma, 10.0);
        assert_eq!(campaign.bounds.lower, -4.0);
        assert_eq!(campaign.bounds.upper, 4.0);
        assert_eq!(campaign.k_min, 2);
        assert_eq!(campaign.k_max, 10);
        assert_eq!(campaign.trials, 5);
        assert_eq!(campaign.integrator.abs_tol, 1e-9);
        assert_eq!(campaign.integrator.rel_tol, 1e-12);
    }

    #[test]
    fn sections_override_independently() {
        let doc = r#"{
            "plant": {"mu": 0.25},
            "bounds": {"m": -2.0, "M": 2.0},
            "campaign": {"k_min": 3, "k_max": 4, "mode": "noniterative"}
        }"#;
        let parsed: FileConfig = serde_json::from_str(doc).unwrap();
        assert_eq!(parsed.plant.mu, 0.25);
        assert_eq!(parsed.plant.rho, 2.5);
        assert_eq!(parsed.bounds.lower, -2.0);
        assert_eq!(parsed.campaign.k_min, 3);
        assert_eq!(parsed.campaign.mode, CampaignMode::NonIterative);
    }

    #[test]
    fn violations_surface_in_order() {
        let doc = r#"{"bounds": {"m": 4.0, "M": -4.0}, "campaign": {"span_ceiling": 1.2}}"#;
        let parsed: FileConfig = serde_json::from_str(doc).unwrap();
        let violations = parsed.violations();
        assert!(violations.iter().any(|v| v.contains("m < M")));
        assert!(violations.iter().any(|v| v.contains("span_ceiling")));
        assert!(parsed.validated().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let doc = r#"{"plnt": {"mu": 0.25}}"#;
        assert!(serde_json::from_str::<FileConfig>(doc).is_err());
    }

    #[test]
    fn overrides_apply() {
        let mut config = FileConfig::default();
        Overrides {
            seed: Some(9),
            trials: Some(2),
            k_min: Some(3),
            k_max: Some(5),
            mode: Some(CampaignMode::NonIterative),
        }
        .apply(&mut config);
        assert_eq!(config.campaign.base_seed, 9);
        assert_eq!(config.campaign.trials, 2);
        assert_eq!(config.campaign.k_min, 3);
        assert_eq!(config.campaign.k_max, 5);
        assert_eq!(config.campaign.mode, CampaignMode::NonIterative);
    }
}
