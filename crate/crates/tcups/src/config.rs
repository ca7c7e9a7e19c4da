//! Run configuration (strict TOML schema) and the reproducibility manifest.
//!
//! Unknown keys are rejected; validation happens before any simulation
//! starts. Environment variables `TCUPS_OUT` and `TCUPS_SEED` may override
//! the output directory and the ensemble seed — nothing else.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classical::PhaseModel;
use crate::instrument::{Grating, InstrumentModel, NoiseModel};
use crate::physics::MaterialParams;
use crate::quantum::LangevinParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("TCUPS_SEED must be an unsigned integer, got {0:?}")]
    BadSeedOverride(String),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

// ─── Sections ───────────────────────────────────────────────────────

/// Pump pulse-pair parameters and shot count metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExcitationConfig {
    pub pump_wavelength_nm: f64,
    pub pulse_duration_fs: f64,
    pub pulse_energies_pj: Vec<f64>,
    pub delays_ps: Vec<f64>,
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        Self {
            pump_wavelength_nm: 788.0,
            pulse_duration_fs: 80.0,
            pulse_energies_pj: vec![380.0],
            delays_ps: vec![0.4, 0.85, 1.3, 1.75, 2.2, 2.65, 3.1, 3.55, 4.0],
        }
    }
}

impl ExcitationConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.pump_wavelength_nm > 0.0) {
            return Err(invalid("excitation.pump_wavelength_nm", "must be > 0"));
        }
        if !(self.pulse_duration_fs > 0.0) {
            return Err(invalid("excitation.pulse_duration_fs", "must be > 0"));
        }
        if self.pulse_energies_pj.is_empty() || self.pulse_energies_pj.iter().any(|&e| !(e > 0.0)) {
            return Err(invalid(
                "excitation.pulse_energies_pj",
                "must be a non-empty list of positive energies",
            ));
        }
        if self.delays_ps.is_empty() {
            return Err(invalid("excitation.delays_ps", "must not be empty"));
        }
        if self.delays_ps.iter().any(|&d| !(d > 0.0)) {
            return Err(invalid("excitation.delays_ps", "delays must be > 0"));
        }
        if self.delays_ps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid(
                "excitation.delays_ps",
                "delays must be strictly increasing",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub shots: u64,
    pub seed: u64,
    pub phase_model: PhaseModel,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            shots: 10_000,
            seed: 7,
            phase_model: PhaseModel::CauchyFrequency,
        }
    }
}

/// Grating selection by ruling, or fully custom optics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GratingSelect {
    #[serde(rename = "150")]
    Ruled150,
    #[serde(rename = "1800")]
    Ruled1800,
    #[serde(rename = "custom")]
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstrumentConfig {
    pub grating: GratingSelect,
    /// Override (or, for `custom`, define) the response FWHM.
    pub resolution_fwhm_nm: Option<f64>,
    /// Override (or, for `custom`, define) the pixel width.
    pub pixel_width_nm: Option<f64>,
    pub efficiency: f64,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl Default for InstrumentConfig {
    fn default() -> Self {
        Self {
            grating: GratingSelect::Ruled1800,
            resolution_fwhm_nm: None,
            pixel_width_nm: None,
            efficiency: 0.9,
            noise: NoiseModel::Poisson,
            seed: 99,
        }
    }
}

impl InstrumentConfig {
    pub fn resolve(&self) -> Result<InstrumentModel, ConfigError> {
        let mut model = match self.grating {
            GratingSelect::Ruled150 => InstrumentModel::ruled_150(),
            GratingSelect::Ruled1800 => InstrumentModel::ruled_1800(),
            GratingSelect::Custom => {
                let (Some(res), Some(px)) = (self.resolution_fwhm_nm, self.pixel_width_nm) else {
                    return Err(invalid(
                        "instrument",
                        "grating = \"custom\" requires resolution_fwhm_nm and pixel_width_nm",
                    ));
                };
                InstrumentModel {
                    grating: Grating::Custom,
                    resolution_fwhm_nm: res,
                    pixel_width_nm: px,
                    efficiency: 1.0,
                    noise: NoiseModel::Off,
                    seed: 0,
                }
            }
        };
        if let Some(res) = self.resolution_fwhm_nm {
            model.resolution_fwhm_nm = res;
        }
        if let Some(px) = self.pixel_width_nm {
            model.pixel_width_nm = px;
        }
        model.efficiency = self.efficiency;
        model.noise = self.noise;
        model.seed = self.seed;
        model
            .validate()
            .map_err(|e| invalid("instrument", e.to_string()))?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Samples in the simulated optical-frequency grid.
    pub points: usize,
    /// Grid span as a multiple of the pulse bandwidth (≥ 6).
    pub span_factor: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: 16_384,
            span_factor: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerScanConfig {
    /// Fixed pulse delay for the visibility-vs-power leg.
    pub delay_ps: f64,
    /// Photons per pJ for the yield calculation.
    pub yield_cal_photons_per_pj: f64,
}

impl Default for PowerScanConfig {
    fn default() -> Self {
        Self {
            delay_ps: 0.51,
            yield_cal_photons_per_pj: crate::physics::DEFAULT_YIELD_CAL_PHOTONS_PER_PJ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("tcups-run"),
        }
    }
}

/// Full run description; defaults reproduce the bulk-diamond experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub material: MaterialParams,
    pub excitation: ExcitationConfig,
    pub ensemble: EnsembleConfig,
    pub instrument: InstrumentConfig,
    pub grid: GridConfig,
    pub power_scan: PowerScanConfig,
    pub quantum: LangevinParams,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.material
            .validate()
            .map_err(|e| invalid("material", e.to_string()))?;
        self.excitation.validate()?;
        if self.ensemble.shots == 0 {
            return Err(invalid("ensemble.shots", "must be ≥ 1"));
        }
        self.instrument.resolve()?;
        if self.grid.points < 256 {
            return Err(invalid("grid.points", "must be ≥ 256"));
        }
        if !(self.grid.span_factor >= 6.0) {
            return Err(invalid("grid.span_factor", "must be ≥ 6"));
        }
        if !(self.power_scan.delay_ps > 0.0) {
            return Err(invalid("power_scan.delay_ps", "must be > 0"));
        }
        if !(self.power_scan.yield_cal_photons_per_pj > 0.0) {
            return Err(invalid(
                "power_scan.yield_cal_photons_per_pj",
                "must be > 0",
            ));
        }
        self.quantum
            .validate()
            .map_err(|e| invalid("quantum", e.to_string()))?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Apply the `TCUPS_OUT` / `TCUPS_SEED` environment overrides.
    pub fn apply_env_overrides(&mut self) -> Result<(), ConfigError> {
        if let Ok(dir) = std::env::var("TCUPS_OUT") {
            if !dir.is_empty() {
                self.output.dir = PathBuf::from(dir);
            }
        }
        if let Ok(seed) = std::env::var("TCUPS_SEED") {
            if !seed.is_empty() {
                self.ensemble.seed = seed
                    .parse()
                    .map_err(|_| ConfigError::BadSeedOverride(seed))?;
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical (re-serialized) config.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

// ─── Manifest ───────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub delay_ps: f64,
    pub laser_csv: String,
    pub stokes_csv: String,
}

/// Written next to the spectra; re-running the same manifest inputs
/// reproduces the CSVs byte for byte (the timestamp is informational).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub seed: u64,
    pub created_utc: String,
    pub entries: Vec<ManifestEntry>,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| invalid("manifest", format!("invalid manifest JSON: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.material.raman_shift_cm_inv, 1332.0);
        assert_eq!(cfg.excitation.delays_ps.len(), 9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let toml = r#"
            [material]
            raman_shift_cm_inv = 1332.0
            banana = 1
        "#;
        let err = RunConfig::from_toml(toml).unwrap_err();
        assert!(err.to_string().contains("banana"), "{err}");
    }

    #[test]
    fn non_increasing_delays_are_rejected() {
        let toml = r#"
            [excitation]
            delays_ps = [0.4, 0.4, 1.0]
        "#;
        let err = RunConfig::from_toml(toml).unwrap_err();
        assert!(err.to_string().contains("strictly increasing"), "{err}");
    }

    #[test]
    fn custom_grating_requires_both_fields() {
        let toml = r#"
            [instrument]
            grating = "custom"
            resolution_fwhm_nm = 0.1
        "#;
        assert!(RunConfig::from_toml(toml).is_err());
        let toml = r#"
            [instrument]
            grating = "custom"
            resolution_fwhm_nm = 0.1
            pixel_width_nm = 0.05
        "#;
        let cfg = RunConfig::from_toml(toml).unwrap();
        let model = cfg.instrument.resolve().unwrap();
        assert_eq!(model.pixel_width_nm, 0.05);
    }

    #[test]
    fn grating_presets_resolve() {
        let toml = r#"
            [instrument]
            grating = "150"
        "#;
        let cfg = RunConfig::from_toml(toml).unwrap();
        let model = cfg.instrument.resolve().unwrap();
        assert_eq!(model.pixel_width_nm, 0.24);
        assert_eq!(model.grating, Grating::Ruled150);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.ensemble.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn config_roundtrips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
