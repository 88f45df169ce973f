//! Scenario files: the full experiment description (band, receiver,
//! thresholds, geometry, emitters, anchors, noise, seeds, trials) as a
//! hand-editable JSON document with strict validation and defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ArrayGeometry, PathLossParams, SteeringConvention};
use crate::detection::DetectionConfig;
use crate::frontend::ReceiverConfig;
use crate::real::SPEED_OF_LIGHT;
use crate::waveforms::{PhaseWaveform, WaveformKind};
use crate::Scalar;

/// Errors from loading or validating scenario files.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid scenario:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

/// Detector band limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub min_hz: Scalar,
    pub max_hz: Scalar,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            min_hz: 77e9,
            max_hz: 81e9,
        }
    }
}

impl BandConfig {
    pub fn center_hz(&self) -> Scalar {
        (self.min_hz + self.max_hz) * 0.5
    }

    pub fn wavelength_m(&self) -> Scalar {
        SPEED_OF_LIGHT / self.center_hz()
    }
}

/// Receive-array section with optional derived spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySection {
    pub elements: usize,
    /// Defaults to a quarter wavelength at the band center.
    pub spacing_m: Option<Scalar>,
    pub steering: SteeringConvention,
}

impl Default for ArraySection {
    fn default() -> Self {
        Self {
            elements: 4,
            spacing_m: None,
            steering: SteeringConvention::TwoWay,
        }
    }
}

/// Path-loss section with optional derived wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossSection {
    pub tx_power_w: Scalar,
    pub antenna_area_m2: Scalar,
    pub scattering: Scalar,
    /// Defaults to the band-center wavelength.
    pub wavelength_m: Option<Scalar>,
}

impl Default for PathLossSection {
    fn default() -> Self {
        Self {
            tx_power_w: 1.0,
            antenna_area_m2: 0.01,
            scattering: 0.5,
            wavelength_m: None,
        }
    }
}

/// One emitter: waveform, pose and per-trial randomization knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterSpec {
    pub waveform: WaveformKind<Scalar>,
    #[serde(default)]
    pub amplitude: Option<Scalar>,
    pub x: Scalar,
    pub y: Scalar,
    #[serde(default)]
    pub z: Option<Scalar>,
    /// Fixed emitter clock offset; randomized per trial when absent.
    #[serde(default)]
    pub time_offset_s: Option<Scalar>,
    /// Re-randomize initial phases per trial and anchor (detector and
    /// emitter are unsynchronized). Defaults to true.
    #[serde(default)]
    pub randomize_phase: Option<bool>,
}

impl EmitterSpec {
    pub fn waveform(&self) -> PhaseWaveform<Scalar> {
        PhaseWaveform {
            kind: self.waveform.clone(),
            amplitude: self.amplitude.unwrap_or(1.0),
        }
    }

    pub fn is_radar(&self) -> bool {
        !matches!(self.waveform, WaveformKind::WigigOfdm { .. })
    }
}

/// One anchor position with the direction the handheld detector faces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSpec {
    pub x: Scalar,
    pub y: Scalar,
    #[serde(default)]
    pub z: Option<Scalar>,
    /// Array boresight (degrees from +y). Defaults to facing the centroid
    /// of the configured emitters, mirroring an operator pointing the
    /// detector into the room; emitters must fall inside the array's
    /// (-90, 90) degree field of view around this direction.
    #[serde(default)]
    pub boresight_deg: Option<Scalar>,
}

/// How bearings are produced for localization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalizationMode {
    /// Direction finding on simulated IF records.
    #[default]
    Music,
    /// True bearings plus Gaussian noise; skips the signal simulation
    /// (for localization-layer studies).
    SyntheticBearings,
}

/// Localization section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationSection {
    /// Defaults to true when at least two anchors are configured.
    pub enabled: Option<bool>,
    pub mode: LocalizationMode,
    /// Bearing noise (degrees) for the synthetic mode.
    pub bearing_noise_deg: Option<Scalar>,
    /// Multi-device combination budget.
    pub combination_cap: Option<usize>,
}

impl Default for LocalizationSection {
    fn default() -> Self {
        Self {
            enabled: None,
            mode: LocalizationMode::Music,
            bearing_noise_deg: None,
            combination_cap: None,
        }
    }
}

/// Swept parameter axis of a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Emitter distance from the first anchor (meters).
    Distance,
    /// Emitter bearing from the first anchor (degrees from +y).
    Angle,
    /// Number of anchors used (prefix of the anchor list).
    AnchorCount,
    /// Emitter height above the anchor plane (meters).
    HeightDifference,
}

/// Sweep section: one axis, one aggregate row per value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub values: Vec<Scalar>,
}

/// Full scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub band: BandConfig,
    pub receiver: ReceiverConfig<Scalar>,
    pub detection: DetectionConfig<Scalar>,
    pub array: ArraySection,
    pub path_loss: PathLossSection,
    pub emitters: Vec<EmitterSpec>,
    pub anchors: Vec<AnchorSpec>,
    /// Explicit IF noise power; mutually exclusive with `snr_db`.
    pub noise_power_w: Option<Scalar>,
    /// Post-mixing in-band SNR at the first anchor; noise power is derived
    /// from the strongest emitter's in-band received power.
    pub snr_db: Option<Scalar>,
    pub seed: u64,
    pub trials: usize,
    pub multi_device: bool,
    pub localization: LocalizationSection,
    pub sweep: Option<SweepSection>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            band: BandConfig::default(),
            receiver: ReceiverConfig::default(),
            detection: DetectionConfig::default(),
            array: ArraySection::default(),
            path_loss: PathLossSection::default(),
            emitters: Vec::new(),
            anchors: Vec::new(),
            noise_power_w: None,
            snr_db: None,
            seed: 1,
            trials: 1,
            multi_device: false,
            localization: LocalizationSection::default(),
            sweep: None,
        }
    }
}

impl ScenarioConfig {
    /// Whether localization runs (explicit flag, or two or more anchors).
    pub fn localization_enabled(&self) -> bool {
        self.localization.enabled.unwrap_or(self.anchors.len() >= 2)
    }

    pub fn array_geometry(&self) -> ArrayGeometry<Scalar> {
        ArrayGeometry {
            elements: self.array.elements,
            spacing_m: self
                .array
                .spacing_m
                .unwrap_or(self.band.wavelength_m() * 0.25),
            steering: self.array.steering,
        }
    }

    pub fn path_loss_params(&self) -> PathLossParams<Scalar> {
        PathLossParams {
            tx_power_w: self.path_loss.tx_power_w,
            antenna_area_m2: self.path_loss.antenna_area_m2,
            scattering: self.path_loss.scattering,
            wavelength_m: self
                .path_loss
                .wavelength_m
                .unwrap_or(self.band.wavelength_m()),
        }
    }

    /// Fills every optional field with its derived default, injects the band
    /// into the detection section, and validates. Returns accumulated
    /// non-fatal warnings (e.g. emitters outside the detector band).
    pub fn normalize(&mut self) -> Result<Vec<String>, ScenarioError> {
        self.detection.band_min_hz = self.band.min_hz;
        self.detection.band_max_hz = self.band.max_hz;
        if self.array.spacing_m.is_none() {
            self.array.spacing_m = Some(self.band.wavelength_m() * 0.25);
        }
        if self.path_loss.wavelength_m.is_none() {
            self.path_loss.wavelength_m = Some(self.band.wavelength_m());
        }
        if self.noise_power_w.is_none() && self.snr_db.is_none() {
            self.noise_power_w = Some(0.0);
        }
        if self.localization.enabled.is_none() {
            self.localization.enabled = Some(self.anchors.len() >= 2);
        }
        for emitter in &mut self.emitters {
            if emitter.amplitude.is_none() {
                emitter.amplitude = Some(1.0);
            }
            if emitter.z.is_none() {
                emitter.z = Some(0.0);
            }
            if emitter.randomize_phase.is_none() {
                emitter.randomize_phase = Some(true);
            }
        }
        let centroid = if self.emitters.is_empty() {
            None
        } else {
            let n = self.emitters.len() as Scalar;
            Some((
                self.emitters.iter().map(|e| e.x).sum::<Scalar>() / n,
                self.emitters.iter().map(|e| e.y).sum::<Scalar>() / n,
            ))
        };
        for anchor in &mut self.anchors {
            if anchor.z.is_none() {
                anchor.z = Some(0.0);
            }
            if anchor.boresight_deg.is_none() {
                anchor.boresight_deg = Some(match centroid {
                    Some(c) if c != (anchor.x, anchor.y) => {
                        crate::channel::bearing_deg((anchor.x, anchor.y), c)
                    }
                    _ => 0.0,
                });
            }
        }
        self.validate()
    }

    /// Checks every invariant, reporting all violations at once.
    pub fn validate(&self) -> Result<Vec<String>, ScenarioError> {
        let mut problems = Vec::new();
        let mut warnings = Vec::new();

        if !(self.band.min_hz < self.band.max_hz) {
            problems.push("band: min_hz must be below max_hz".to_string());
        }
        if let Err(e) = self.receiver.validate() {
            problems.push(format!("receiver: {e}"));
        }
        if let Err(e) = self.detection.validate() {
            problems.push(format!("detection: {e}"));
        }
        if self.array.elements < 2 {
            problems.push("array: needs at least 2 elements".to_string());
        }
        if let Some(s) = self.array.spacing_m {
            if !(s > 0.0) {
                problems.push("array: spacing_m must be positive".to_string());
            }
        }
        if let Err(e) = self.path_loss_params().validate() {
            problems.push(format!("path_loss: {e}"));
        }
        for (i, emitter) in self.emitters.iter().enumerate() {
            if let Err(e) = emitter.waveform().validate() {
                problems.push(format!("emitters[{i}]: {e}"));
            }
            let (lo, hi) = emitter.waveform().frequency_span();
            if hi < self.band.min_hz || lo > self.band.max_hz {
                warnings.push(format!(
                    "emitters[{i}]: frequency span [{:.3}, {:.3}] GHz lies outside the \
                     detector band [{:.3}, {:.3}] GHz",
                    lo / 1e9,
                    hi / 1e9,
                    self.band.min_hz / 1e9,
                    self.band.max_hz / 1e9
                ));
            }
            for (j, anchor) in self.anchors.iter().enumerate() {
                if emitter.x == anchor.x && emitter.y == anchor.y {
                    problems.push(format!(
                        "emitters[{i}] coincides with anchors[{j}] at ({}, {})",
                        emitter.x, emitter.y
                    ));
                }
            }
        }
        if self.localization_enabled() {
            let need = if self.multi_device { 3 } else { 2 };
            if self.anchors.len() < need {
                problems.push(format!(
                    "localization requires at least {need} anchors ({} configured{})",
                    self.anchors.len(),
                    if self.multi_device { ", multi-device" } else { "" }
                ));
            }
        }
        if self.noise_power_w.is_some() && self.snr_db.is_some() {
            problems.push("noise_power_w and snr_db are mutually exclusive".to_string());
        }
        if let Some(n) = self.noise_power_w {
            if n < 0.0 {
                problems.push("noise_power_w must be non-negative".to_string());
            }
        }
        if self.trials == 0 {
            problems.push("trials must be at least 1".to_string());
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                problems.push("sweep: values must not be empty".to_string());
            }
            if sweep.axis == SweepAxis::AnchorCount {
                for v in &sweep.values {
                    let count = *v as usize;
                    if count < 2 || count > self.anchors.len() {
                        problems.push(format!(
                            "sweep: anchor count {v} outside 2..={}",
                            self.anchors.len()
                        ));
                    }
                }
            }
        }

        if problems.is_empty() {
            Ok(warnings)
        } else {
            Err(ScenarioError::Invalid(problems))
        }
    }
}

/// Loads, normalizes and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<(ScenarioConfig, Vec<String>), ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut config: ScenarioConfig =
        serde_json::from_str(&text).map_err(|e| ScenarioError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    let warnings = config.normalize()?;
    Ok((config, warnings))
}

/// Writes the canonical (fully normalized) form of a scenario.
pub fn save_scenario(config: &ScenarioConfig, path: &Path) -> Result<(), ScenarioError> {
    let text = serde_json::to_string_pretty(config).map_err(|e| ScenarioError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    const MINIMAL: &str = r#"{
        "emitters": [
            {"waveform": {"fmcw": {"start_hz": 77e9, "slope_hz_per_s": 39.9756e12,
             "sweep_period_s": 100e-6}}, "x": 1.0, "y": 1.0}
        ],
        "anchors": [{"x": 0.0, "y": 0.0}, {"x": 2.0, "y": 0.0}],
        "snr_db": 15.0
    }"#;

    #[test]
    fn minimal_scenario_gets_reference_defaults() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scenario.json");
        std::fs::write(&path, MINIMAL).unwrap();
        let (cfg, warnings) = load_scenario(&path).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(cfg.receiver.sweep_time_s, 100e-6);
        assert_eq!(cfg.receiver.adc_rate_hz, 12e6);
        assert_eq!(cfg.receiver.adc_samples_per_chirp, 1024);
        assert_eq!(cfg.receiver.chirps_per_frame, 128);
        assert_eq!(cfg.receiver.frame_period_s, 33.3e-3);
        assert_eq!(cfg.receiver.frames_per_detection, 25);
        assert_eq!(cfg.detection.ratio_threshold, 4.4);
        assert_eq!(cfg.detection.tone_step_hz, 800e6);
        assert_eq!(cfg.detection.band_min_hz, 77e9);
        assert!(cfg.localization_enabled());
        assert_eq!(cfg.emitters[0].amplitude, Some(1.0));
    }

    #[test]
    fn cutoff_violation_names_the_constraint() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scenario.json");
        let text = MINIMAL.replace(
            "\"snr_db\": 15.0",
            "\"snr_db\": 15.0, \"receiver\": {\"cutoff_hz\": 7e6}",
        );
        std::fs::write(&path, text).unwrap();
        let err = load_scenario(&path).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("half the") && msg.contains("sampling rate"),
            "message: {msg}"
        );
    }

    #[test]
    fn unknown_keys_are_rejected_with_context() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scenario.json");
        let text = MINIMAL.replace("\"snr_db\": 15.0", "\"snr_db\": 15.0, \"surprise\": 1");
        std::fs::write(&path, text).unwrap();
        let err = load_scenario(&path).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { .. }));
        assert!(err.to_string().contains("surprise"));
    }

    #[test]
    fn canonical_round_trip_is_identity() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scenario.json");
        std::fs::write(&path, MINIMAL).unwrap();
        let (cfg, _) = load_scenario(&path).unwrap();
        let canonical = dir.path().join("canonical.json");
        save_scenario(&cfg, &canonical).unwrap();
        let (reloaded, _) = load_scenario(&canonical).unwrap();
        assert_eq!(cfg, reloaded);
    }

    #[test]
    fn validation_lists_all_problems() {
        let mut cfg = ScenarioConfig::default();
        cfg.band.min_hz = 81e9;
        cfg.band.max_hz = 77e9;
        cfg.trials = 0;
        cfg.noise_power_w = Some(-1.0);
        let err = cfg.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("band"));
        assert!(msg.contains("trials"));
        assert!(msg.contains("noise_power_w"));
    }

    #[test]
    fn out_of_band_emitter_is_flagged_not_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scenario.json");
        let text = MINIMAL.replace("77e9", "60e9").replace("\"start_hz\": 60e9", "\"start_hz\": 60e9");
        std::fs::write(&path, text).unwrap();
        // Band stays 77-81 by default; a 60 GHz emitter is out of band.
        let (cfg, warnings) = load_scenario(&path).unwrap();
        assert_eq!(cfg.emitters.len(), 1);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("outside"));
    }

    #[test]
    fn multi_device_needs_three_anchors() {
        let mut cfg = ScenarioConfig::default();
        cfg.multi_device = true;
        cfg.localization.enabled = Some(true);
        cfg.anchors = vec![
            AnchorSpec { x: 0.0, y: 0.0, z: None, boresight_deg: None },
            AnchorSpec { x: 1.0, y: 0.0, z: None, boresight_deg: None },
        ];
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("at least 3 anchors"));
    }
}
