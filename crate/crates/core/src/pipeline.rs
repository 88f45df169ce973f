//! One end-to-end trial: simulate the scene at every anchor, detect at the
//! first anchor, and (on a positive verdict) estimate arrival directions at
//! every anchor and triangulate the emitter position(s).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{apply_channel, bearing_deg, ChannelError, DevicePose};
use crate::classify::{spectrum_from_stream, ClassifierModel, SignalLabel};
use crate::detection::{run_detection, DetectionError, DetectionReport, DetectorSetup};
use crate::frontend::{mix_and_filter, ProbeSignal, SceneAtDetector};
use crate::localize::{
    multi_device_localize, music_spectrum, spatial_separation, triangulate, AnchorBearing,
    AnchorObservation, BearingObservation, LocalizationResult, LocalizeError, MultiDeviceOptions,
};
use crate::scenario::{LocalizationMode, ScenarioConfig};
use crate::waveforms::{PhaseWaveform, WaveformKind};
use crate::Scalar;

/// Errors from pipeline stages, tagged by stage.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config stage: {0}")]
    Config(String),
    #[error("channel stage: {0}")]
    Channel(#[from] ChannelError),
    #[error("detection stage: {0}")]
    Detection(#[from] DetectionError),
    #[error("localization stage: {0}")]
    Localization(#[from] LocalizeError),
}

/// Outcome of one trial.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    /// Detection report from the first anchor (absent in synthetic-bearing
    /// localization studies, which skip the signal chain).
    pub detection: Option<DetectionReport<Scalar>>,
    /// Per-anchor arrival observations that fed localization.
    pub observations: Vec<AnchorObservation<Scalar>>,
    pub localization: Option<LocalizationResult<Scalar>>,
    /// Resolved IF noise power of this trial.
    pub noise_power_w: Scalar,
    pub warnings: Vec<String>,
}

/// Scene received at the given anchor index (the origin when out of
/// range), for standalone capture export.
pub fn scene_at_anchor(
    cfg: &ScenarioConfig,
    anchor: usize,
    seed: u64,
) -> Result<SceneAtDetector<Scalar>, PipelineError> {
    let frame = cfg
        .anchors
        .get(anchor)
        .map(|a| anchor_frame(cfg, a))
        .unwrap_or(DetectorFrame {
            x: 0.0,
            y: 0.0,
            z: 0.0,
            boresight_deg: default_boresight(cfg, (0.0, 0.0)),
        });
    build_scene(cfg, frame, anchor as u64, seed).map(|(scene, _)| scene)
}

/// Seed for a sub-task, derived so trials and anchors are independent.
pub fn derive_seed(master: u64, salt: u64) -> u64 {
    let mut h = master
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(salt.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    h ^= h >> 30;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 31;
    h
}

/// Per-trial RNG stream: a pure function of the master seed and the trial
/// index, so inserting or removing trials does not perturb the others.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    derive_seed(master, 0x7241_0000 + trial as u64)
}

/// Runs one trial of the configured scenario.
pub fn run_pipeline(
    cfg: &ScenarioConfig,
    classifier: Option<&ClassifierModel<Scalar>>,
    seed: u64,
) -> Result<TrialOutcome, PipelineError> {
    match cfg.localization.mode {
        LocalizationMode::SyntheticBearings => synthetic_trial(cfg, seed),
        LocalizationMode::Music => full_trial(cfg, classifier, seed),
    }
}

/// Full signal-chain trial.
fn full_trial(
    cfg: &ScenarioConfig,
    classifier: Option<&ClassifierModel<Scalar>>,
    seed: u64,
) -> Result<TrialOutcome, PipelineError> {
    let classifier = classifier
        .ok_or_else(|| PipelineError::Config("a trained classifier is required".to_string()))?;
    let array = cfg.array_geometry();
    let wavelength = cfg.path_loss_params().wavelength_m;
    let mut warnings = Vec::new();

    // Detection anchor: the first anchor, or the origin for detection-only
    // scenarios without anchors.
    let detection_anchor = cfg
        .anchors
        .first()
        .map(|a| anchor_frame(cfg, a))
        .unwrap_or(DetectorFrame {
            x: 0.0,
            y: 0.0,
            z: 0.0,
            boresight_deg: default_boresight(cfg, (0.0, 0.0)),
        });
    let (scene, noise_power) = build_scene(cfg, detection_anchor, 0, seed)?;

    let setup = DetectorSetup {
        receiver: &cfg.receiver,
        detection: &cfg.detection,
        array: &array,
        wavelength_m: wavelength,
        classifier,
        multi_device: cfg.multi_device,
    };
    let report = run_detection(&scene, &setup, derive_seed(seed, 0xdead))?;

    let mut observations = Vec::new();
    let mut localization = None;
    if report.spy_radar_present && cfg.localization_enabled() {
        // Frequency components attributed to radar-classified signals.
        let mut radar_components: Vec<Scalar> = Vec::new();
        for signal in report
            .signals
            .iter()
            .filter(|s| s.label == SignalLabel::Radar)
        {
            if radar_components
                .iter()
                .all(|&c| (c - signal.frequency_hz).abs() > cfg.receiver.cutoff_hz)
            {
                radar_components.push(signal.frequency_hz);
            }
        }

        for (anchor_idx, anchor) in cfg.anchors.iter().enumerate() {
            let frame = anchor_frame(cfg, anchor);
            let (anchor_scene, _) = build_scene(cfg, frame, anchor_idx as u64 + 1, seed)?;
            match observe_anchor(
                cfg,
                &anchor_scene,
                &array,
                wavelength,
                classifier,
                &radar_components,
                derive_seed(seed, 0xa0c0 + anchor_idx as u64),
            ) {
                Ok(mut bearings) if !bearings.is_empty() => {
                    // Arrival angles are relative to the boresight.
                    for b in &mut bearings {
                        b.angle_deg += frame.boresight_deg;
                    }
                    observations.push(AnchorObservation::new(anchor.x, anchor.y, bearings));
                }
                Ok(_) => warnings.push(format!(
                    "anchor {anchor_idx}: no radar bearing observed"
                )),
                Err(e) => warnings.push(format!("anchor {anchor_idx}: {e}")),
            }
        }

        localization = localize(cfg, &observations, &mut warnings)?;
    }

    Ok(TrialOutcome {
        detection: Some(report),
        observations,
        localization,
        noise_power_w: noise_power,
        warnings,
    })
}

/// Direction observations at one anchor: probe each radar frequency
/// component with a tone, scan arrivals, and keep radar-attributed bearings.
fn observe_anchor(
    cfg: &ScenarioConfig,
    scene: &SceneAtDetector<Scalar>,
    array: &crate::channel::ArrayGeometry<Scalar>,
    wavelength: Scalar,
    classifier: &ClassifierModel<Scalar>,
    radar_components: &[Scalar],
    seed: u64,
) -> Result<Vec<BearingObservation<Scalar>>, PipelineError> {
    let mut receiver = cfg.receiver.clone();
    receiver.frames_per_detection = cfg.detection.frames_per_detection;
    let mut bearings: Vec<BearingObservation<Scalar>> = Vec::new();
    for (idx, &component) in radar_components.iter().enumerate() {
        let probe = ProbeSignal::single_tone(component);
        let rec = mix_and_filter(scene, &probe, &receiver, derive_seed(seed, idx as u64))
            .map_err(DetectionError::from)?;
        let hint = if cfg.multi_device { None } else { Some(1) };
        let music = match music_spectrum(
            &rec,
            array,
            wavelength,
            hint,
            cfg.detection.music_grid_step_deg,
        ) {
            Ok(m) => m,
            Err(LocalizeError::RankDeficient) => continue,
            Err(e) => return Err(e.into()),
        };
        let peaks: Vec<Scalar> = music
            .peaks
            .iter()
            .take(music.source_count.min(scene.antennas.saturating_sub(1)))
            .map(|p| p.angle_deg)
            .collect();
        if peaks.is_empty() {
            continue;
        }

        let kept: Vec<(Scalar, Scalar)> = if cfg.multi_device {
            // Keep only directions whose separated stream classifies as radar.
            let mut kept = Vec::new();
            for stream in spatial_separation(&rec, array, wavelength, &peaks)? {
                let feature = spectrum_from_stream(&stream, component);
                let c = classifier.classify(&feature).map_err(DetectionError::from)?;
                if c.label == SignalLabel::Radar {
                    let height = music
                        .peaks
                        .iter()
                        .find(|p| p.angle_deg == stream.aoa_deg)
                        .map(|p| p.height)
                        .unwrap_or(0.0);
                    kept.push((stream.aoa_deg, height));
                }
            }
            kept
        } else {
            vec![(peaks[0], music.peaks[0].height)]
        };

        for (angle, height) in kept {
            // A wideband emitter shows up at several components from the
            // same direction; merge within the direction tolerance.
            match bearings
                .iter_mut()
                .find(|b| (b.angle_deg - angle).abs() <= cfg.detection.aoa_merge_deg)
            {
                Some(existing) => {
                    if height > existing.peak_height {
                        existing.angle_deg = angle;
                        existing.peak_height = height;
                    }
                }
                None => bearings.push(BearingObservation {
                    angle_deg: angle,
                    peak_height: height,
                }),
            }
        }
    }
    Ok(bearings)
}

/// Synthetic-bearing trial: true radar bearings plus Gaussian noise, no
/// signal simulation. Detection is skipped entirely.
fn synthetic_trial(cfg: &ScenarioConfig, seed: u64) -> Result<TrialOutcome, PipelineError> {
    let sigma = cfg.localization.bearing_noise_deg.unwrap_or(0.0);
    let mut warnings = Vec::new();
    let mut observations = Vec::new();
    for (anchor_idx, anchor) in cfg.anchors.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x0b5e + anchor_idx as u64));
        let mut bearings = Vec::new();
        for emitter in cfg.emitters.iter().filter(|e| e.is_radar()) {
            let truth = bearing_deg((anchor.x, anchor.y), (emitter.x, emitter.y));
            let noise: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * sigma;
            bearings.push(BearingObservation {
                angle_deg: truth + noise,
                peak_height: 1.0,
            });
        }
        if !bearings.is_empty() {
            observations.push(AnchorObservation::new(anchor.x, anchor.y, bearings));
        }
    }
    let localization = localize(cfg, &observations, &mut warnings)?;
    Ok(TrialOutcome {
        detection: None,
        observations,
        localization,
        noise_power_w: cfg.noise_power_w.unwrap_or(0.0),
        warnings,
    })
}

/// Triangulates the observations: the multi-device assignment search when
/// configured, otherwise one bearing per anchor.
fn localize(
    cfg: &ScenarioConfig,
    observations: &[AnchorObservation<Scalar>],
    warnings: &mut Vec<String>,
) -> Result<Option<LocalizationResult<Scalar>>, PipelineError> {
    if !cfg.localization_enabled() {
        return Ok(None);
    }
    if cfg.multi_device {
        if observations.len() < 3 {
            warnings.push(format!(
                "multi-device localization needs 3 anchors with bearings, got {}",
                observations.len()
            ));
            return Ok(None);
        }
        let options = MultiDeviceOptions {
            combination_cap: cfg.localization.combination_cap.unwrap_or(1_000_000),
            ..MultiDeviceOptions::default()
        };
        match multi_device_localize(observations, &options) {
            Ok(result) => Ok(Some(result)),
            Err(e @ LocalizeError::CombinationBudgetExceeded { .. }) => Err(e.into()),
            Err(e) => {
                warnings.push(format!("localization failed: {e}"));
                Ok(None)
            }
        }
    } else {
        // Strongest bearing per anchor.
        let lines: Vec<AnchorBearing<Scalar>> = observations
            .iter()
            .filter_map(|obs| {
                obs.bearings
                    .iter()
                    .max_by(|a, b| a.peak_height.partial_cmp(&b.peak_height).expect("finite"))
                    .map(|b| AnchorBearing::new(obs.x, obs.y, b.angle_deg))
            })
            .collect();
        if lines.len() < 2 {
            warnings.push(format!(
                "triangulation needs 2 anchors with bearings, got {}",
                lines.len()
            ));
            return Ok(None);
        }
        match triangulate(&lines) {
            Ok(position) => Ok(Some(LocalizationResult {
                positions: vec![position],
                device_count: 1,
            })),
            Err(e) => {
                warnings.push(format!("localization failed: {e}"));
                Ok(None)
            }
        }
    }
}

/// A detector placement: position plus the direction the array faces.
#[derive(Debug, Clone, Copy)]
struct DetectorFrame {
    x: Scalar,
    y: Scalar,
    z: Scalar,
    boresight_deg: Scalar,
}

impl DetectorFrame {
    /// Emitter position in the detector's frame: the detector sits at the
    /// origin facing +y, so arrival angles come out relative to boresight.
    fn to_local(&self, x: Scalar, y: Scalar) -> (Scalar, Scalar) {
        let (dx, dy) = (x - self.x, y - self.y);
        let (sin, cos) = self.boresight_deg.to_radians().sin_cos();
        (dx * cos - dy * sin, dx * sin + dy * cos)
    }
}

/// Builds the received scene at a detector placement (in the detector's own
/// frame), randomizing emitter phases and clock offsets per (trial, anchor)
/// so successive measurements are unsynchronized.
fn build_scene(
    cfg: &ScenarioConfig,
    frame: DetectorFrame,
    anchor_salt: u64,
    seed: u64,
) -> Result<(SceneAtDetector<Scalar>, Scalar), PipelineError> {
    let array = cfg.array_geometry();
    let path_loss = cfg.path_loss_params();
    let detector = DevicePose::detector(0.0, 0.0).with_height(frame.z);

    let mut links = Vec::new();
    let mut max_in_band: Scalar = 0.0;
    for (idx, spec) in cfg.emitters.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            seed,
            0xe000 + anchor_salt * 256 + idx as u64,
        ));
        let mut waveform = spec.waveform();
        if spec.randomize_phase.unwrap_or(true) {
            randomize_phases(&mut waveform, &mut rng);
        }
        let (local_x, local_y) = frame.to_local(spec.x, spec.y);
        let pose = DevicePose::emitter(local_x, local_y).with_height(spec.z.unwrap_or(0.0));
        let (mut link, _) =
            apply_channel(&waveform, &pose, &detector, &array, &path_loss, 0.0, seed)?;
        link.time_offset_s = spec
            .time_offset_s
            .unwrap_or_else(|| rng.random_range(0.0..200e-6));
        // Time-averaged in-band IF power at the waveform's best-matched
        // tone; the scenario SNR is defined against this quantity.
        let cutoff = cfg.receiver.cutoff_hz;
        max_in_band = max_in_band.max(
            link.gain
                * link.gain
                * waveform.in_band_power_fraction(cutoff)
                * waveform.in_band_time_fraction(cutoff),
        );
        links.push(link);
    }

    let noise_power = match (cfg.noise_power_w, cfg.snr_db) {
        (Some(n), _) => n,
        (None, Some(snr)) => {
            if links.is_empty() {
                0.0
            } else {
                max_in_band / 10f64.powf(snr / 10.0)
            }
        }
        (None, None) => 0.0,
    };
    Ok((
        SceneAtDetector::new(links, array.elements, noise_power),
        noise_power,
    ))
}

fn anchor_frame(cfg: &ScenarioConfig, anchor: &crate::scenario::AnchorSpec) -> DetectorFrame {
    DetectorFrame {
        x: anchor.x,
        y: anchor.y,
        z: anchor.z.unwrap_or(0.0),
        boresight_deg: anchor
            .boresight_deg
            .unwrap_or_else(|| default_boresight(cfg, (anchor.x, anchor.y))),
    }
}

/// An unset boresight faces the emitter centroid (the operator points the
/// detector into the room).
fn default_boresight(cfg: &ScenarioConfig, anchor: (Scalar, Scalar)) -> Scalar {
    if cfg.emitters.is_empty() {
        return 0.0;
    }
    let n = cfg.emitters.len() as Scalar;
    let cx = cfg.emitters.iter().map(|e| e.x).sum::<Scalar>() / n;
    let cy = cfg.emitters.iter().map(|e| e.y).sum::<Scalar>() / n;
    if (cx, cy) == anchor {
        return 0.0;
    }
    bearing_deg(anchor, (cx, cy))
}

fn randomize_phases(waveform: &mut PhaseWaveform<Scalar>, rng: &mut ChaCha8Rng) {
    let tau = std::f64::consts::TAU;
    match &mut waveform.kind {
        WaveformKind::Cw { phase_rad, .. } => *phase_rad = rng.random_range(0.0..tau),
        WaveformKind::Fsk {
            phase_a_rad,
            phase_b_rad,
            ..
        } => {
            *phase_a_rad = rng.random_range(0.0..tau);
            *phase_b_rad = rng.random_range(0.0..tau);
        }
        WaveformKind::Fmcw { .. } => {}
        WaveformKind::Pulse { phase_rad, .. } => *phase_rad = rng.random_range(0.0..tau),
        WaveformKind::WigigOfdm {
            constellation_seed, ..
        } => *constellation_seed = rng.random(),
    }
}
