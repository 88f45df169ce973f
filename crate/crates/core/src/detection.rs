//! Emitter presence detection.
//!
//! The detector cannot sample mmWave directly, so it mixes the air against
//! two families of local probes: one sweep chirp across the band (narrowband
//! emitters show up as a time-domain peak at the frequency-crossing instant)
//! and a ladder of single tones stepped across the band (wideband emitters
//! sweep past a tone and leave periodic bursts). A probe triggers when the
//! IF power is relatively large (max/mean ratio) or exceeds an absolute
//! threshold. Triggered captures are demodulated at the estimated frequency
//! component, turned into spectrum features, and classified; the verdict is
//! positive when any detected signal is not a communication waveform.

use rustfft::FftNum;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ArrayGeometry;
use crate::classify::{
    extract_spectrum, spectrum_from_stream, ClassifierModel, ClassifyError, SignalLabel,
};
use crate::frontend::{
    if_power_series, mix_and_filter, FrontendError, PowerSeries, ProbeKind, ProbeSignal,
    ReceiverConfig, SceneAtDetector,
};
use crate::localize::{music_spectrum, spatial_separation, LocalizeError};
use crate::real::Real;

/// Errors from the detection pipeline.
#[derive(Debug, Error, PartialEq)]
pub enum DetectionError {
    #[error("frequency components can only be estimated from a sweep probe")]
    NotASweepProbe,
    #[error("invalid detection configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Localize(#[from] LocalizeError),
}

/// Thresholds, band plan and probe parameters of the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default, deny_unknown_fields)]
pub struct DetectionConfig<T> {
    /// Relative trigger: max(P)/mean(P) at or above this fires.
    pub ratio_threshold: T,
    /// Absolute trigger in simulator power units; `None` calibrates it to
    /// the measured noise floor plus 15 dB on an emitter-free run.
    pub power_threshold: Option<T>,
    pub band_min_hz: T,
    pub band_max_hz: T,
    /// Spacing of the single-tone probe ladder.
    pub tone_step_hz: T,
    /// Slope of the sweep probe.
    pub sweep_slope_hz_per_s: T,
    /// Detection window length; overrides the receiver's frame count.
    pub frames_per_detection: usize,
    /// Centered moving-average span (samples) applied to the power series
    /// before the threshold test.
    pub smoothing_window: usize,
    /// Arrival directions closer than this merge into one device.
    pub aoa_merge_deg: T,
    /// MUSIC scan step for the multi-device path.
    pub music_grid_step_deg: T,
}

impl<T: Real> Default for DetectionConfig<T> {
    fn default() -> Self {
        Self {
            ratio_threshold: T::of(4.4),
            power_threshold: None,
            band_min_hz: T::of(77e9),
            band_max_hz: T::of(81e9),
            tone_step_hz: T::of(800e6),
            sweep_slope_hz_per_s: T::of(39.9756e12),
            frames_per_detection: 25,
            smoothing_window: 4,
            aoa_merge_deg: T::of(3.0),
            music_grid_step_deg: T::of(DEFAULT_MUSIC_GRID_STEP),
        }
    }
}

const DEFAULT_MUSIC_GRID_STEP: f64 = 0.1;

impl<T: Real> DetectionConfig<T> {
    pub fn validate(&self) -> Result<(), DetectionError> {
        let mut problems = Vec::new();
        if !(self.ratio_threshold > T::one()) {
            problems.push("ratio_threshold must exceed 1".to_string());
        }
        if !(self.tone_step_hz > T::zero()) {
            problems.push("tone_step_hz must be positive".to_string());
        }
        if !(self.band_min_hz < self.band_max_hz) {
            problems.push("band_min_hz must be below band_max_hz".to_string());
        }
        if let Some(p) = self.power_threshold {
            if !(p > T::zero()) {
                problems.push("power_threshold must be positive when given".to_string());
            }
        }
        if self.frames_per_detection == 0 {
            problems.push("frames_per_detection must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(DetectionError::InvalidConfig(problems.join("; ")))
        }
    }

    /// The sweep probe covering the band bottom-up.
    pub fn sweep_probe(&self) -> ProbeSignal<T> {
        ProbeSignal::sweep(self.band_min_hz, self.sweep_slope_hz_per_s)
    }
}

/// Which branch of the threshold test fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Ratio,
    Power,
    None,
}

/// Outcome of the threshold test on one probe's power series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeDecision<T> {
    pub detected: bool,
    /// Chirp-local time of the power maximum.
    pub t_max_s: T,
    pub trigger: Trigger,
}

/// Threshold test of one probe: fires when the power is relatively large
/// (`max/mean >= ratio_threshold`) or sufficiently large
/// (`max >= power_threshold`). An all-zero series never fires (the ratio is
/// undefined and treated as false).
pub fn probe_decision<T: Real>(
    power: &PowerSeries<T>,
    cfg: &DetectionConfig<T>,
    power_threshold: T,
) -> ProbeDecision<T> {
    if power.values.is_empty() {
        return ProbeDecision {
            detected: false,
            t_max_s: T::zero(),
            trigger: Trigger::None,
        };
    }
    let mean = power.mean();
    let (argmax, max) = power
        .values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite power"))
        .map(|(i, &v)| (i, v))
        .expect("non-empty series");
    let ratio_fired = mean > T::zero() && max / mean >= cfg.ratio_threshold;
    let power_fired = max >= power_threshold;
    let trigger = if ratio_fired {
        Trigger::Ratio
    } else if power_fired {
        Trigger::Power
    } else {
        Trigger::None
    };
    ProbeDecision {
        detected: ratio_fired || power_fired,
        t_max_s: power.chirp_local_time(argmax),
        trigger,
    }
}

/// Absolute power threshold calibrated from an emitter-free noise
/// measurement: mean noise power plus 15 dB. A silent (noiseless) floor
/// disables the absolute branch entirely.
pub fn calibrate_power_threshold<T: Real>(mean_noise_power: T) -> T {
    if mean_noise_power > T::zero() {
        mean_noise_power * T::of(10f64.powf(1.5))
    } else {
        T::of(f64::INFINITY)
    }
}

/// Frequency component from the sweep-probe peak time: `f0 + S * t_max`.
pub fn estimate_frequency_component<T: Real>(
    t_max_s: T,
    sweep: &ProbeSignal<T>,
) -> Result<T, DetectionError> {
    match sweep.kind {
        ProbeKind::Sweep {
            start_hz,
            slope_hz_per_s,
        } => Ok(start_hz + slope_hz_per_s * t_max_s),
        ProbeKind::SingleTone { .. } => Err(DetectionError::NotASweepProbe),
    }
}

/// Single-tone probe ladder: `f_min, f_min + step, ...` up to and including
/// the last tone at or below `f_max`, so any signal at least one step wide
/// overlaps a tone.
pub fn plan_single_tone_probes<T: Real>(cfg: &DetectionConfig<T>) -> Vec<ProbeSignal<T>> {
    let mut tones = Vec::new();
    let eps = cfg.tone_step_hz * T::of(1e-9);
    let mut k = 0usize;
    loop {
        let freq = cfg.band_min_hz + T::of(k as f64) * cfg.tone_step_hz;
        if freq > cfg.band_max_hz + eps {
            break;
        }
        tones.push(ProbeSignal::single_tone(freq));
        k += 1;
    }
    tones
}

/// Deployment profile for the tone-step recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeploymentTarget {
    /// Indoor emitters favor large bandwidth: a coarse, fast ladder works.
    Indoor,
    /// Outdoor emitters favor range over bandwidth: search finer.
    Outdoor,
}

/// Advisory step size: the minimum expected bandwidth indoors, a quarter of
/// it outdoors. Either way the ladder covers any signal at least as wide as
/// the smallest expected bandwidth.
pub fn recommend_step_size<T: Real>(
    target: DeploymentTarget,
    expected_bw_bounds_hz: (T, T),
) -> Result<T, DetectionError> {
    let (min_bw, max_bw) = expected_bw_bounds_hz;
    if !(min_bw > T::zero()) || !(max_bw >= min_bw) {
        return Err(DetectionError::InvalidConfig(
            "bandwidth bounds must be positive and ordered".into(),
        ));
    }
    Ok(match target {
        DeploymentTarget::Indoor => min_bw,
        DeploymentTarget::Outdoor => min_bw * T::of(0.25),
    })
}

/// Verdict of one probe in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ProbeVerdict<T> {
    pub probe_id: String,
    pub max_mean_ratio: T,
    pub max_power: T,
    pub triggered_by: Trigger,
}

/// One classified signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ClassifiedSignal<T> {
    pub frequency_hz: T,
    /// Arrival direction (multi-device mode only).
    pub aoa_deg: Option<T>,
    pub label: SignalLabel,
    pub probability: T,
    pub low_confidence: bool,
}

/// Full outcome of a detection pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DetectionReport<T> {
    /// Any probe fired.
    pub mmwave_detected: bool,
    pub probes: Vec<ProbeVerdict<T>>,
    /// Estimated frequency components, deduplicated within the cutoff.
    pub frequency_components_hz: Vec<T>,
    pub signals: Vec<ClassifiedSignal<T>>,
    /// True when any detected signal classifies as a radar waveform.
    pub spy_radar_present: bool,
    /// Number of distinct spy radars (devices in multi-device mode).
    pub spy_radar_count: usize,
    /// Band ranges no probe covers, if any.
    pub coverage_gaps_hz: Vec<(T, T)>,
}

/// Everything the detection pass needs besides the scene.
pub struct DetectorSetup<'a, T> {
    pub receiver: &'a ReceiverConfig<T>,
    pub detection: &'a DetectionConfig<T>,
    pub array: &'a ArrayGeometry<T>,
    pub wavelength_m: T,
    pub classifier: &'a ClassifierModel<T>,
    /// Separate co-channel devices by direction before classifying.
    pub multi_device: bool,
}

/// Runs the full detection pass: sweep probe, frequency-component
/// estimation and re-probing, the single-tone ladder, classification of
/// every triggered capture, and the spy-radar verdict.
pub fn run_detection<T: Real + FftNum>(
    scene: &SceneAtDetector<T>,
    setup: &DetectorSetup<'_, T>,
    seed: u64,
) -> Result<DetectionReport<T>, DetectionError> {
    setup.detection.validate()?;
    let det = setup.detection;
    let mut receiver = setup.receiver.clone();
    receiver.frames_per_detection = det.frames_per_detection;
    receiver.validate()?;

    let power_threshold = match det.power_threshold {
        Some(p) => p,
        None => {
            // Emitter-free calibration run (one frame suffices for a mean).
            let calm = SceneAtDetector::new(Vec::new(), scene.antennas, scene.noise_power_w);
            let cal_cfg = receiver.clone().with_frames(1);
            let rec = mix_and_filter(&calm, &det.sweep_probe(), &cal_cfg, probe_seed(seed, 0xca11))?;
            calibrate_power_threshold(if_power_series(&rec).smoothed(det.smoothing_window).mean())
        }
    };

    let mut probes = Vec::new();
    let mut components: Vec<T> = Vec::new();
    let mut signals: Vec<ClassifiedSignal<T>> = Vec::new();
    let mut mmwave_detected = false;

    // Sweep probe: narrowband emitters peak at their crossing time.
    let sweep = det.sweep_probe();
    let sweep_rec = mix_and_filter(scene, &sweep, &receiver, probe_seed(seed, 0))?;
    let sweep_power = if_power_series(&sweep_rec).smoothed(det.smoothing_window);
    let sweep_decision = probe_decision(&sweep_power, det, power_threshold);
    probes.push(verdict(&sweep, &sweep_power, sweep_decision.trigger));
    if sweep_decision.detected {
        mmwave_detected = true;
        let threshold = trigger_threshold(det, &sweep_power, sweep_decision.trigger, power_threshold);
        let sweep_components =
            sweep_peak_components(&sweep_power, &sweep, &receiver, det, threshold)?;
        // Re-probe each component with a matching tone and classify.
        for (idx, &f_m) in sweep_components.iter().enumerate() {
            push_component(&mut components, f_m, receiver.cutoff_hz);
            let tone = ProbeSignal::single_tone(f_m);
            let rec = mix_and_filter(scene, &tone, &receiver, probe_seed(seed, 0x100 + idx as u64))?;
            classify_capture(&rec, f_m, setup, &mut signals)?;
        }
    }

    // Single-tone ladder: wideband emitters sweep past a tone.
    for (idx, tone) in plan_single_tone_probes(det).iter().enumerate() {
        let rec = mix_and_filter(scene, tone, &receiver, probe_seed(seed, 0x200 + idx as u64))?;
        let power = if_power_series(&rec).smoothed(det.smoothing_window);
        let decision = probe_decision(&power, det, power_threshold);
        probes.push(verdict(tone, &power, decision.trigger));
        if decision.detected {
            mmwave_detected = true;
            let freq = tone.frequency(T::zero());
            push_component(&mut components, freq, receiver.cutoff_hz);
            classify_capture(&rec, freq, setup, &mut signals)?;
        }
    }

    // Verdict: any non-communication signal means a spy radar.
    let spy_radar_count = if setup.multi_device {
        count_radar_directions(&signals, det.aoa_merge_deg)
    } else {
        usize::from(signals.iter().any(|s| s.label == SignalLabel::Radar))
    };
    let spy_radar_present = spy_radar_count > 0;

    Ok(DetectionReport {
        mmwave_detected,
        probes,
        frequency_components_hz: components,
        signals,
        spy_radar_present,
        spy_radar_count,
        coverage_gaps_hz: coverage_gaps(det, &receiver),
    })
}

fn verdict<T: Real>(
    probe: &ProbeSignal<T>,
    power: &PowerSeries<T>,
    trigger: Trigger,
) -> ProbeVerdict<T> {
    let mean = power.mean();
    let max = power.max();
    ProbeVerdict {
        probe_id: probe.id(),
        max_mean_ratio: if mean > T::zero() { max / mean } else { T::zero() },
        max_power: max,
        triggered_by: trigger,
    }
}

fn trigger_threshold<T: Real>(
    det: &DetectionConfig<T>,
    power: &PowerSeries<T>,
    trigger: Trigger,
    power_threshold: T,
) -> T {
    match trigger {
        Trigger::Ratio => det.ratio_threshold * power.mean(),
        _ => power_threshold,
    }
}

/// Distinct frequency components from the sweep capture: the power series is
/// folded to per-chirp-position maxima (a narrowband emitter crosses the
/// restarting sweep at a fixed position), clusters above the trigger
/// threshold are merged when closer than twice the crossing width, and each
/// cluster's peak time maps to a frequency via the sweep slope.
fn sweep_peak_components<T: Real>(
    power: &PowerSeries<T>,
    sweep: &ProbeSignal<T>,
    receiver: &ReceiverConfig<T>,
    det: &DetectionConfig<T>,
    threshold: T,
) -> Result<Vec<T>, DetectionError> {
    let folded = power.folded_max();
    let dt = power.sample_period_s;
    let crossing_s = receiver.cutoff_hz / det.sweep_slope_hz_per_s;
    let merge_gap = ((T::of(2.0) * crossing_s / dt).as_f64().ceil() as usize).max(1);

    let mut clusters: Vec<(usize, usize)> = Vec::new(); // (start, end) inclusive
    for (i, &v) in folded.iter().enumerate() {
        if v < threshold {
            continue;
        }
        match clusters.last_mut() {
            Some((_, end)) if i <= *end + merge_gap => *end = i,
            _ => clusters.push((i, i)),
        }
    }

    let mut components = Vec::new();
    for (start, end) in clusters.into_iter().take(16) {
        let argmax = (start..=end)
            .max_by(|&a, &b| folded[a].partial_cmp(&folded[b]).expect("finite power"))
            .expect("non-empty cluster");
        let t_max = T::of(argmax as f64) * dt;
        components.push(estimate_frequency_component(t_max, sweep)?);
    }
    Ok(components)
}

fn push_component<T: Real>(components: &mut Vec<T>, freq: T, cutoff: T) {
    if components.iter().all(|&c| (c - freq).abs() > cutoff) {
        components.push(freq);
    }
}

/// Classifies a triggered capture: antenna-averaged feature in single-device
/// mode; per-direction separated features in multi-device mode (falling back
/// to the averaged feature when the covariance degenerates).
fn classify_capture<T: Real + FftNum>(
    rec: &crate::frontend::IfRecord<T>,
    frequency_hz: T,
    setup: &DetectorSetup<'_, T>,
    signals: &mut Vec<ClassifiedSignal<T>>,
) -> Result<(), DetectionError> {
    if setup.multi_device {
        match music_spectrum(
            rec,
            setup.array,
            setup.wavelength_m,
            None,
            setup.detection.music_grid_step_deg,
        ) {
            Ok(music) => {
                let peaks: Vec<T> = music
                    .peaks
                    .iter()
                    .take(music.source_count.min(rec.antennas - 1))
                    .map(|p| p.angle_deg)
                    .collect();
                if !peaks.is_empty() {
                    for stream in spatial_separation(rec, setup.array, setup.wavelength_m, &peaks)? {
                        let feature = spectrum_from_stream(&stream, frequency_hz);
                        let c = setup.classifier.classify(&feature)?;
                        signals.push(ClassifiedSignal {
                            frequency_hz,
                            aoa_deg: Some(stream.aoa_deg),
                            label: c.label,
                            probability: c.probability,
                            low_confidence: c.low_confidence,
                        });
                    }
                    return Ok(());
                }
            }
            Err(LocalizeError::RankDeficient) => {}
            Err(other) => return Err(other.into()),
        }
    }
    let feature = extract_spectrum(rec)?;
    let c = setup.classifier.classify(&feature)?;
    signals.push(ClassifiedSignal {
        frequency_hz,
        aoa_deg: None,
        label: c.label,
        probability: c.probability,
        low_confidence: c.low_confidence,
    });
    Ok(())
}

/// Counts distinct radar arrival directions: radar-classified signals merge
/// into one device when their directions are within the merge tolerance
/// (a wideband emitter triggers several probes from the same direction).
fn count_radar_directions<T: Real>(signals: &[ClassifiedSignal<T>], merge_deg: T) -> usize {
    let mut directions: Vec<T> = Vec::new();
    let mut directionless_radar = false;
    for s in signals.iter().filter(|s| s.label == SignalLabel::Radar) {
        match s.aoa_deg {
            Some(aoa) => {
                if directions.iter().all(|&d| (d - aoa).abs() > merge_deg) {
                    directions.push(aoa);
                }
            }
            None => directionless_radar = true,
        }
    }
    if directions.is_empty() && directionless_radar {
        1
    } else {
        directions.len()
    }
}

/// Band intervals not covered by the sweep's sampled span or any tone.
fn coverage_gaps<T: Real>(
    det: &DetectionConfig<T>,
    receiver: &ReceiverConfig<T>,
) -> Vec<(T, T)> {
    let window = T::of(receiver.adc_samples_per_chirp as f64) / receiver.adc_rate_hz;
    let sweep_top = det.band_min_hz + det.sweep_slope_hz_per_s * window.min(receiver.sweep_time_s);
    let tone_top = plan_single_tone_probes(det)
        .last()
        .map(|t| t.frequency(T::zero()))
        .unwrap_or(det.band_min_hz);
    let covered_top = sweep_top.max(tone_top + receiver.cutoff_hz);
    if covered_top < det.band_max_hz {
        vec![(covered_top, det.band_max_hz)]
    } else {
        Vec::new()
    }
}

fn probe_seed(seed: u64, salt: u64) -> u64 {
    let mut h = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(salt.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    h ^= h >> 31;
    h.wrapping_mul(0xd6e8_feb8_6659_fd93)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_channel, DevicePose, PathLossParams};
    use crate::classify::{generate_dataset, train_model, DatasetConfig, TrainConfig};
    use crate::waveforms::PhaseWaveform;

    fn series(values: Vec<f64>) -> PowerSeries<f64> {
        PowerSeries {
            values,
            sample_period_s: 1.0 / 12e6,
            samples_per_chirp: 1024,
        }
    }

    #[test]
    fn flat_series_below_power_threshold_is_not_detected() {
        let cfg = DetectionConfig::<f64>::default();
        let p = series(vec![1.0; 4096]);
        let d = probe_decision(&p, &cfg, 100.0);
        assert!(!d.detected);
        assert_eq!(d.trigger, Trigger::None);
    }

    #[test]
    fn ratio_of_five_fires_the_relative_branch() {
        let cfg = DetectionConfig::<f64>::default();
        let mut values = vec![1.0; 1024];
        // max/mean = 5: one sample at v so that v / ((1023 + v)/1024) = 5.
        let v = 5.0 * 1023.0 / (1024.0 - 5.0);
        values[300] = v;
        let p = series(values);
        let d = probe_decision(&p, &cfg, f64::INFINITY);
        assert!(d.detected);
        assert_eq!(d.trigger, Trigger::Ratio);
        assert!((d.t_max_s - 300.0 / 12e6).abs() < 1e-12);
    }

    #[test]
    fn all_zero_series_is_undetected() {
        let cfg = DetectionConfig::<f64>::default();
        let p = series(vec![0.0; 2048]);
        let d = probe_decision(&p, &cfg, f64::INFINITY);
        assert!(!d.detected);
        assert_eq!(d.trigger, Trigger::None);
    }

    #[test]
    fn frequency_component_from_sweep_time() {
        let sweep = ProbeSignal::sweep(77e9, 39.9756e12);
        assert_eq!(estimate_frequency_component(0.0, &sweep).unwrap(), 77e9);
        let sweep_time: f64 = 100e-6;
        let f = estimate_frequency_component(sweep_time, &sweep).unwrap();
        assert!((f - (77e9 + 39.9756e12 * sweep_time)).abs() < 1.0);
        let tone = ProbeSignal::single_tone(78e9);
        assert_eq!(
            estimate_frequency_component(1e-6, &tone).unwrap_err(),
            DetectionError::NotASweepProbe
        );
    }

    #[test]
    fn tone_ladder_covers_band_inclusively() {
        let cfg = DetectionConfig::<f64>::default(); // 77-81 GHz, 800 MHz
        let tones: Vec<f64> = plan_single_tone_probes(&cfg)
            .iter()
            .map(|t| t.frequency(0.0))
            .collect();
        assert_eq!(tones, vec![77.0e9, 77.8e9, 78.6e9, 79.4e9, 80.2e9, 81.0e9]);
    }

    #[test]
    fn oversized_step_yields_single_tone() {
        let cfg = DetectionConfig::<f64> {
            tone_step_hz: 10e9,
            ..DetectionConfig::default()
        };
        let tones = plan_single_tone_probes(&cfg);
        assert_eq!(tones.len(), 1);
        assert_eq!(tones[0].frequency(0.0), 77e9);
    }

    #[test]
    fn any_wideband_emitter_overlaps_a_tone() {
        use rand::{Rng, SeedableRng};
        let cfg = DetectionConfig::<f64>::default();
        let tones: Vec<f64> = plan_single_tone_probes(&cfg)
            .iter()
            .map(|t| t.frequency(0.0))
            .collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let bw = rng.random_range(800e6..4e9);
            let start = rng.random_range(77e9..81e9 - bw);
            let overlap = tones.iter().any(|&t| t >= start && t <= start + bw);
            assert!(overlap, "band [{start}, {}] misses all tones", start + bw);
        }
    }

    #[test]
    fn step_recommendation_policy() {
        assert_eq!(
            recommend_step_size(DeploymentTarget::Indoor, (1e9, 4e9)).unwrap(),
            1e9
        );
        assert_eq!(
            recommend_step_size(DeploymentTarget::Outdoor, (1e9, 4e9)).unwrap(),
            250e6
        );
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let min_bw = rng.random_range(1e8..4e9);
            let max_bw = min_bw * rng.random_range(1.0..4.0);
            for target in [DeploymentTarget::Indoor, DeploymentTarget::Outdoor] {
                let step = recommend_step_size(target, (min_bw, max_bw)).unwrap();
                assert!(step <= min_bw, "step {step} exceeds min bandwidth {min_bw}");
            }
        }
    }

    #[test]
    fn power_threshold_calibration() {
        let p = calibrate_power_threshold(2e-9f64);
        assert!((p / 2e-9 - 10f64.powf(1.5)).abs() < 1e-9);
        assert!(calibrate_power_threshold(0.0f64).is_infinite());
    }

    // Shared classifier for end-to-end detection tests; trained once on
    // features whose averaging depth matches the detection window below.
    fn tiny_classifier() -> &'static ClassifierModel<f64> {
        use std::sync::OnceLock;
        static MODEL: OnceLock<ClassifierModel<f64>> = OnceLock::new();
        MODEL.get_or_init(|| {
            let cfg = DatasetConfig::<f64> {
                per_class: 120,
                band_min_hz: 77e9,
                band_max_hz: 81e9,
                receiver: ReceiverConfig::default().with_frames(1).with_chirps(8),
                ..DatasetConfig::default()
            };
            let ds = generate_dataset(&cfg, 555).unwrap();
            let mut model = ClassifierModel::new(555);
            let tc = TrainConfig {
                epochs: 16,
                parallel: true,
                ..TrainConfig::default()
            };
            train_model(&mut model, &ds.train_views(), &ds.val_views(), &tc).unwrap();
            model
        })
    }

    fn detection_scene(
        waves: &[PhaseWaveform<f64>],
        snr_db: f64,
        seed: u64,
    ) -> (SceneAtDetector<f64>, ArrayGeometry<f64>, f64) {
        let lambda = 3.9e-3;
        let det = DevicePose::detector(0.0, 0.0);
        let array = ArrayGeometry::default_for_wavelength(lambda);
        let p = PathLossParams {
            tx_power_w: 1.0,
            antenna_area_m2: 0.01,
            scattering: 0.5,
            wavelength_m: lambda,
        };
        let mut links = Vec::new();
        let mut signal_power: f64 = 0.0;
        for (i, w) in waves.iter().enumerate() {
            let pose = DevicePose::emitter(1.0 + i as f64, 5.0);
            let (link, _) = apply_channel(w, &pose, &det, &array, &p, 0.0, seed).unwrap();
            // SNR is set against the time-averaged in-band IF power.
            let in_band = link.gain
                * link.gain
                * w.in_band_power_fraction(6e6)
                * w.in_band_time_fraction(6e6);
            signal_power = signal_power.max(in_band);
            links.push(link);
        }
        let noise = if waves.is_empty() {
            1e-9
        } else {
            signal_power / 10f64.powf(snr_db / 10.0)
        };
        (
            SceneAtDetector::new(links, array.elements, noise),
            array,
            lambda,
        )
    }

    #[test]
    fn end_to_end_detection_verdicts() {
        let classifier = tiny_classifier();
        let receiver = ReceiverConfig::default().with_chirps(8);
        let detection = DetectionConfig {
            frames_per_detection: 1,
            ..DetectionConfig::default()
        };

        // FMCW spy radar: detected and identified.
        let (scene, array, lambda) = detection_scene(
            &[PhaseWaveform::fmcw_from_bandwidth(77e9, 4e9, 100e-6)],
            15.0,
            1,
        );
        let setup = DetectorSetup {
            receiver: &receiver,
            detection: &detection,
            array: &array,
            wavelength_m: lambda,
            classifier,
            multi_device: false,
        };
        let report = run_detection(&scene, &setup, 42).unwrap();
        assert!(report.mmwave_detected);
        assert!(report.spy_radar_present, "report: {report:?}");
        assert_eq!(report.spy_radar_count, 1);

        // WiGig only: detected as a mmWave signal but not a spy radar.
        let (scene, array, lambda) =
            detection_scene(&[PhaseWaveform::wigig_ofdm(78.6e9, 3)], 15.0, 2);
        let setup = DetectorSetup {
            receiver: &receiver,
            detection: &detection,
            array: &array,
            wavelength_m: lambda,
            classifier,
            multi_device: false,
        };
        let report = run_detection(&scene, &setup, 43).unwrap();
        assert!(report.mmwave_detected, "report: {report:?}");
        assert!(!report.spy_radar_present, "report: {report:?}");
        assert_eq!(report.spy_radar_count, 0);

        // Empty scene with noise: quiet.
        let (scene, array, lambda) = detection_scene(&[], 0.0, 3);
        let setup = DetectorSetup {
            receiver: &receiver,
            detection: &detection,
            array: &array,
            wavelength_m: lambda,
            classifier,
            multi_device: false,
        };
        let report = run_detection(&scene, &setup, 44).unwrap();
        assert!(!report.spy_radar_present);
        // Invariant: a spy radar implies a detected mmWave signal.
        assert!(report.spy_radar_present <= report.mmwave_detected);
    }

    #[test]
    fn cw_emitter_frequency_component_is_recovered() {
        let classifier = tiny_classifier();
        let receiver = ReceiverConfig::default().with_chirps(8);
        let detection = DetectionConfig {
            frames_per_detection: 1,
            ..DetectionConfig::default()
        };
        let (scene, array, lambda) =
            detection_scene(&[PhaseWaveform::cw(77.5e9, 0.0)], 15.0, 7);
        let setup = DetectorSetup {
            receiver: &receiver,
            detection: &detection,
            array: &array,
            wavelength_m: lambda,
            classifier,
            multi_device: false,
        };
        let report = run_detection(&scene, &setup, 45).unwrap();
        assert!(report.spy_radar_present);
        let best = report
            .frequency_components_hz
            .iter()
            .map(|f| (f - 77.5e9).abs())
            .fold(f64::MAX, f64::min);
        assert!(best <= 6e6, "frequency component off by {best} Hz");
    }

    #[test]
    fn detection_is_monotone_in_snr() {
        let classifier = tiny_classifier();
        let receiver = ReceiverConfig::default().with_chirps(8);
        let detection = DetectionConfig {
            frames_per_detection: 1,
            ..DetectionConfig::default()
        };
        let mut detected_at = Vec::new();
        for snr_db in [6.0, 10.0, 14.0, 18.0] {
            let (scene, array, lambda) =
                detection_scene(&[PhaseWaveform::cw(78.3e9, 0.0)], snr_db, 11);
            let setup = DetectorSetup {
                receiver: &receiver,
                detection: &detection,
                array: &array,
                wavelength_m: lambda,
                classifier,
                multi_device: false,
            };
            let report = run_detection(&scene, &setup, 50).unwrap();
            detected_at.push(report.mmwave_detected);
        }
        // Raising power never flips detection off.
        for pair in detected_at.windows(2) {
            assert!(pair[1] >= pair[0], "detection flipped off: {detected_at:?}");
        }
        assert!(*detected_at.last().unwrap());
    }

    #[test]
    fn antenna_permutation_leaves_decision_unchanged() {
        let (scene, _, _) = detection_scene(&[PhaseWaveform::cw(78.3e9, 0.0)], 12.0, 13);
        let receiver = ReceiverConfig::default().with_frames(1).with_chirps(4);
        let rec = mix_and_filter(&scene, &ProbeSignal::sweep(77e9, 39.9756e12), &receiver, 3)
            .unwrap();
        let cfg = DetectionConfig::<f64>::default();
        let baseline = probe_decision(&if_power_series(&rec).smoothed(4), &cfg, f64::INFINITY);

        // Reverse the antenna axis.
        let mut permuted = rec.clone();
        for t in 0..permuted.time_samples() {
            let base = t * permuted.antennas;
            permuted.samples[base..base + rec.antennas].reverse();
        }
        let shuffled = probe_decision(&if_power_series(&permuted).smoothed(4), &cfg, f64::INFINITY);
        assert_eq!(baseline.detected, shuffled.detected);
        assert_eq!(baseline.t_max_s, shuffled.t_max_s);
    }
}
