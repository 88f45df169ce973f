//! Emitter localization: per-anchor direction finding, bearing-only
//! triangulation, and multi-emitter assignment across anchors.

pub mod music;
pub mod triangulate;

use num_complex::Complex;
use thiserror::Error;

use crate::channel::{array_phases, ArrayGeometry};
use crate::frontend::IfRecord;
use crate::real::{cis, Real};

pub use music::{music_spectrum, MusicPeak, MusicSpectrum, DEFAULT_GRID_STEP_DEG};
pub use triangulate::{triangulate, AnchorBearing, PositionEstimate};

/// Errors from direction finding and triangulation.
#[derive(Debug, Error, PartialEq)]
pub enum LocalizeError {
    #[error("need at least {need} anchors, got {got}")]
    TooFewAnchors { got: usize, need: usize },
    #[error("geometry is ill-conditioned; offending anchors: {anchors:?}")]
    IllConditioned { anchors: Vec<usize> },
    #[error("covariance is rank deficient (empty or all-zero record)")]
    RankDeficient,
    #[error("{sources} sources do not fit a {antennas}-antenna array")]
    TooManySources { sources: usize, antennas: usize },
    #[error("array must have at least 2 antennas, got {got}")]
    TooFewAntennas { got: usize },
    #[error("combination budget exceeded: {combinations} > cap {cap}")]
    CombinationBudgetExceeded { combinations: usize, cap: usize },
    #[error("no bearing combination produced a valid solution")]
    NoValidCombination,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// One bearing measured at an anchor, with its pseudo-spectrum peak height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BearingObservation<T> {
    pub angle_deg: T,
    pub peak_height: T,
}

/// Anchor position plus every arrival direction observed there.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorObservation<T> {
    pub x: T,
    pub y: T,
    pub bearings: Vec<BearingObservation<T>>,
}

impl<T: Real> AnchorObservation<T> {
    pub fn new(x: T, y: T, bearings: Vec<BearingObservation<T>>) -> Self {
        Self { x, y, bearings }
    }

    /// Number of devices observed from this anchor.
    pub fn device_count(&self) -> usize {
        self.bearings.len()
    }
}

/// Estimated emitter positions, best residual first.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult<T> {
    pub positions: Vec<PositionEstimate<T>>,
    /// Estimated device count (max of per-anchor counts).
    pub device_count: usize,
}

/// Knobs of the multi-device assignment search.
#[derive(Debug, Clone, Copy)]
pub struct MultiDeviceOptions {
    /// Abort when the combination count exceeds this cap.
    pub combination_cap: usize,
    /// A combination must keep at least this many bearings to be scored.
    pub min_bearings: usize,
}

impl Default for MultiDeviceOptions {
    fn default() -> Self {
        Self {
            combination_cap: 1_000_000,
            min_bearings: 3,
        }
    }
}

/// Localizes `max(n_i)` emitters from multi-bearing anchor observations.
///
/// Enumerates one bearing per anchor (anchors that observed fewer devices
/// than the maximum may also be skipped, covering occlusion), triangulates
/// every combination with at least `min_bearings` lines, and greedily
/// accepts the lowest-residual candidates whose bearing sets are pairwise
/// disjoint — one bearing may explain at most one emitter.
pub fn multi_device_localize<T: Real>(
    observations: &[AnchorObservation<T>],
    options: &MultiDeviceOptions,
) -> Result<LocalizationResult<T>, LocalizeError> {
    if observations.len() < 3 {
        return Err(LocalizeError::TooFewAnchors {
            got: observations.len(),
            need: 3,
        });
    }
    if observations.iter().any(|o| o.bearings.is_empty()) {
        return Err(LocalizeError::InvalidParameter(
            "every anchor must observe at least one bearing".into(),
        ));
    }
    let device_count = observations
        .iter()
        .map(AnchorObservation::device_count)
        .max()
        .unwrap_or(0);

    // Option list per anchor: every bearing, plus "skip" where the anchor
    // saw fewer devices than the maximum (it may have been occluded).
    let option_counts: Vec<usize> = observations
        .iter()
        .map(|o| {
            let skip = usize::from(o.device_count() < device_count);
            o.bearings.len() + skip
        })
        .collect();
    let combinations: usize = option_counts.iter().try_fold(1usize, |acc, &n| {
        acc.checked_mul(n)
    }).unwrap_or(usize::MAX);
    if combinations > options.combination_cap {
        return Err(LocalizeError::CombinationBudgetExceeded {
            combinations,
            cap: options.combination_cap,
        });
    }

    // Mixed-radix enumeration; digit == bearings.len() means "skip".
    let mut digits = vec![0usize; observations.len()];
    let mut candidates: Vec<(PositionEstimate<T>, usize)> = Vec::new();
    let mut last_error = None;
    for index in 0..combinations {
        let mut selection = Vec::with_capacity(observations.len());
        let mut provenance = Vec::with_capacity(observations.len());
        for (anchor, (&digit, obs)) in digits.iter().zip(observations).enumerate() {
            if digit < obs.bearings.len() {
                selection.push(AnchorBearing::new(
                    obs.x,
                    obs.y,
                    obs.bearings[digit].angle_deg,
                ));
                provenance.push((anchor, digit));
            }
        }
        if selection.len() >= options.min_bearings {
            match triangulate::triangulate_with_provenance(&selection, &provenance) {
                Ok(estimate) => candidates.push((estimate, index)),
                Err(err) => last_error = Some(err),
            }
        }
        // Advance the counter.
        for (digit, &radix) in digits.iter_mut().zip(&option_counts) {
            *digit += 1;
            if *digit < radix {
                break;
            }
            *digit = 0;
        }
    }

    if candidates.is_empty() {
        return Err(last_error.unwrap_or(LocalizeError::NoValidCombination));
    }

    candidates.sort_by(|a, b| {
        a.0.residual
            .partial_cmp(&b.0.residual)
            .expect("finite residuals")
            .then(a.1.cmp(&b.1))
    });

    let mut accepted: Vec<PositionEstimate<T>> = Vec::new();
    let mut used: Vec<(usize, usize)> = Vec::new();
    for (candidate, _) in candidates {
        if accepted.len() == device_count {
            break;
        }
        if candidate
            .bearings_used
            .iter()
            .any(|pair| used.contains(pair))
        {
            continue;
        }
        used.extend(candidate.bearings_used.iter().copied());
        accepted.push(candidate);
    }

    Ok(LocalizationResult {
        positions: accepted,
        device_count,
    })
}

/// Single-channel stream extracted toward one arrival direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedStream<T> {
    pub aoa_deg: T,
    pub samples: Vec<Complex<T>>,
    pub samples_per_chirp: usize,
}

/// Splits a multi-antenna record into one stream per arrival direction with
/// a conventional beamformer (steering-matched weighted sum), so each
/// downstream feature sees a single device.
pub fn spatial_separation<T: Real>(
    rec: &IfRecord<T>,
    array: &ArrayGeometry<T>,
    wavelength_m: T,
    peaks_deg: &[T],
) -> Result<Vec<SeparatedStream<T>>, LocalizeError> {
    if peaks_deg.is_empty() {
        return Err(LocalizeError::InvalidParameter(
            "need at least one peak to separate".into(),
        ));
    }
    if peaks_deg.len() >= rec.antennas {
        return Err(LocalizeError::TooManySources {
            sources: peaks_deg.len(),
            antennas: rec.antennas,
        });
    }
    let norm = T::of(rec.antennas as f64).recip();
    peaks_deg
        .iter()
        .map(|&angle| {
            let phases = array_phases(array, angle, wavelength_m)
                .map_err(|e| LocalizeError::InvalidParameter(e.to_string()))?;
            let weights: Vec<Complex<T>> = phases.iter().map(|&p| cis(p)).collect();
            let samples = (0..rec.time_samples())
                .map(|i| {
                    rec.antenna_vector(i)
                        .iter()
                        .zip(&weights)
                        .map(|(x, w)| x * w.conj())
                        .sum::<Complex<T>>()
                        * norm
                })
                .collect();
            Ok(SeparatedStream {
                aoa_deg: angle,
                samples,
                samples_per_chirp: rec.samples_per_chirp,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_channel, bearing_deg, DevicePose, PathLossParams};
    use crate::frontend::{mix_and_filter, ProbeSignal, ReceiverConfig, SceneAtDetector};
    use crate::waveforms::PhaseWaveform;

    const LAMBDA: f64 = 3.9e-3;

    fn obs(x: f64, y: f64, angles: &[f64]) -> AnchorObservation<f64> {
        AnchorObservation::new(
            x,
            y,
            angles
                .iter()
                .map(|&a| BearingObservation {
                    angle_deg: a,
                    peak_height: 1.0,
                })
                .collect(),
        )
    }

    #[test]
    fn device_count_is_maximum_over_anchors() {
        let anchors = vec![
            obs(0.0, 0.0, &[10.0, 20.0]),
            obs(5.0, 0.0, &[-15.0]),
            obs(0.0, 5.0, &[100.0, 140.0]),
        ];
        let result = multi_device_localize(&anchors, &MultiDeviceOptions::default()).unwrap();
        assert_eq!(result.device_count, 2);
    }

    #[test]
    fn two_emitters_recovered_from_exact_bearings() {
        let targets = [(3.0, 4.0), (-2.0, 5.0)];
        let anchor_positions = [(0.0, 0.0), (6.0, 0.0), (-5.0, 1.0)];
        let anchors: Vec<AnchorObservation<f64>> = anchor_positions
            .iter()
            .map(|&a| {
                let angles: Vec<f64> = targets.iter().map(|&t| bearing_deg(a, t)).collect();
                obs(a.0, a.1, &angles)
            })
            .collect();
        let result = multi_device_localize(&anchors, &MultiDeviceOptions::default()).unwrap();
        assert_eq!(result.positions.len(), 2);
        for target in targets {
            let best = result
                .positions
                .iter()
                .map(|p| p.distance_to(target.0, target.1))
                .fold(f64::MAX, f64::min);
            assert!(best < 0.01, "target {target:?} missed by {best}");
        }
        // Accepted combinations are near-exact; cross-paired ones are far off.
        for p in &result.positions {
            assert!(p.residual < 1e-12);
        }
    }

    #[test]
    fn single_device_reduces_to_plain_triangulation() {
        let target = (2.0, 6.0);
        let anchor_positions = [(0.0, 0.0), (4.0, 0.0), (8.0, 1.0)];
        let anchors: Vec<AnchorObservation<f64>> = anchor_positions
            .iter()
            .map(|&a| obs(a.0, a.1, &[bearing_deg(a, target)]))
            .collect();
        let multi = multi_device_localize(&anchors, &MultiDeviceOptions::default()).unwrap();
        assert_eq!(multi.device_count, 1);
        assert_eq!(multi.positions.len(), 1);

        let direct = triangulate(
            &anchor_positions
                .iter()
                .map(|&a| AnchorBearing::new(a.0, a.1, bearing_deg(a, target)))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        assert!((multi.positions[0].x - direct.x).abs() < 1e-12);
        assert!((multi.positions[0].y - direct.y).abs() < 1e-12);
    }

    #[test]
    fn occluded_anchor_skip_keeps_problem_solvable() {
        let targets = [(3.0, 4.0), (-2.0, 5.0)];
        let anchor_positions = [(0.0, 0.0), (6.0, 0.0), (-5.0, 1.0), (1.0, -4.0)];
        let anchors: Vec<AnchorObservation<f64>> = anchor_positions
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                if i == 3 {
                    // This anchor only saw the first emitter.
                    obs(a.0, a.1, &[bearing_deg(a, targets[0])])
                } else {
                    let angles: Vec<f64> = targets.iter().map(|&t| bearing_deg(a, t)).collect();
                    obs(a.0, a.1, &angles)
                }
            })
            .collect();
        let result = multi_device_localize(&anchors, &MultiDeviceOptions::default()).unwrap();
        assert_eq!(result.positions.len(), 2);
        for target in targets {
            let best = result
                .positions
                .iter()
                .map(|p| p.distance_to(target.0, target.1))
                .fold(f64::MAX, f64::min);
            assert!(best < 0.01, "target {target:?} missed by {best}");
        }
    }

    #[test]
    fn budget_cap_is_enforced() {
        let anchors: Vec<AnchorObservation<f64>> = (0..6)
            .map(|i| obs(i as f64, 0.0, &[0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0]))
            .collect();
        let options = MultiDeviceOptions {
            combination_cap: 1000,
            min_bearings: 3,
        };
        assert!(matches!(
            multi_device_localize(&anchors, &options),
            Err(LocalizeError::CombinationBudgetExceeded { .. })
        ));
    }

    #[test]
    fn requires_three_anchors() {
        let anchors = vec![obs(0.0, 0.0, &[10.0]), obs(5.0, 0.0, &[-10.0])];
        assert!(matches!(
            multi_device_localize(&anchors, &MultiDeviceOptions::default()),
            Err(LocalizeError::TooFewAnchors { got: 2, need: 3 })
        ));
    }

    fn path_loss() -> PathLossParams<f64> {
        PathLossParams {
            tx_power_w: 1.0,
            antenna_area_m2: 0.01,
            scattering: 0.5,
            wavelength_m: LAMBDA,
        }
    }

    fn cw_at_angle(angle_deg: f64, freq: f64) -> (PhaseWaveform<f64>, DevicePose<f64>) {
        let rad = angle_deg.to_radians();
        (
            PhaseWaveform::cw(freq, 0.0),
            DevicePose::emitter(5.0 * rad.sin(), 5.0 * rad.cos()),
        )
    }

    fn build_record(
        emitters: &[(PhaseWaveform<f64>, DevicePose<f64>)],
        noise: f64,
        probe_hz: f64,
    ) -> (IfRecord<f64>, ArrayGeometry<f64>) {
        let det = DevicePose::detector(0.0, 0.0);
        let array = ArrayGeometry::default_for_wavelength(LAMBDA);
        let links: Vec<_> = emitters
            .iter()
            .map(|(w, p)| {
                apply_channel(w, p, &det, &array, &path_loss(), noise, 11)
                    .unwrap()
                    .0
            })
            .collect();
        let scene = SceneAtDetector::new(links, array.elements, noise);
        let cfg = ReceiverConfig::default().with_frames(1).with_chirps(4);
        (
            mix_and_filter(&scene, &ProbeSignal::single_tone(probe_hz), &cfg, 11).unwrap(),
            array,
        )
    }

    #[test]
    fn separation_single_source_correlates_with_reference() {
        let source = cw_at_angle(25.0, 78.0e9);
        let (rec, array) = build_record(std::slice::from_ref(&source), 0.0, 78.0005e9);
        let streams = spatial_separation(&rec, &array, LAMBDA, &[25.0]).unwrap();
        assert_eq!(streams.len(), 1);
        // Reference: antenna 0 of the single-emitter record.
        let reference: Vec<_> = (0..rec.time_samples())
            .map(|i| rec.antenna_vector(i)[0])
            .collect();
        let dot: f64 = streams[0]
            .samples
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a * b.conj()).re)
            .sum();
        let na: f64 = streams[0].samples.iter().map(|s| s.norm_sqr()).sum();
        let nb: f64 = reference.iter().map(|s| s.norm_sqr()).sum();
        let correlation = dot / (na * nb).sqrt();
        assert!(correlation > 0.99, "correlation {correlation}");
    }

    #[test]
    fn separation_rejects_interferer_by_ten_db() {
        let a = cw_at_angle(20.0, 78.0e9);
        let b = cw_at_angle(-20.0, 78.002e9);
        let (rec_both, array) = build_record(&[a.clone(), b.clone()], 0.0, 78.001e9);
        let (rec_a, _) = build_record(&[a], 0.0, 78.001e9);
        let (rec_b, _) = build_record(&[b], 0.0, 78.001e9);
        let streams = spatial_separation(&rec_both, &array, LAMBDA, &[20.0, -20.0]).unwrap();

        // Beamform the isolated records with the same weights to measure
        // signal and interference content per output.
        let power_toward = |rec: &IfRecord<f64>, angle: f64| -> f64 {
            let s = spatial_separation(rec, &array, LAMBDA, &[angle]).unwrap();
            s[0].samples.iter().map(|x| x.norm_sqr()).sum::<f64>()
        };
        let signal_a = power_toward(&rec_a, 20.0);
        let interference_b_into_a = power_toward(&rec_b, 20.0);
        let isr_a = interference_b_into_a / signal_a;
        assert!(
            isr_a < 0.1,
            "interference-to-signal at +20 deg: {} dB",
            10.0 * isr_a.log10()
        );
        let signal_b = power_toward(&rec_b, -20.0);
        let interference_a_into_b = power_toward(&rec_a, -20.0);
        let isr_b = interference_a_into_b / signal_b;
        assert!(isr_b < 0.1);
        assert_eq!(streams.len(), 2);
    }

    #[test]
    fn steering_into_empty_direction_yields_noise_floor() {
        let noise = 1e-9;
        let source = cw_at_angle(40.0, 78.0e9);
        let (rec, array) = build_record(std::slice::from_ref(&source), noise, 78.0005e9);
        // A noise-only record with the same configuration.
        let scene = SceneAtDetector::<f64>::new(Vec::new(), 4, noise);
        let cfg = ReceiverConfig::default().with_frames(1).with_chirps(4);
        let rec_noise =
            mix_and_filter(&scene, &ProbeSignal::single_tone(78.0005e9), &cfg, 11).unwrap();

        // Null of the 4-element array w.r.t. a source at 40 degrees.
        let source_phase = std::f64::consts::PI * 40.0f64.to_radians().sin();
        let mut best_null = (0.0f64, f64::MAX);
        for k in -890..890 {
            let angle = k as f64 * 0.1;
            let delta = std::f64::consts::PI * angle.to_radians().sin() - source_phase;
            let response: f64 = (0..4)
                .map(|n| num_complex::Complex::new(0.0, n as f64 * delta).exp())
                .sum::<num_complex::Complex<f64>>()
                .norm()
                / 4.0;
            if response < best_null.1 {
                best_null = (angle, response);
            }
        }
        let toward_null = spatial_separation(&rec, &array, LAMBDA, &[best_null.0]).unwrap();
        let on_noise = spatial_separation(&rec_noise, &array, LAMBDA, &[best_null.0]).unwrap();
        let p_null: f64 =
            toward_null[0].samples.iter().map(|s| s.norm_sqr()).sum::<f64>();
        let p_noise: f64 = on_noise[0].samples.iter().map(|s| s.norm_sqr()).sum::<f64>();
        let ratio_db = 10.0 * (p_null / p_noise).log10();
        assert!(ratio_db.abs() < 3.0, "null output {ratio_db} dB above noise");
    }

    #[test]
    fn separation_peak_count_bound() {
        let source = cw_at_angle(10.0, 78.0e9);
        let (rec, array) = build_record(&[source], 0.0, 78.0005e9);
        assert!(matches!(
            spatial_separation(&rec, &array, LAMBDA, &[0.0, 10.0, 20.0, 30.0]),
            Err(LocalizeError::TooManySources { .. })
        ));
    }
}
