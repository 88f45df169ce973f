//! Synthetic labeled dataset generation.
//!
//! The classifier trains on simulated captures: each sample draws a random
//! emitter of its class (frequency inside the band, SNR inside the range,
//! random phases and clock offset), demodulates it with a nearby tone, and
//! keeps the spectrum feature. Generation is fully seeded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel, ArrayGeometry, DevicePose, PathLossParams};
use crate::frontend::{mix_and_filter, ProbeSignal, ReceiverConfig, SceneAtDetector};
use crate::real::Real;
use crate::waveforms::PhaseWaveform;

use super::spectrum::{extract_spectrum, SignalLabel, SpectrumFeature};
use super::ClassifyError;

/// Waveform class a dataset sample is generated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveformClass {
    Cw,
    Fsk,
    Fmcw,
    Pulse,
    WigigOfdm,
}

impl WaveformClass {
    /// All five template classes.
    pub const ALL: [WaveformClass; 5] = [
        WaveformClass::Cw,
        WaveformClass::Fsk,
        WaveformClass::Fmcw,
        WaveformClass::Pulse,
        WaveformClass::WigigOfdm,
    ];

    /// Binary label this class maps to.
    pub fn label(self) -> SignalLabel {
        match self {
            WaveformClass::WigigOfdm => SignalLabel::WiGig,
            _ => SignalLabel::Radar,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WaveformClass::Cw => "cw",
            WaveformClass::Fsk => "fsk",
            WaveformClass::Fmcw => "fmcw",
            WaveformClass::Pulse => "pulse",
            WaveformClass::WigigOfdm => "wigig_ofdm",
        }
    }
}

/// Scene-template and randomization ranges for dataset generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DatasetConfig<T> {
    pub band_min_hz: T,
    pub band_max_hz: T,
    /// Post-mixing SNR range in dB.
    pub snr_db_range: (T, T),
    pub per_class: usize,
    /// Equalize the binary label counts (oversampling the minority side).
    pub balance_binary: bool,
    pub validation_fraction: T,
    pub classes: Vec<WaveformClass>,
    pub emitter_distance_m: T,
    pub receiver: ReceiverConfig<T>,
    /// Extract half the features through the direction-separation beamformer
    /// (single-channel) so the classifier sees both capture paths it will
    /// meet at inference time.
    pub separation_augmentation: bool,
}

impl<T: Real> Default for DatasetConfig<T> {
    fn default() -> Self {
        Self {
            band_min_hz: T::of(60e9),
            band_max_hz: T::of(64e9),
            snr_db_range: (T::of(5.0), T::of(25.0)),
            per_class: 400,
            balance_binary: false,
            validation_fraction: T::of(0.2),
            classes: WaveformClass::ALL.to_vec(),
            emitter_distance_m: T::of(5.0),
            // Short capture per sample: one frame of eight chirps.
            receiver: ReceiverConfig::default().with_frames(1).with_chirps(8),
            separation_augmentation: true,
        }
    }
}

/// Labeled spectrum features with the split and a content hash.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    pub features: Vec<SpectrumFeature<T>>,
    /// Waveform class each feature was generated from.
    pub provenance: Vec<WaveformClass>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    pub hash: u64,
}

impl<T: Real> LabeledDataset<T> {
    /// `(bins, label)` views of the training split.
    pub fn train_views(&self) -> Vec<(&[T], SignalLabel)> {
        self.views(&self.train_indices)
    }

    /// `(bins, label)` views of the validation split.
    pub fn val_views(&self) -> Vec<(&[T], SignalLabel)> {
        self.views(&self.val_indices)
    }

    fn views(&self, indices: &[usize]) -> Vec<(&[T], SignalLabel)> {
        indices
            .iter()
            .map(|&i| {
                (
                    self.features[i].bins.as_slice(),
                    self.features[i].label.expect("generated features are labeled"),
                )
            })
            .collect()
    }

    pub fn label_counts(&self) -> (usize, usize) {
        let radar = self
            .features
            .iter()
            .filter(|f| f.label == Some(SignalLabel::Radar))
            .count();
        (radar, self.features.len() - radar)
    }
}

/// Generates a labeled dataset from the class templates.
///
/// Per-class counts are `per_class`, or rebalanced to an even binary split
/// of the same total when `balance_binary` is set. Deterministic per seed;
/// the train/validation split is recorded in the result.
pub fn generate_dataset<T: Real + rustfft::FftNum>(
    cfg: &DatasetConfig<T>,
    seed: u64,
) -> Result<LabeledDataset<T>, ClassifyError> {
    if cfg.per_class == 0 {
        return Err(ClassifyError::InvalidTraining(
            "per_class must be at least 1".into(),
        ));
    }
    let radar_classes: Vec<WaveformClass> = cfg
        .classes
        .iter()
        .copied()
        .filter(|c| c.label() == SignalLabel::Radar)
        .collect();
    let wigig_classes: Vec<WaveformClass> = cfg
        .classes
        .iter()
        .copied()
        .filter(|c| c.label() == SignalLabel::WiGig)
        .collect();
    if radar_classes.is_empty() || wigig_classes.is_empty() {
        return Err(ClassifyError::SingleClassDataset);
    }

    // Target counts per class.
    let mut plan: Vec<(WaveformClass, usize)> = Vec::new();
    if cfg.balance_binary {
        let total = cfg.per_class * cfg.classes.len();
        let half = total / 2;
        for (i, &class) in radar_classes.iter().enumerate() {
            let share = half / radar_classes.len()
                + usize::from(i < half % radar_classes.len());
            plan.push((class, share));
        }
        let wigig_half = total - half;
        for (i, &class) in wigig_classes.iter().enumerate() {
            let share = wigig_half / wigig_classes.len()
                + usize::from(i < wigig_half % wigig_classes.len());
            plan.push((class, share));
        }
    } else {
        plan = cfg.classes.iter().map(|&c| (c, cfg.per_class)).collect();
    }

    let specs: Vec<(WaveformClass, u64)> = plan
        .iter()
        .flat_map(|&(class, count)| {
            (0..count).map(move |i| (class, sample_seed(seed, class, i)))
        })
        .collect();

    let samples: Vec<Result<(SpectrumFeature<T>, WaveformClass), ClassifyError>> = specs
        .par_iter()
        .map(|&(class, sample_seed)| {
            generate_sample(cfg, class, sample_seed).map(|f| (f, class))
        })
        .collect();

    let mut features = Vec::with_capacity(samples.len());
    let mut provenance = Vec::with_capacity(samples.len());
    for sample in samples {
        let (feature, class) = sample?;
        features.push(feature);
        provenance.push(class);
    }

    // Deterministic shuffled split.
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5117);
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let val_len = ((features.len() as f64) * cfg.validation_fraction.as_f64()).round() as usize;
    let val_indices: Vec<usize> = order[..val_len].to_vec();
    let train_indices: Vec<usize> = order[val_len..].to_vec();

    let hash = dataset_hash(&features);
    Ok(LabeledDataset {
        features,
        provenance,
        train_indices,
        val_indices,
        hash,
    })
}

fn sample_seed(seed: u64, class: WaveformClass, index: usize) -> u64 {
    let mut h = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((class as u64 + 1).wrapping_mul(0xbf58_476d_1ce4_e5b9))
        .wrapping_add((index as u64).wrapping_mul(0x94d0_49bb_1331_11eb));
    h ^= h >> 31;
    h.wrapping_mul(0xd6e8_feb8_6659_fd93)
}

fn generate_sample<T: Real + rustfft::FftNum>(
    cfg: &DatasetConfig<T>,
    class: WaveformClass,
    seed: u64,
) -> Result<SpectrumFeature<T>, ClassifyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let band = (cfg.band_min_hz.as_f64(), cfg.band_max_hz.as_f64());
    let margin = 200e6;
    let fs = cfg.receiver.adc_rate_hz.as_f64();

    // Random waveform of the class, and the tone that demodulates it.
    let (waveform, tone_hz): (PhaseWaveform<f64>, f64) = match class {
        WaveformClass::Cw => {
            let f = rng.random_range(band.0 + margin..band.1 - margin);
            let tone = f + rng.random_range(-0.35 * fs..0.35 * fs);
            (
                PhaseWaveform::cw(f, rng.random_range(0.0..std::f64::consts::TAU)),
                tone,
            )
        }
        WaveformClass::Fsk => {
            let f = rng.random_range(band.0 + margin..band.1 - margin);
            let delta = rng.random_range(0.5e6..5e6);
            let period = rng.random_range(50e-6..200e-6);
            let mut w = PhaseWaveform::fsk(f, f + delta, period);
            if let crate::waveforms::WaveformKind::Fsk {
                phase_a_rad,
                phase_b_rad,
                ..
            } = &mut w.kind
            {
                *phase_a_rad = rng.random_range(0.0..std::f64::consts::TAU);
                *phase_b_rad = rng.random_range(0.0..std::f64::consts::TAU);
            }
            let tone = f + rng.random_range(-0.25 * fs..0.25 * fs);
            (w, tone)
        }
        WaveformClass::Fmcw => {
            let start = rng.random_range(band.0..band.1 - 1e9);
            let bw = rng.random_range(0.8e9..(band.1 - start).min(4e9));
            let sweep = rng.random_range(50e-6..150e-6);
            let tone = rng.random_range(start + 0.1 * bw..start + 0.9 * bw);
            (PhaseWaveform::fmcw_from_bandwidth(start, bw, sweep), tone)
        }
        WaveformClass::Pulse => {
            let f = rng.random_range(band.0 + margin..band.1 - margin);
            let width: f64 = rng.random_range(0.5e-6..5e-6);
            let prf = rng.random_range(10e3..(0.5 / width).min(100e3));
            let mut w = PhaseWaveform::pulse(f, width, prf);
            if let crate::waveforms::WaveformKind::Pulse { phase_rad, .. } = &mut w.kind {
                *phase_rad = rng.random_range(0.0..std::f64::consts::TAU);
            }
            let tone = f + rng.random_range(-0.25 * fs..0.25 * fs);
            (w, tone)
        }
        WaveformClass::WigigOfdm => {
            let center = rng.random_range(band.0 + margin..band.1 - margin);
            let w = PhaseWaveform::wigig_ofdm(center, rng.random());
            let tone = center + rng.random_range(-100e6..100e6);
            (w, tone)
        }
    };

    // Scene: single emitter at the configured distance, straight ahead.
    let waveform: PhaseWaveform<T> = convert_waveform(&waveform);
    let detector = DevicePose::detector(T::zero(), T::zero());
    let emitter = DevicePose::emitter(T::zero(), cfg.emitter_distance_m);
    let wavelength = crate::real::speed_of_light::<T>()
        / ((cfg.band_min_hz + cfg.band_max_hz) * T::of(0.5));
    let array = ArrayGeometry::default_for_wavelength(wavelength);
    let path_loss = PathLossParams {
        tx_power_w: T::one(),
        antenna_area_m2: T::of(0.01),
        scattering: T::of(0.5),
        wavelength_m: wavelength,
    };
    let (mut link, _) = apply_channel(
        &waveform,
        &emitter,
        &detector,
        &array,
        &path_loss,
        T::zero(),
        seed,
    )
    .map_err(|e| ClassifyError::Generation(e.to_string()))?;
    link.time_offset_s = T::of(rng.random_range(0.0..200e-6));

    // Post-mixing SNR over the capture: the ratio of time-averaged in-band
    // signal power to noise power at the IF output. Defined on the record
    // (not per transmit sample) so the knob is comparable across waveforms
    // with very different duty cycles and occupied bandwidths.
    let snr_db = rng.random_range(cfg.snr_db_range.0.as_f64()..cfg.snr_db_range.1.as_f64());
    let scene = SceneAtDetector::new(vec![link], array.elements, T::zero());
    let probe = ProbeSignal::single_tone(T::of(tone_hz));
    let mut rec = mix_and_filter(&scene, &probe, &cfg.receiver, seed ^ 0xfeed)
        .map_err(|e| ClassifyError::Generation(e.to_string()))?;
    let mean_signal_power = crate::frontend::if_power_series(&rec).mean();
    let noise_power = mean_signal_power * T::of(10f64.powf(-snr_db / 10.0));
    crate::frontend::add_noise(&mut rec, noise_power, seed ^ 0xfeed);

    let feature = if cfg.separation_augmentation && rng.random_range(0.0..1.0) < 0.5 {
        // Beamform toward the emitter (straight ahead, with a small aiming
        // error) exactly as the multi-device path does at inference time.
        let aim = T::of(rng.random_range(-1.5..1.5));
        let stream = crate::localize::spatial_separation(&rec, &array, wavelength, &[aim])
            .map_err(|e| ClassifyError::Generation(e.to_string()))?
            .remove(0);
        crate::classify::spectrum_from_stream(&stream, T::of(tone_hz))
    } else {
        extract_spectrum(&rec)?
    };
    Ok(feature.with_label(class.label()))
}

fn convert_waveform<T: Real>(w: &PhaseWaveform<f64>) -> PhaseWaveform<T> {
    use crate::waveforms::WaveformKind as K;
    let kind = match &w.kind {
        K::Cw {
            carrier_hz,
            phase_rad,
        } => K::Cw {
            carrier_hz: T::of(*carrier_hz),
            phase_rad: T::of(*phase_rad),
        },
        K::Fsk {
            freq_a_hz,
            freq_b_hz,
            phase_a_rad,
            phase_b_rad,
            period_s,
        } => K::Fsk {
            freq_a_hz: T::of(*freq_a_hz),
            freq_b_hz: T::of(*freq_b_hz),
            phase_a_rad: T::of(*phase_a_rad),
            phase_b_rad: T::of(*phase_b_rad),
            period_s: T::of(*period_s),
        },
        K::Fmcw {
            start_hz,
            slope_hz_per_s,
            sweep_period_s,
        } => K::Fmcw {
            start_hz: T::of(*start_hz),
            slope_hz_per_s: T::of(*slope_hz_per_s),
            sweep_period_s: T::of(*sweep_period_s),
        },
        K::Pulse {
            carrier_hz,
            phase_rad,
            width_s,
            prf_hz,
        } => K::Pulse {
            carrier_hz: T::of(*carrier_hz),
            phase_rad: T::of(*phase_rad),
            width_s: T::of(*width_s),
            prf_hz: T::of(*prf_hz),
        },
        K::WigigOfdm {
            center_hz,
            subcarrier_spacing_hz,
            active_subcarriers,
            symbol_duration_s,
            constellation_seed,
        } => K::WigigOfdm {
            center_hz: T::of(*center_hz),
            subcarrier_spacing_hz: T::of(*subcarrier_spacing_hz),
            active_subcarriers: *active_subcarriers,
            symbol_duration_s: T::of(*symbol_duration_s),
            constellation_seed: *constellation_seed,
        },
    };
    PhaseWaveform {
        kind,
        amplitude: T::of(w.amplitude),
    }
}

/// FNV-1a over the exact feature bytes and labels; stable across runs.
pub fn dataset_hash<T: Real>(features: &[SpectrumFeature<T>]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |byte: u8| {
        h ^= byte as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    };
    for f in features {
        for bin in &f.bins {
            for b in bin.as_f64().to_le_bytes() {
                eat(b);
            }
        }
        eat(f.label.map_or(0xff, |l| l.as_byte()));
    }
    h
}
