//! Spectrum feature extraction for waveform classification.
//!
//! Features are 1024-bin magnitude spectra of single-tone-demodulated IF
//! records: tone demodulation only translates the signal's spectrum, so the
//! shape survives and can be classified, whereas sweep demodulation smears
//! it. Magnitudes are averaged across chirps and antennas, then
//! max-normalized.

use num_complex::Complex;
use rustfft::{FftNum, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::frontend::IfRecord;
use crate::localize::SeparatedStream;
use crate::real::Real;

use super::ClassifyError;

/// Feature length: one 1024-point transform per chirp.
pub const SPECTRUM_BINS: usize = 1024;

/// Binary class of an emitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalLabel {
    Radar,
    WiGig,
}

impl SignalLabel {
    pub fn as_byte(self) -> u8 {
        match self {
            SignalLabel::Radar => 0,
            SignalLabel::WiGig => 1,
        }
    }

    pub fn from_byte(byte: u8) -> Option<Self> {
        match byte {
            0 => Some(SignalLabel::Radar),
            1 => Some(SignalLabel::WiGig),
            _ => None,
        }
    }
}

/// Max-normalized magnitude spectrum with its demodulation tone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFeature<T> {
    pub bins: Vec<T>,
    pub probe_freq_hz: T,
    pub label: Option<SignalLabel>,
}

impl<T: Real> SpectrumFeature<T> {
    pub fn with_label(mut self, label: SignalLabel) -> Self {
        self.label = Some(label);
        self
    }

    /// Index of the strongest bin.
    pub fn argmax(&self) -> usize {
        self.bins
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite bins"))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Circular shift (in bins) aligning `other` to `self` best, by
    /// magnitude cross-correlation. Positive shift means `other` sits
    /// `shift` bins above `self`.
    pub fn best_alignment_shift(&self, other: &Self) -> isize {
        let n = self.bins.len();
        let correlation = |shift: usize| -> T {
            let mut acc = T::zero();
            for i in 0..n {
                acc += self.bins[i] * other.bins[(i + shift) % n];
            }
            acc
        };
        let mut best = (0usize, correlation(0));
        for shift in 1..n {
            let acc = correlation(shift);
            if acc > best.1 {
                best = (shift, acc);
            }
        }
        let s = best.0 as isize;
        if s > n as isize / 2 {
            s - n as isize
        } else {
            s
        }
    }
}

/// Extracts the classification feature from a single-tone IF record:
/// per-chirp, per-antenna 1024-point transform magnitudes, averaged, then
/// normalized so the peak is 1 (all-zero records stay zero).
pub fn extract_spectrum<T: Real + FftNum>(
    rec: &IfRecord<T>,
) -> Result<SpectrumFeature<T>, ClassifyError> {
    if rec.probe.is_sweep() {
        return Err(ClassifyError::SweepRecordRejected);
    }
    let chunks: Vec<Vec<Complex<T>>> = (0..rec.frames)
        .flat_map(|f| (0..rec.chirps_per_frame).map(move |c| (f, c)))
        .flat_map(|(f, c)| {
            (0..rec.antennas).map(move |a| rec.chirp_antenna_samples(f, c, a))
        })
        .collect();
    Ok(spectrum_from_chunks(
        chunks.iter().map(|c| c.as_slice()),
        rec.probe.frequency(T::zero()),
    ))
}

/// Feature from a beamformed single-channel stream (multi-device path).
pub fn spectrum_from_stream<T: Real + FftNum>(
    stream: &SeparatedStream<T>,
    probe_freq_hz: T,
) -> SpectrumFeature<T> {
    let chunks: Vec<&[Complex<T>]> = stream
        .samples
        .chunks(stream.samples_per_chirp)
        .filter(|c| !c.is_empty())
        .collect();
    spectrum_from_chunks(chunks.into_iter(), probe_freq_hz)
}

fn spectrum_from_chunks<'a, T: Real + FftNum>(
    chunks: impl Iterator<Item = &'a [Complex<T>]>,
    probe_freq_hz: T,
) -> SpectrumFeature<T> {
    let mut planner = FftPlanner::<T>::new();
    let fft = planner.plan_fft_forward(SPECTRUM_BINS);
    let mut accumulated = vec![T::zero(); SPECTRUM_BINS];
    let mut count = 0usize;
    let mut buf = vec![Complex::new(T::zero(), T::zero()); SPECTRUM_BINS];
    for chunk in chunks {
        buf.iter_mut().for_each(|b| *b = Complex::new(T::zero(), T::zero()));
        let take = chunk.len().min(SPECTRUM_BINS);
        buf[..take].copy_from_slice(&chunk[..take]);
        fft.process(&mut buf);
        for (acc, value) in accumulated.iter_mut().zip(&buf) {
            *acc += value.norm_sqr().sqrt();
        }
        count += 1;
    }
    if count > 0 {
        let scale = T::of(count as f64).recip();
        accumulated.iter_mut().for_each(|v| *v *= scale);
    }
    let max = accumulated
        .iter()
        .copied()
        .fold(T::zero(), |a, b| a.max(b));
    if max > T::zero() {
        accumulated.iter_mut().for_each(|v| *v /= max);
    }
    SpectrumFeature {
        bins: accumulated,
        probe_freq_hz,
        label: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_channel, ArrayGeometry, DevicePose, PathLossParams};
    use crate::frontend::{mix_and_filter, ProbeSignal, ReceiverConfig, SceneAtDetector};
    use crate::waveforms::PhaseWaveform;

    const LAMBDA: f64 = 3.9e-3;

    fn record_of(
        wave: PhaseWaveform<f64>,
        noise: f64,
        probe: ProbeSignal<f64>,
        seed: u64,
    ) -> IfRecord<f64> {
        let det = DevicePose::detector(0.0, 0.0);
        let array = ArrayGeometry::default_for_wavelength(LAMBDA);
        let p = PathLossParams {
            tx_power_w: 1.0,
            antenna_area_m2: 0.01,
            scattering: 0.5,
            wavelength_m: LAMBDA,
        };
        let (link, _) = apply_channel(
            &wave,
            &DevicePose::emitter(0.0, 5.0),
            &det,
            &array,
            &p,
            noise,
            seed,
        )
        .unwrap();
        let scene = SceneAtDetector::new(vec![link], array.elements, noise);
        let cfg = ReceiverConfig::default().with_frames(1).with_chirps(4);
        mix_and_filter(&scene, &probe, &cfg, seed).unwrap()
    }

    #[test]
    fn cw_line_concentrates_in_three_bins() {
        let rec = record_of(
            PhaseWaveform::cw(78.0e9, 0.0),
            0.0,
            ProbeSignal::single_tone(78.0013e9),
            1,
        );
        let feature = extract_spectrum(&rec).unwrap();
        let peak = feature.argmax();
        let total: f64 = feature.bins.iter().map(|b| b * b).sum();
        let n = feature.bins.len();
        let around: f64 = [n + peak - 1, peak, peak + 1]
            .iter()
            .map(|&i| feature.bins[i % n] * feature.bins[i % n])
            .sum();
        assert!(
            around / total >= 0.9,
            "line energy fraction {}",
            around / total
        );
        assert!((feature.bins[peak] - 1.0).abs() < 1e-12, "normalized max");
    }

    #[test]
    fn all_zero_record_stays_zero() {
        let scene = SceneAtDetector::<f64>::new(Vec::new(), 4, 0.0);
        let cfg = ReceiverConfig::default().with_frames(1).with_chirps(2);
        let rec = mix_and_filter(&scene, &ProbeSignal::single_tone(78e9), &cfg, 1).unwrap();
        let feature = extract_spectrum(&rec).unwrap();
        assert!(feature.bins.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn fmcw_spreads_energy_across_bins() {
        let rec = record_of(
            PhaseWaveform::fmcw_from_bandwidth(77e9, 4e9, 100e-6),
            0.0,
            ProbeSignal::single_tone(78.6e9),
            2,
        );
        let feature = extract_spectrum(&rec).unwrap();
        let total: f64 = feature.bins.iter().map(|b| b * b).sum();
        let biggest: f64 = feature
            .bins
            .iter()
            .map(|b| b * b)
            .fold(0.0, f64::max);
        assert!(
            biggest / total < 0.3,
            "single-bin energy fraction {}",
            biggest / total
        );
    }

    #[test]
    fn sweep_records_are_rejected() {
        let rec = record_of(
            PhaseWaveform::cw(78.0e9, 0.0),
            0.0,
            ProbeSignal::sweep(77e9, 39.9756e12),
            1,
        );
        assert!(matches!(
            extract_spectrum(&rec),
            Err(ClassifyError::SweepRecordRejected)
        ));
    }

    #[test]
    fn scale_invariance_under_amplitude_changes() {
        let weak = record_of(
            PhaseWaveform::cw(78.0e9, 0.0).with_amplitude(0.01),
            0.0,
            ProbeSignal::single_tone(78.001e9),
            1,
        );
        let strong = record_of(
            PhaseWaveform::cw(78.0e9, 0.0).with_amplitude(10.0),
            0.0,
            ProbeSignal::single_tone(78.001e9),
            1,
        );
        let fw = extract_spectrum(&weak).unwrap();
        let fs = extract_spectrum(&strong).unwrap();
        for (a, b) in fw.bins.iter().zip(&fs.bins) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn tone_offset_shifts_spectrum_circularly() {
        // Eq.-level shape preservation: demodulating with tones f and f+δ
        // shifts the spectrum by round(δ·1024/f_s) bins (circularly).
        let fs = 12e6;
        let delta = 1.5e6;
        let rec_a = record_of(
            PhaseWaveform::cw(78.0e9, 0.0),
            0.0,
            ProbeSignal::single_tone(78.002e9),
            1,
        );
        let rec_b = record_of(
            PhaseWaveform::cw(78.0e9, 0.0),
            0.0,
            ProbeSignal::single_tone(78.002e9 + delta),
            1,
        );
        let fa = extract_spectrum(&rec_a).unwrap();
        let fb = extract_spectrum(&rec_b).unwrap();
        let expected = (delta * 1024.0 / fs).round() as isize;
        let shift = fa.best_alignment_shift(&fb);
        assert!(
            (shift + expected).abs() <= 1,
            "alignment shift {shift}, expected {}",
            -expected
        );
    }
}
