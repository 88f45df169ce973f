//! Receive chain of the passive detector.
//!
//! The detector runs a COTS radar front end with transmission disabled: the
//! incoming RF is conjugate-mixed against a locally generated probe (a sweep
//! chirp or a single tone), low-pass filtered, and sampled by the ADC in
//! frames of chirps. Everything is simulated in the equivalent-IF domain —
//! emitters are phase models, so the mixer product and the quasi-static
//! filter gain can be evaluated directly at each kept ADC instant instead of
//! sampling at RF rates. IF energy appears only while the emitter's
//! instantaneous frequency stays within the cutoff of the probe's.

pub mod filter;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelLink, NoiseGenerator};
use crate::real::{cis, phase_cycles_frac, sweep_phase, Real};
use crate::waveforms::WaveformKind;
use filter::butterworth_amplitude;

/// Errors from receive-chain configuration or processing.
#[derive(Debug, Error, PartialEq)]
pub enum FrontendError {
    #[error("invalid receiver configuration: {0}")]
    InvalidConfig(String),
    #[error("record is empty")]
    EmptyRecord,
}

/// ADC, chirp and frame timing plus the anti-alias filter model.
///
/// Defaults follow the reference detector setup: 100 us sweeps with 10 us
/// idle, 12 Msps ADC keeping 1024 samples per chirp, 128 chirps per 33.3 ms
/// frame, and a 25-frame detection window (~0.8 s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverConfig<T> {
    pub adc_rate_hz: T,
    pub adc_samples_per_chirp: usize,
    pub sweep_time_s: T,
    pub chirp_idle_time_s: T,
    pub chirps_per_frame: usize,
    pub frame_period_s: T,
    pub frames_per_detection: usize,
    pub cutoff_hz: T,
    pub filter_order: usize,
    pub oversample_factor: usize,
}

impl<T: Real> Default for ReceiverConfig<T> {
    fn default() -> Self {
        Self {
            adc_rate_hz: T::of(12e6),
            adc_samples_per_chirp: 1024,
            sweep_time_s: T::of(100e-6),
            chirp_idle_time_s: T::of(10e-6),
            chirps_per_frame: 128,
            frame_period_s: T::of(33.3e-3),
            frames_per_detection: 25,
            cutoff_hz: T::of(6e6),
            filter_order: 4,
            oversample_factor: 8,
        }
    }
}

impl<T: Real> ReceiverConfig<T> {
    pub fn validate(&self) -> Result<(), FrontendError> {
        let mut problems = Vec::new();
        if !(self.adc_rate_hz > T::zero()) {
            problems.push("adc_rate_hz must be positive".to_string());
        }
        if self.adc_samples_per_chirp == 0 {
            problems.push("adc_samples_per_chirp must be at least 1".to_string());
        }
        if !(self.sweep_time_s > T::zero()) {
            problems.push("sweep_time_s must be positive".to_string());
        }
        if self.chirp_idle_time_s < T::zero() {
            problems.push("chirp_idle_time_s must be non-negative".to_string());
        }
        if self.cutoff_hz > self.adc_rate_hz * T::of(0.5) {
            problems.push(format!(
                "cutoff_hz ({}) must not exceed half the ADC rate ({}): the low-pass \
                 cutoff is bounded by half the sampling rate",
                self.cutoff_hz.as_f64(),
                self.adc_rate_hz.as_f64() * 0.5,
            ));
        }
        if T::of(self.adc_samples_per_chirp as f64) / self.adc_rate_hz > self.sweep_time_s {
            problems.push(
                "adc_samples_per_chirp / adc_rate_hz must fit within sweep_time_s".to_string(),
            );
        }
        if self.chirps_per_frame == 0 {
            problems.push("chirps_per_frame must be at least 1".to_string());
        }
        if self.frames_per_detection == 0 {
            problems.push("frames_per_detection must be at least 1".to_string());
        }
        let chirp_span =
            T::of(self.chirps_per_frame as f64) * (self.sweep_time_s + self.chirp_idle_time_s);
        if chirp_span > self.frame_period_s {
            problems.push(format!(
                "chirps_per_frame * (sweep + idle) = {} s exceeds frame_period_s = {} s",
                chirp_span.as_f64(),
                self.frame_period_s.as_f64()
            ));
        }
        if self.filter_order == 0 {
            problems.push("filter_order must be at least 1".to_string());
        }
        if self.oversample_factor == 0 {
            problems.push("oversample_factor must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(FrontendError::InvalidConfig(problems.join("; ")))
        }
    }

    /// Duration of one chirp cycle (sweep plus idle).
    pub fn chirp_cycle_s(&self) -> T {
        self.sweep_time_s + self.chirp_idle_time_s
    }

    /// Total kept samples per probe run (without the antenna axis).
    pub fn samples_per_detection(&self) -> usize {
        self.frames_per_detection * self.chirps_per_frame * self.adc_samples_per_chirp
    }

    /// Half-bandwidth of the pre-decimation evaluation grid; emitter
    /// contributions whose instantaneous offset exceeds this are zeroed.
    pub fn alias_guard_hz(&self) -> T {
        T::of(self.oversample_factor as f64) * self.adc_rate_hz * T::of(0.5)
    }

    pub fn with_frames(mut self, frames: usize) -> Self {
        self.frames_per_detection = frames;
        self
    }

    pub fn with_chirps(mut self, chirps: usize) -> Self {
        self.chirps_per_frame = chirps;
        self
    }
}

/// Locally generated probe the received RF is mixed against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeKind<T> {
    /// Chirp restarting at each chirp boundary: `f(t) = start + slope * t`.
    Sweep { start_hz: T, slope_hz_per_s: T },
    /// Constant-frequency tone (slope-zero probe on the same chirp timing).
    SingleTone { freq_hz: T },
}

/// Probe signal: kind plus amplitude of the local oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSignal<T> {
    #[serde(flatten)]
    pub kind: ProbeKind<T>,
    pub amplitude: T,
}

impl<T: Real> ProbeSignal<T> {
    pub fn sweep(start_hz: T, slope_hz_per_s: T) -> Self {
        Self {
            kind: ProbeKind::Sweep {
                start_hz,
                slope_hz_per_s,
            },
            amplitude: T::one(),
        }
    }

    pub fn single_tone(freq_hz: T) -> Self {
        Self {
            kind: ProbeKind::SingleTone { freq_hz },
            amplitude: T::one(),
        }
    }

    pub fn is_sweep(&self) -> bool {
        matches!(self.kind, ProbeKind::Sweep { .. })
    }

    /// Instantaneous probe frequency at chirp-local time `t`.
    pub fn frequency(&self, t: T) -> T {
        match self.kind {
            ProbeKind::Sweep {
                start_hz,
                slope_hz_per_s,
            } => start_hz + slope_hz_per_s * t,
            ProbeKind::SingleTone { freq_hz } => freq_hz,
        }
    }

    /// Probe phase (radians, mod 2π) at chirp-local time `t`.
    pub fn phase(&self, t: T) -> T {
        match self.kind {
            ProbeKind::Sweep {
                start_hz,
                slope_hz_per_s,
            } => sweep_phase(start_hz, slope_hz_per_s, t),
            ProbeKind::SingleTone { freq_hz } => {
                T::two_pi() * phase_cycles_frac(freq_hz, T::zero(), t)
            }
        }
    }

    /// Frequency band covered during one chirp's ADC window.
    pub fn band_during_window(&self, window_s: T) -> (T, T) {
        match self.kind {
            ProbeKind::Sweep {
                start_hz,
                slope_hz_per_s,
            } => (start_hz, start_hz + slope_hz_per_s * window_s),
            ProbeKind::SingleTone { freq_hz } => (freq_hz, freq_hz),
        }
    }

    /// Stable identifier used in reports.
    pub fn id(&self) -> String {
        match self.kind {
            ProbeKind::Sweep { start_hz, .. } => {
                format!("sweep@{:.6}GHz", start_hz.as_f64() / 1e9)
            }
            ProbeKind::SingleTone { freq_hz } => {
                format!("tone@{:.6}GHz", freq_hz.as_f64() / 1e9)
            }
        }
    }
}

/// Everything arriving at one detector position: propagated emitter links,
/// the antenna count, and the IF noise level.
#[derive(Debug, Clone)]
pub struct SceneAtDetector<T> {
    pub links: Vec<ChannelLink<T>>,
    pub antennas: usize,
    pub noise_power_w: T,
}

impl<T: Real> SceneAtDetector<T> {
    pub fn new(links: Vec<ChannelLink<T>>, antennas: usize, noise_power_w: T) -> Self {
        Self {
            links,
            antennas,
            noise_power_w,
        }
    }
}

/// Framed complex IF samples for every receive antenna, laid out
/// `[frame][chirp][sample][antenna]`, plus the configuration that made them.
#[derive(Debug, Clone, PartialEq)]
pub struct IfRecord<T> {
    pub samples: Vec<Complex<T>>,
    pub frames: usize,
    pub chirps_per_frame: usize,
    pub samples_per_chirp: usize,
    pub antennas: usize,
    pub config: ReceiverConfig<T>,
    pub probe: ProbeSignal<T>,
}

impl<T: Real> IfRecord<T> {
    /// Number of time samples (frames x chirps x samples).
    pub fn time_samples(&self) -> usize {
        self.frames * self.chirps_per_frame * self.samples_per_chirp
    }

    /// Antenna vector at a flat time index.
    #[inline]
    pub fn antenna_vector(&self, time_index: usize) -> &[Complex<T>] {
        let base = time_index * self.antennas;
        &self.samples[base..base + self.antennas]
    }

    /// Samples of one chirp on one antenna.
    pub fn chirp_antenna_samples(
        &self,
        frame: usize,
        chirp: usize,
        antenna: usize,
    ) -> Vec<Complex<T>> {
        let start = (frame * self.chirps_per_frame + chirp) * self.samples_per_chirp;
        (0..self.samples_per_chirp)
            .map(|n| self.samples[(start + n) * self.antennas + antenna])
            .collect()
    }

    pub fn is_all_zero(&self) -> bool {
        self.samples.iter().all(|s| s.norm_sqr() == T::zero())
    }
}

/// Power of the IF signal over the detection window: per time sample, the
/// squared magnitude averaged across antennas, flattened in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries<T> {
    pub values: Vec<T>,
    pub sample_period_s: T,
    pub samples_per_chirp: usize,
}

impl<T: Real> PowerSeries<T> {
    pub fn max(&self) -> T {
        self.values
            .iter()
            .copied()
            .fold(T::zero(), |a, b| a.max(b))
    }

    pub fn mean(&self) -> T {
        if self.values.is_empty() {
            return T::zero();
        }
        self.values.iter().copied().sum::<T>() / T::of(self.values.len() as f64)
    }

    /// Chirp-local time of a flat sample index.
    pub fn chirp_local_time(&self, index: usize) -> T {
        T::of((index % self.samples_per_chirp) as f64) * self.sample_period_s
    }

    /// Centered moving average over `window` samples (1 = identity).
    pub fn smoothed(&self, window: usize) -> PowerSeries<T> {
        if window <= 1 || self.values.is_empty() {
            return self.clone();
        }
        let half = window / 2;
        let n = self.values.len();
        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(T::zero());
        let mut acc = T::zero();
        for &v in &self.values {
            acc += v;
            prefix.push(acc);
        }
        let values = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(half);
                let hi = (i + window - half).min(n);
                (prefix[hi] - prefix[lo]) / T::of((hi - lo) as f64)
            })
            .collect();
        PowerSeries {
            values,
            sample_period_s: self.sample_period_s,
            samples_per_chirp: self.samples_per_chirp,
        }
    }

    /// Max power per chirp-local sample position across all chirps. Peaks
    /// that recur at a fixed position within the chirp (narrowband emitters
    /// against the restarting sweep) accumulate here even when individual
    /// chirps miss them.
    pub fn folded_max(&self) -> Vec<T> {
        let mut folded = vec![T::zero(); self.samples_per_chirp.min(self.values.len())];
        for (i, &v) in self.values.iter().enumerate() {
            let slot = i % self.samples_per_chirp;
            if v > folded[slot] {
                folded[slot] = v;
            }
        }
        folded
    }
}

/// Mixes every emitter link against the probe, applies the quasi-static
/// low-pass gain per contribution, adds IF noise, and keeps the configured
/// ADC samples.
///
/// Evaluation happens analytically at each kept sample instant, which is
/// identical to evaluating the conjugate product on the oversampled grid and
/// then decimating by selection: discarded grid points never influence kept
/// ones, and the anti-alias guard (`oversample_factor * f_s / 2`) zeroes any
/// contribution that the oversampled grid could not represent.
pub fn mix_and_filter<T: Real>(
    scene: &SceneAtDetector<T>,
    probe: &ProbeSignal<T>,
    cfg: &ReceiverConfig<T>,
    noise_seed: u64,
) -> Result<IfRecord<T>, FrontendError> {
    cfg.validate()?;
    let antennas = scene.antennas.max(1);
    let frames = cfg.frames_per_detection;
    let chirps = cfg.chirps_per_frame;
    let samples = cfg.adc_samples_per_chirp;
    let frame_len = chirps * samples * antennas;

    let noise = NoiseGenerator::new(scene.noise_power_w, noise_seed);
    let mut buffer = vec![Complex::new(T::zero(), T::zero()); frames * frame_len];

    buffer
        .par_chunks_mut(frame_len)
        .enumerate()
        .for_each(|(frame, chunk)| {
            render_frame(scene, probe, cfg, frame, chunk, &noise);
        });

    Ok(IfRecord {
        samples: buffer,
        frames,
        chirps_per_frame: chirps,
        samples_per_chirp: samples,
        antennas,
        config: cfg.clone(),
        probe: *probe,
    })
}

fn render_frame<T: Real>(
    scene: &SceneAtDetector<T>,
    probe: &ProbeSignal<T>,
    cfg: &ReceiverConfig<T>,
    frame: usize,
    chunk: &mut [Complex<T>],
    noise: &NoiseGenerator<T>,
) {
    let antennas = scene.antennas.max(1);
    let samples = cfg.adc_samples_per_chirp;
    let dt = cfg.adc_rate_hz.recip();
    let guard = cfg.alias_guard_hz();
    let frame_start = T::of(frame as f64) * cfg.frame_period_s;

    // Steering phasors are link constants.
    let steering: Vec<Vec<Complex<T>>> = scene
        .links
        .iter()
        .map(|link| link.antenna_phases.iter().map(|&p| cis(p)).collect())
        .collect();

    for chirp in 0..cfg.chirps_per_frame {
        let t0 = frame_start + T::of(chirp as f64) * cfg.chirp_cycle_s();
        let chirp_base = chirp * samples * antennas;
        for (link, phasors) in scene.links.iter().zip(&steering) {
            match &link.waveform.kind {
                WaveformKind::WigigOfdm { .. } => add_ofdm_contribution(
                    link,
                    phasors,
                    probe,
                    cfg,
                    t0,
                    dt,
                    guard,
                    &mut chunk[chirp_base..chirp_base + samples * antennas],
                ),
                _ => add_phase_model_contribution(
                    link,
                    phasors,
                    probe,
                    cfg,
                    t0,
                    dt,
                    guard,
                    &mut chunk[chirp_base..chirp_base + samples * antennas],
                ),
            }
        }
    }

    if !noise.is_silent() {
        let mut stream = noise.frame_stream(frame as u64);
        for sample in chunk.iter_mut() {
            *sample += stream.sample();
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn add_phase_model_contribution<T: Real>(
    link: &ChannelLink<T>,
    phasors: &[Complex<T>],
    probe: &ProbeSignal<T>,
    cfg: &ReceiverConfig<T>,
    t0: T,
    dt: T,
    guard: T,
    out: &mut [Complex<T>],
) {
    let antennas = phasors.len().max(1);
    for n in 0..cfg.adc_samples_per_chirp {
        let t_chirp = T::of(n as f64) * dt;
        let t_emit = t0 + t_chirp + link.time_offset_s - link.delay_s;
        let delta_f = link.waveform.instantaneous_frequency(t_emit) - probe.frequency(t_chirp);
        if delta_f.abs() > guard {
            continue;
        }
        let envelope = link.waveform.envelope(t_emit);
        if envelope == T::zero() {
            continue;
        }
        let gain = butterworth_amplitude(delta_f, cfg.cutoff_hz, cfg.filter_order)
            * link.gain
            * probe.amplitude
            * envelope;
        let phase = link.waveform.instantaneous_phase(t_emit) - probe.phase(t_chirp);
        let base = cis(phase) * gain;
        let write = &mut out[n * antennas..(n + 1) * antennas];
        for (slot, phasor) in write.iter_mut().zip(phasors) {
            *slot += base * phasor;
        }
    }
}

/// OFDM is a sum of constant-frequency subcarrier trajectories, so each
/// subcarrier gets the same quasi-static treatment as a CW line: gate it
/// against the alias guard, weigh it by the filter gain at its offset from
/// the probe, and advance its phase sample-wise with the per-symbol QPSK
/// constellation from the waveform seed.
#[allow(clippy::too_many_arguments)]
fn add_ofdm_contribution<T: Real>(
    link: &ChannelLink<T>,
    phasors: &[Complex<T>],
    probe: &ProbeSignal<T>,
    cfg: &ReceiverConfig<T>,
    t0: T,
    dt: T,
    guard: T,
    out: &mut [Complex<T>],
) {
    let (center, symbol_duration, active) = match &link.waveform.kind {
        WaveformKind::WigigOfdm {
            center_hz,
            symbol_duration_s,
            active_subcarriers,
            ..
        } => (*center_hz, *symbol_duration_s, *active_subcarriers),
        _ => unreachable!("caller dispatches on waveform kind"),
    };
    if active == 0 {
        return;
    }
    let antennas = phasors.len().max(1);
    let offsets = link
        .waveform
        .ofdm_subcarrier_offsets()
        .expect("kind checked above");

    // Pre-gate subcarriers against the band the probe visits this chirp.
    let window = T::of(cfg.adc_samples_per_chirp as f64) * dt;
    let (band_lo, band_hi) = probe.band_during_window(window);
    let candidates: Vec<(usize, T)> = offsets
        .iter()
        .enumerate()
        .filter_map(|(k, &off)| {
            let f = center + off;
            let dist = if f < band_lo {
                band_lo - f
            } else if f > band_hi {
                f - band_hi
            } else {
                T::zero()
            };
            (dist <= guard).then_some((k, f))
        })
        .collect();
    if candidates.is_empty() {
        return;
    }

    let scale = link.gain * probe.amplitude / T::of(active as f64).sqrt();
    for n in 0..cfg.adc_samples_per_chirp {
        let t_chirp = T::of(n as f64) * dt;
        let t_emit = t0 + t_chirp + link.time_offset_s - link.delay_s;
        let symbol_index = (t_emit / symbol_duration).floor().as_f64() as i64;
        let probe_freq = probe.frequency(t_chirp);
        let probe_phase = probe.phase(t_chirp);
        let mut acc = Complex::new(T::zero(), T::zero());
        for &(k, f) in &candidates {
            let delta_f = f - probe_freq;
            if delta_f.abs() > guard {
                continue;
            }
            let h = butterworth_amplitude(delta_f, cfg.cutoff_hz, cfg.filter_order);
            if h < T::of(1e-7) {
                continue;
            }
            let carrier = cis(
                T::two_pi() * phase_cycles_frac(f, T::zero(), t_emit) - probe_phase,
            );
            let symbol = link
                .waveform
                .ofdm_symbol(k, symbol_index)
                .expect("kind checked above");
            acc += symbol * carrier * h;
        }
        if acc.norm_sqr() == T::zero() {
            continue;
        }
        let base = acc * scale;
        let write = &mut out[n * antennas..(n + 1) * antennas];
        for (slot, phasor) in write.iter_mut().zip(phasors) {
            *slot += base * phasor;
        }
    }
}

/// Adds seeded complex white Gaussian noise of the given power to a record,
/// drawing the same per-frame substreams as [`mix_and_filter`] does.
pub fn add_noise<T: Real>(rec: &mut IfRecord<T>, noise_power_w: T, noise_seed: u64) {
    if noise_power_w <= T::zero() {
        return;
    }
    let noise = NoiseGenerator::new(noise_power_w, noise_seed);
    let frame_len = rec.chirps_per_frame * rec.samples_per_chirp * rec.antennas;
    for (frame, chunk) in rec.samples.chunks_mut(frame_len).enumerate() {
        let mut stream = noise.frame_stream(frame as u64);
        for sample in chunk.iter_mut() {
            *sample += stream.sample();
        }
    }
}

/// Power of the IF signal: `|sample|^2` averaged across antennas, flattened
/// in time order across all frames and chirps of the detection window.
pub fn if_power_series<T: Real>(rec: &IfRecord<T>) -> PowerSeries<T> {
    let antennas = T::of(rec.antennas as f64);
    let values = (0..rec.time_samples())
        .map(|i| {
            rec.antenna_vector(i)
                .iter()
                .map(|s| s.norm_sqr())
                .sum::<T>()
                / antennas
        })
        .collect();
    PowerSeries {
        values,
        sample_period_s: rec.config.adc_rate_hz.recip(),
        samples_per_chirp: rec.samples_per_chirp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{
        apply_channel, ArrayGeometry, DevicePose, PathLossParams,
    };
    use crate::waveforms::PhaseWaveform;

    const SLOPE: f64 = 39.9756e12;

    fn test_path_loss() -> PathLossParams<f64> {
        PathLossParams {
            tx_power_w: 1.0,
            antenna_area_m2: 0.01,
            scattering: 0.5,
            wavelength_m: 3.9e-3,
        }
    }

    fn scene_with(waves: &[(PhaseWaveform<f64>, DevicePose<f64>)], noise: f64) -> SceneAtDetector<f64> {
        let det = DevicePose::detector(0.0, 0.0);
        let array = ArrayGeometry::default_for_wavelength(3.9e-3);
        let links = waves
            .iter()
            .map(|(w, pose)| {
                apply_channel(w, pose, &det, &array, &test_path_loss(), noise, 1)
                    .unwrap()
                    .0
            })
            .collect();
        SceneAtDetector::new(links, array.elements, noise)
    }

    fn small_cfg() -> ReceiverConfig<f64> {
        ReceiverConfig::default().with_frames(1).with_chirps(2)
    }

    #[test]
    fn empty_scene_without_noise_is_all_zero() {
        let scene = SceneAtDetector::<f64>::new(Vec::new(), 4, 0.0);
        let probe = ProbeSignal::sweep(77e9, SLOPE);
        let rec = mix_and_filter(&scene, &probe, &small_cfg(), 3).unwrap();
        assert!(rec.is_all_zero());
        let power = if_power_series(&rec);
        assert!(power.values.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn cw_against_sweep_produces_peak_at_crossing_time() {
        let wave = PhaseWaveform::cw(77.5e9, 0.0);
        let scene = scene_with(&[(wave, DevicePose::emitter(0.0, 5.0))], 0.0);
        let probe = ProbeSignal::sweep(77e9, SLOPE);
        let cfg = small_cfg();
        let rec = mix_and_filter(&scene, &probe, &cfg, 3).unwrap();
        let power = if_power_series(&rec);

        // Expected crossing: (77.5 GHz - 77 GHz) / S ~ 12.51 us.
        let t_expected = 0.5e9 / SLOPE;
        let expected_idx = t_expected * cfg.adc_rate_hz;
        let (argmax, &peak) = power
            .values
            .iter()
            .enumerate()
            .take(cfg.adc_samples_per_chirp)
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert!(
            (argmax as f64 - expected_idx).abs() <= 2.0,
            "peak at sample {argmax}, expected {expected_idx}"
        );

        // Half-power width: f_cutoff / S on each side of the peak.
        let half_power = peak / 2.0;
        let cross = |from: usize, step: isize| -> f64 {
            let mut i = from as isize;
            loop {
                let next = i + step;
                let a = power.values[i as usize];
                let b = power.values[next as usize];
                if b < half_power {
                    // Linear interpolation between samples a (>= hp) and b.
                    let frac = (a - half_power) / (a - b);
                    return i as f64 + step as f64 * frac;
                }
                i = next;
            }
        };
        let right = cross(argmax, 1);
        let left = cross(argmax, -1);
        let measured_half_width = (right - left) / 2.0 / cfg.adc_rate_hz;
        let expected_half_width = cfg.cutoff_hz / SLOPE;
        assert!(
            (measured_half_width - expected_half_width).abs() / expected_half_width <= 0.25,
            "half-width {measured_half_width} vs expected {expected_half_width}"
        );

        // Away from the peak the response dives at least 40 dB.
        let off_peak = power
            .values
            .iter()
            .enumerate()
            .take(cfg.adc_samples_per_chirp)
            .filter(|(i, _)| (*i as f64 - expected_idx).abs() > 20.0)
            .map(|(_, &p)| p)
            .fold(0.0f64, f64::max);
        assert!(off_peak < peak * 1e-4, "off-peak leakage {off_peak} vs {peak}");
    }

    #[test]
    fn out_of_band_emitter_leaves_noise_floor() {
        let noise = 1e-10;
        let probe = ProbeSignal::sweep(77e9, SLOPE); // covers 77-81 GHz
        let cfg = small_cfg();
        let with_emitter = {
            let wave = PhaseWaveform::cw(82e9, 0.0);
            let scene = scene_with(&[(wave, DevicePose::emitter(0.0, 5.0))], noise);
            mix_and_filter(&scene, &probe, &cfg, 9).unwrap()
        };
        let noise_only = {
            let scene = SceneAtDetector::<f64>::new(Vec::new(), 4, noise);
            mix_and_filter(&scene, &probe, &cfg, 9).unwrap()
        };
        let p1 = if_power_series(&with_emitter).mean();
        let p0 = if_power_series(&noise_only).mean();
        let ratio_db = 10.0 * (p1 / p0).log10();
        assert!(ratio_db.abs() < 3.0, "residual power ratio {ratio_db} dB");
    }

    #[test]
    fn linearity_of_superposition_without_noise() {
        let cfg = small_cfg();
        let probe = ProbeSignal::sweep(77e9, SLOPE);
        let a = (PhaseWaveform::cw(78.0e9, 0.2), DevicePose::emitter(1.0, 4.0));
        let b = (
            PhaseWaveform::fmcw(77e9, SLOPE, 110e-6),
            DevicePose::emitter(-2.0, 6.0),
        );
        let rec_a = mix_and_filter(&scene_with(&[a.clone()], 0.0), &probe, &cfg, 1).unwrap();
        let rec_b = mix_and_filter(&scene_with(&[b.clone()], 0.0), &probe, &cfg, 1).unwrap();
        let rec_ab = mix_and_filter(&scene_with(&[a, b], 0.0), &probe, &cfg, 1).unwrap();
        for ((sa, sb), sab) in rec_a
            .samples
            .iter()
            .zip(&rec_b.samples)
            .zip(&rec_ab.samples)
        {
            assert_eq!(*sa + *sb, *sab);
        }
    }

    #[test]
    fn alias_guard_rejects_far_offsets_and_filter_rejects_mid_offsets() {
        // In-band reference emitter and one 10x beyond cutoff; widen the
        // guard so the filter (not the gate) does the rejection.
        let mut cfg = small_cfg();
        cfg.oversample_factor = 16; // guard 96 MHz
        let tone = ProbeSignal::single_tone(78e9);
        let in_band = scene_with(
            &[(PhaseWaveform::cw(78.0e9, 0.0), DevicePose::emitter(0.0, 5.0))],
            0.0,
        );
        let off_band = scene_with(
            &[(
                PhaseWaveform::cw(78.0e9 + 60e6, 0.0), // 10 x cutoff
                DevicePose::emitter(0.0, 5.0),
            )],
            0.0,
        );
        let p_in = if_power_series(&mix_and_filter(&in_band, &tone, &cfg, 1).unwrap()).mean();
        let p_off = if_power_series(&mix_and_filter(&off_band, &tone, &cfg, 1).unwrap()).mean();
        assert!(
            p_off / p_in < 1e-4,
            "mid-offset rejection only {} dB",
            10.0 * (p_off / p_in).log10()
        );

        // Far beyond the guard: exactly zero.
        let gated = scene_with(
            &[(PhaseWaveform::cw(79e9, 0.0), DevicePose::emitter(0.0, 5.0))],
            0.0,
        );
        let rec = mix_and_filter(&gated, &tone, &cfg, 1).unwrap();
        assert!(rec.is_all_zero());
    }

    #[test]
    fn measured_snr_matches_configuration() {
        // CW emitter mixed with a matched tone: filter gain 1, so the
        // configured signal/noise power ratio must reappear in the samples.
        let noise = 4e-9;
        let cfg = ReceiverConfig::default().with_frames(2).with_chirps(128);
        let tone = ProbeSignal::single_tone(78e9);
        let scene = scene_with(
            &[(PhaseWaveform::cw(78e9, 0.3), DevicePose::emitter(0.0, 5.0))],
            noise,
        );
        let expected_signal = scene.links[0].gain * scene.links[0].gain;
        let rec = mix_and_filter(&scene, &tone, &cfg, 77).unwrap();
        let total = if_power_series(&rec).mean();
        let measured_snr = (total - noise) / noise;
        let configured_snr = expected_signal / noise;
        let diff_db = 10.0 * (measured_snr / configured_snr).log10();
        assert!(
            diff_db.abs() < 0.5,
            "SNR mismatch {diff_db} dB over {} samples",
            rec.time_samples() * rec.antennas
        );
    }

    #[test]
    fn power_series_delta_and_noise_statistics() {
        let cfg = small_cfg();
        let mut rec = IfRecord {
            samples: vec![Complex::new(0.0, 0.0); 2 * 1024],
            frames: 1,
            chirps_per_frame: 2,
            samples_per_chirp: 1024,
            antennas: 1,
            config: cfg,
            probe: ProbeSignal::single_tone(78e9),
        };
        rec.samples[333] = Complex::new(1.0, 0.0);
        let p = if_power_series(&rec);
        assert_eq!(p.max(), 1.0);
        assert!((p.mean() - 1.0 / 2048.0).abs() < 1e-15);

        // White noise mean within 1% of configured power over >= 1e6 samples.
        let noise_power = 3e-7;
        let cfg = ReceiverConfig::default().with_frames(2).with_chirps(128);
        let scene = SceneAtDetector::<f64>::new(Vec::new(), 4, noise_power);
        let rec = mix_and_filter(&scene, &ProbeSignal::single_tone(78e9), &cfg, 5).unwrap();
        let mean = if_power_series(&rec).mean();
        assert!(
            (mean / noise_power - 1.0).abs() < 0.01,
            "noise mean {mean} vs configured {noise_power}"
        );
    }

    #[test]
    fn deterministic_per_seed_and_parallel_schedule() {
        let cfg = ReceiverConfig::default().with_frames(3).with_chirps(8);
        let probe = ProbeSignal::sweep(77e9, SLOPE);
        let scene = scene_with(
            &[(PhaseWaveform::cw(77.8e9, 0.0), DevicePose::emitter(2.0, 5.0))],
            1e-9,
        );
        let a = mix_and_filter(&scene, &probe, &cfg, 11).unwrap();
        let b = mix_and_filter(&scene, &probe, &cfg, 11).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = mix_and_filter(&scene, &probe, &cfg, 12).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn config_validation_catches_cutoff_and_timing() {
        let mut cfg = ReceiverConfig::<f64>::default();
        cfg.cutoff_hz = 7e6; // above fs/2 = 6 MHz
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, FrontendError::InvalidConfig(ref m) if m.contains("half the")));

        let mut cfg = ReceiverConfig::<f64>::default();
        cfg.adc_samples_per_chirp = 2048; // 170 us of sampling in a 100 us sweep
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn smoothing_preserves_flat_series_and_mean() {
        let p = PowerSeries::<f64> {
            values: vec![2.0; 64],
            sample_period_s: 1.0,
            samples_per_chirp: 64,
        };
        let s = p.smoothed(4);
        assert!(s.values.iter().all(|&v| (v - 2.0).abs() < 1e-12));
    }
}
