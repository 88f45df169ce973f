//! Analytic transmit-waveform models.
//!
//! Emitters are represented by instantaneous phase/frequency functions
//! instead of RF-rate sample streams, so the receive chain can mix against
//! them symbolically and only ever discretize the intermediate frequency.
//! Supported sources: continuous wave, frequency-shift keying, linear FMCW
//! chirps, duty-cycled pulse carriers, and an OFDM interferer modeled after
//! 60 GHz wireless links.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::{cis, phase_cycles_frac, wrap_time, Real};

/// Errors from waveform construction or evaluation.
#[derive(Debug, Error, PartialEq)]
pub enum WaveformError {
    #[error("operation requires an OFDM waveform, got {0}")]
    NotOfdm(&'static str),
    #[error("invalid waveform parameter: {0}")]
    InvalidParameter(String),
}

/// Carrier parameters per waveform kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WaveformKind<T> {
    /// Constant-frequency carrier.
    Cw { carrier_hz: T, phase_rad: T },
    /// Two-tone keying: first half-period on `freq_a_hz`, second on `freq_b_hz`.
    Fsk {
        freq_a_hz: T,
        freq_b_hz: T,
        phase_a_rad: T,
        phase_b_rad: T,
        period_s: T,
    },
    /// Linear sweep from `start_hz`, repeating every `sweep_period_s`.
    /// Occupied bandwidth is `slope_hz_per_s * sweep_period_s` by construction.
    Fmcw {
        start_hz: T,
        slope_hz_per_s: T,
        sweep_period_s: T,
    },
    /// Carrier gated by a rectangular envelope of `width_s` at `prf_hz`.
    Pulse {
        carrier_hz: T,
        phase_rad: T,
        width_s: T,
        prf_hz: T,
    },
    /// OFDM interferer: QPSK symbols on uniformly spaced subcarriers around
    /// `center_hz`, re-drawn every `symbol_duration_s` from the seed.
    WigigOfdm {
        center_hz: T,
        subcarrier_spacing_hz: T,
        active_subcarriers: usize,
        symbol_duration_s: T,
        constellation_seed: u64,
    },
}

/// A transmit signal: carrier model plus linear amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseWaveform<T> {
    #[serde(flatten)]
    pub kind: WaveformKind<T>,
    pub amplitude: T,
}

/// Default pulse parameters when a scenario gives none.
pub const DEFAULT_PULSE_WIDTH_S: f64 = 1e-6;
/// Default pulse repetition frequency.
pub const DEFAULT_PULSE_PRF_HZ: f64 = 10e3;
/// Default OFDM active subcarrier count.
pub const DEFAULT_OFDM_SUBCARRIERS: usize = 64;
/// Default OFDM subcarrier spacing.
pub const DEFAULT_OFDM_SPACING_HZ: f64 = 5e6;
/// Default OFDM symbol duration as a multiple of 1/spacing; the excess over
/// 1.0 is the cyclic-prefix fraction of 60 GHz OFDM links.
pub const DEFAULT_OFDM_SYMBOL_FACTOR: f64 = 1.25;

impl<T: Real> PhaseWaveform<T> {
    pub fn cw(carrier_hz: T, phase_rad: T) -> Self {
        Self {
            kind: WaveformKind::Cw {
                carrier_hz,
                phase_rad,
            },
            amplitude: T::one(),
        }
    }

    pub fn fsk(freq_a_hz: T, freq_b_hz: T, period_s: T) -> Self {
        Self {
            kind: WaveformKind::Fsk {
                freq_a_hz,
                freq_b_hz,
                phase_a_rad: T::zero(),
                phase_b_rad: T::zero(),
                period_s,
            },
            amplitude: T::one(),
        }
    }

    pub fn fmcw(start_hz: T, slope_hz_per_s: T, sweep_period_s: T) -> Self {
        Self {
            kind: WaveformKind::Fmcw {
                start_hz,
                slope_hz_per_s,
                sweep_period_s,
            },
            amplitude: T::one(),
        }
    }

    /// FMCW from occupied bandwidth; the slope follows from the sweep period.
    pub fn fmcw_from_bandwidth(start_hz: T, bandwidth_hz: T, sweep_period_s: T) -> Self {
        Self::fmcw(start_hz, bandwidth_hz / sweep_period_s, sweep_period_s)
    }

    pub fn pulse(carrier_hz: T, width_s: T, prf_hz: T) -> Self {
        Self {
            kind: WaveformKind::Pulse {
                carrier_hz,
                phase_rad: T::zero(),
                width_s,
                prf_hz,
            },
            amplitude: T::one(),
        }
    }

    pub fn wigig_ofdm(center_hz: T, constellation_seed: u64) -> Self {
        Self {
            kind: WaveformKind::WigigOfdm {
                center_hz,
                subcarrier_spacing_hz: T::of(DEFAULT_OFDM_SPACING_HZ),
                active_subcarriers: DEFAULT_OFDM_SUBCARRIERS,
                symbol_duration_s: T::of(DEFAULT_OFDM_SYMBOL_FACTOR / DEFAULT_OFDM_SPACING_HZ),
                constellation_seed,
            },
            amplitude: T::one(),
        }
    }

    pub fn with_amplitude(mut self, amplitude: T) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// Checks structural invariants (positive periods, duty cycle in (0, 1], ...).
    pub fn validate(&self) -> Result<(), WaveformError> {
        let bad = |msg: String| Err(WaveformError::InvalidParameter(msg));
        if !(self.amplitude >= T::zero()) || !self.amplitude.is_finite() {
            return bad(format!("amplitude must be finite and >= 0"));
        }
        match &self.kind {
            WaveformKind::Cw { carrier_hz, .. } => {
                if *carrier_hz <= T::zero() {
                    return bad("CW carrier must be positive".into());
                }
            }
            WaveformKind::Fsk {
                freq_a_hz,
                freq_b_hz,
                period_s,
                ..
            } => {
                if *freq_a_hz <= T::zero() || *freq_b_hz <= T::zero() {
                    return bad("FSK carriers must be positive".into());
                }
                if *period_s <= T::zero() {
                    return bad("FSK period must be positive".into());
                }
            }
            WaveformKind::Fmcw {
                start_hz,
                slope_hz_per_s,
                sweep_period_s,
            } => {
                if *start_hz <= T::zero() {
                    return bad("FMCW start frequency must be positive".into());
                }
                if *slope_hz_per_s <= T::zero() {
                    return bad("FMCW slope must be positive".into());
                }
                if *sweep_period_s <= T::zero() {
                    return bad("FMCW sweep period must be positive".into());
                }
            }
            WaveformKind::Pulse {
                carrier_hz,
                width_s,
                prf_hz,
                ..
            } => {
                if *carrier_hz <= T::zero() {
                    return bad("pulse carrier must be positive".into());
                }
                let duty = *width_s * *prf_hz;
                if !(duty > T::zero() && duty <= T::one()) {
                    return bad(format!(
                        "pulse duty cycle must be in (0, 1], got {}",
                        duty.as_f64()
                    ));
                }
            }
            WaveformKind::WigigOfdm {
                center_hz,
                subcarrier_spacing_hz,
                symbol_duration_s,
                ..
            } => {
                if *center_hz <= T::zero() {
                    return bad("OFDM center frequency must be positive".into());
                }
                if *subcarrier_spacing_hz <= T::zero() {
                    return bad("OFDM subcarrier spacing must be positive".into());
                }
                if *symbol_duration_s <= T::zero() {
                    return bad("OFDM symbol duration must be positive".into());
                }
            }
        }
        Ok(())
    }

    /// Instantaneous phase in radians, reduced modulo 2π.
    ///
    /// The reduction carries no physical cost (only phase differences enter
    /// the mixer) and keeps the value accurate at mmWave carrier-time
    /// products; consumers comparing phases should do so on the circle.
    /// Continuous within each waveform segment; its circular derivative over
    /// 2π equals [`Self::instantaneous_frequency`].
    pub fn instantaneous_phase(&self, t: T) -> T {
        let two_pi = T::two_pi();
        match &self.kind {
            WaveformKind::Cw {
                carrier_hz,
                phase_rad,
            } => {
                let frac = phase_cycles_frac(*carrier_hz, T::zero(), t);
                wrap_time(two_pi * frac + *phase_rad, two_pi)
            }
            WaveformKind::Fsk {
                freq_a_hz,
                freq_b_hz,
                phase_a_rad,
                phase_b_rad,
                period_s,
            } => {
                let local = wrap_time(t, *period_s);
                let (freq, phase0) = if local < *period_s * T::of(0.5) {
                    (*freq_a_hz, *phase_a_rad)
                } else {
                    (*freq_b_hz, *phase_b_rad)
                };
                let frac = phase_cycles_frac(freq, T::zero(), t);
                wrap_time(two_pi * frac + phase0, two_pi)
            }
            WaveformKind::Fmcw {
                start_hz,
                slope_hz_per_s,
                sweep_period_s,
            } => {
                let local = wrap_time(t, *sweep_period_s);
                two_pi * phase_cycles_frac(*start_hz, *slope_hz_per_s, local)
            }
            WaveformKind::Pulse {
                carrier_hz,
                phase_rad,
                ..
            } => {
                let frac = phase_cycles_frac(*carrier_hz, T::zero(), t);
                wrap_time(two_pi * frac + *phase_rad, two_pi)
            }
            WaveformKind::WigigOfdm { center_hz, .. } => {
                // Band-center reference phase; per-subcarrier structure is
                // produced by `ofdm_baseband`.
                two_pi * phase_cycles_frac(*center_hz, T::zero(), t)
            }
        }
    }

    /// Instantaneous frequency in Hz. For OFDM this is the band center,
    /// used only for coarse gating in the receive chain.
    pub fn instantaneous_frequency(&self, t: T) -> T {
        match &self.kind {
            WaveformKind::Cw { carrier_hz, .. } => *carrier_hz,
            WaveformKind::Fsk {
                freq_a_hz,
                freq_b_hz,
                period_s,
                ..
            } => {
                let local = wrap_time(t, *period_s);
                if local < *period_s * T::of(0.5) {
                    *freq_a_hz
                } else {
                    *freq_b_hz
                }
            }
            WaveformKind::Fmcw {
                start_hz,
                slope_hz_per_s,
                sweep_period_s,
            } => {
                let local = wrap_time(t, *sweep_period_s);
                *start_hz + *slope_hz_per_s * local
            }
            WaveformKind::Pulse { carrier_hz, .. } => *carrier_hz,
            WaveformKind::WigigOfdm { center_hz, .. } => *center_hz,
        }
    }

    /// Transmit envelope at time `t`: 0 inside a pulse radar's silent period,
    /// 1 otherwise.
    pub fn envelope(&self, t: T) -> T {
        match &self.kind {
            WaveformKind::Pulse { width_s, prf_hz, .. } => {
                let local = wrap_time(t, prf_hz.recip());
                if local < *width_s {
                    T::one()
                } else {
                    T::zero()
                }
            }
            _ => T::one(),
        }
    }

    /// Occupied bandwidth in Hz (0 for pure carriers).
    pub fn occupied_bandwidth(&self) -> T {
        match &self.kind {
            WaveformKind::Cw { .. } => T::zero(),
            WaveformKind::Fsk {
                freq_a_hz,
                freq_b_hz,
                ..
            } => ComplexField::abs(*freq_a_hz - *freq_b_hz),
            WaveformKind::Fmcw {
                slope_hz_per_s,
                sweep_period_s,
                ..
            } => *slope_hz_per_s * *sweep_period_s,
            WaveformKind::Pulse { .. } => T::zero(),
            WaveformKind::WigigOfdm {
                subcarrier_spacing_hz,
                active_subcarriers,
                ..
            } => *subcarrier_spacing_hz * T::of(*active_subcarriers as f64),
        }
    }

    /// Lowest and highest instantaneous (line) frequency of the waveform.
    pub fn frequency_span(&self) -> (T, T) {
        match &self.kind {
            WaveformKind::Cw { carrier_hz, .. } => (*carrier_hz, *carrier_hz),
            WaveformKind::Fsk {
                freq_a_hz,
                freq_b_hz,
                ..
            } => (freq_a_hz.min(*freq_b_hz), freq_a_hz.max(*freq_b_hz)),
            WaveformKind::Fmcw { start_hz, .. } => {
                (*start_hz, *start_hz + self.occupied_bandwidth())
            }
            WaveformKind::Pulse { carrier_hz, .. } => (*carrier_hz, *carrier_hz),
            WaveformKind::WigigOfdm { center_hz, .. } => {
                let half = self.occupied_bandwidth() * T::of(0.5);
                (*center_hz - half, *center_hz + half)
            }
        }
    }

    /// Fraction of the received power that fits inside a low-pass passband
    /// of the given cutoff when the waveform is demodulated by a tone at its
    /// strongest frequency component. Line-like waveforms concentrate fully;
    /// an OFDM signal only contributes the subcarriers within the passband.
    pub fn in_band_power_fraction(&self, cutoff_hz: T) -> T {
        match &self.kind {
            WaveformKind::WigigOfdm {
                subcarrier_spacing_hz,
                active_subcarriers,
                ..
            } => {
                if *active_subcarriers == 0 {
                    return T::zero();
                }
                let within = (T::of(2.0) * cutoff_hz / *subcarrier_spacing_hz)
                    .floor()
                    .max(T::one());
                (within / T::of(*active_subcarriers as f64)).min(T::one())
            }
            _ => T::one(),
        }
    }

    /// Fraction of time the waveform's instantaneous frequency stays within
    /// the passband of its best-matched probe tone: the burst duty of the
    /// IF signal. Together with [`Self::in_band_power_fraction`] this turns
    /// a received power into the time-averaged in-band IF power.
    pub fn in_band_time_fraction(&self, cutoff_hz: T) -> T {
        match &self.kind {
            WaveformKind::Cw { .. } => T::one(),
            WaveformKind::Fsk {
                freq_a_hz,
                freq_b_hz,
                ..
            } => {
                if (*freq_a_hz - *freq_b_hz).abs() <= cutoff_hz {
                    T::one()
                } else {
                    T::of(0.5)
                }
            }
            WaveformKind::Fmcw { .. } => {
                let bw = self.occupied_bandwidth();
                (T::of(2.0) * cutoff_hz / bw).min(T::one())
            }
            WaveformKind::Pulse { width_s, prf_hz, .. } => *width_s * *prf_hz,
            WaveformKind::WigigOfdm { .. } => T::one(),
        }
    }

    /// Subcarrier frequency offsets (Hz, relative to the band center) of an
    /// OFDM waveform, symmetric around zero.
    pub fn ofdm_subcarrier_offsets(&self) -> Result<Vec<T>, WaveformError> {
        match &self.kind {
            WaveformKind::WigigOfdm {
                subcarrier_spacing_hz,
                active_subcarriers,
                ..
            } => {
                let n = *active_subcarriers;
                let mid = T::of((n as f64 - 1.0) / 2.0);
                Ok((0..n)
                    .map(|k| (T::of(k as f64) - mid) * *subcarrier_spacing_hz)
                    .collect())
            }
            _ => Err(WaveformError::NotOfdm(self.kind_name())),
        }
    }

    /// QPSK symbol for `(subcarrier, symbol_index)` under the waveform seed.
    /// Random-access and deterministic, so chirps can be generated out of
    /// order or in parallel without drawing a shared stream.
    pub fn ofdm_symbol(&self, subcarrier: usize, symbol_index: i64) -> Result<Complex<T>, WaveformError> {
        match &self.kind {
            WaveformKind::WigigOfdm {
                constellation_seed, ..
            } => Ok(qpsk_symbol(
                *constellation_seed,
                subcarrier as u64,
                symbol_index,
            )),
            _ => Err(WaveformError::NotOfdm(self.kind_name())),
        }
    }

    /// Complex baseband of an OFDM waveform on the given time grid: the sum
    /// of QPSK-modulated subcarrier exponentials, scaled so the mean power
    /// equals `amplitude^2`.
    pub fn ofdm_baseband(&self, times: &[T]) -> Result<Vec<Complex<T>>, WaveformError> {
        let (spacing, n, symbol_duration, seed) = match &self.kind {
            WaveformKind::WigigOfdm {
                subcarrier_spacing_hz,
                active_subcarriers,
                symbol_duration_s,
                constellation_seed,
                ..
            } => (
                *subcarrier_spacing_hz,
                *active_subcarriers,
                *symbol_duration_s,
                *constellation_seed,
            ),
            _ => return Err(WaveformError::NotOfdm(self.kind_name())),
        };

        let mut out = vec![Complex::new(T::zero(), T::zero()); times.len()];
        if n == 0 {
            return Ok(out);
        }
        let scale = self.amplitude / T::of(n as f64).sqrt();
        let offsets = self.ofdm_subcarrier_offsets()?;
        for (sample, &t) in out.iter_mut().zip(times) {
            let symbol_index = (t / symbol_duration).floor().as_f64() as i64;
            let mut acc = Complex::new(T::zero(), T::zero());
            for (k, &offset) in offsets.iter().enumerate() {
                let carrier = cis(T::two_pi() * phase_cycles_frac(offset, T::zero(), t));
                acc += qpsk_symbol::<T>(seed, k as u64, symbol_index) * carrier;
            }
            *sample = acc * scale;
        }
        let _ = spacing;
        Ok(out)
    }

    fn kind_name(&self) -> &'static str {
        match &self.kind {
            WaveformKind::Cw { .. } => "cw",
            WaveformKind::Fsk { .. } => "fsk",
            WaveformKind::Fmcw { .. } => "fmcw",
            WaveformKind::Pulse { .. } => "pulse",
            WaveformKind::WigigOfdm { .. } => "wigig_ofdm",
        }
    }
}

use nalgebra::ComplexField;

/// Deterministic unit-modulus QPSK point for a (seed, subcarrier, symbol) triple.
pub(crate) fn qpsk_symbol<T: Real>(seed: u64, subcarrier: u64, symbol_index: i64) -> Complex<T> {
    let mut h = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(subcarrier.wrapping_mul(0xbf58_476d_1ce4_e5b9))
        .wrapping_add((symbol_index as u64).wrapping_mul(0x94d0_49bb_1331_11eb));
    // splitmix64 finalizer
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 31;
    let s = T::of(std::f64::consts::FRAC_1_SQRT_2);
    let re = if h & 1 == 0 { s } else { -s };
    let im = if h & 2 == 0 { s } else { -s };
    Complex::new(re, im)
}
