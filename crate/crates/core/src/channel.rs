//! Free-space propagation between emitters and the detector.
//!
//! Single line-of-sight path per emitter: a fourth-power path loss sets the
//! amplitude, the geometric delay shifts the waveform's time argument, and a
//! uniform linear array adds per-antenna steering phases. Noise is complex
//! circular Gaussian, injected later at the IF stage by the receive chain.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::{deg_to_rad, rad_to_deg, speed_of_light, Real};
use crate::waveforms::PhaseWaveform;
use num_complex::Complex;

/// Errors from channel construction or evaluation.
#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("power threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),
    #[error("angle of arrival must lie in (-90, 90) degrees, got {0}")]
    AoaOutOfRange(f64),
    #[error("emitter and detector share the same planar position")]
    CoincidentPositions,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Which side of the link a device sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceRole {
    Emitter,
    Detector,
}

/// Position of an emitter or detector. `z` defaults to 0 and only matters
/// for the height-difference analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevicePose<T> {
    pub x: T,
    pub y: T,
    pub z: T,
    pub role: DeviceRole,
}

impl<T: Real> DevicePose<T> {
    pub fn emitter(x: T, y: T) -> Self {
        Self {
            x,
            y,
            z: T::zero(),
            role: DeviceRole::Emitter,
        }
    }

    pub fn detector(x: T, y: T) -> Self {
        Self {
            x,
            y,
            z: T::zero(),
            role: DeviceRole::Detector,
        }
    }

    pub fn with_height(mut self, z: T) -> Self {
        self.z = z;
        self
    }

    /// 3D separation to another pose.
    pub fn distance_to(&self, other: &Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Planar (x, y) separation to another pose.
    pub fn planar_distance_to(&self, other: &Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Steering phase factor: one-way (2π d sinθ/λ) or the two-way 4π form.
/// Simulation and direction finding always share the same convention, so
/// angle estimates are self-consistent under either choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteeringConvention {
    OneWay,
    #[default]
    TwoWay,
}

impl SteeringConvention {
    /// The factor κ in κ·d·sin(θ)/λ.
    pub fn kappa<T: Real>(&self) -> T {
        match self {
            SteeringConvention::OneWay => T::two_pi(),
            SteeringConvention::TwoWay => T::two_pi() * T::of(2.0),
        }
    }
}

/// Uniform linear receive array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry<T> {
    pub elements: usize,
    pub spacing_m: T,
    pub steering: SteeringConvention,
}

impl<T: Real> ArrayGeometry<T> {
    /// Default array: four elements at quarter-wavelength spacing under the
    /// two-way convention (effective phase pitch of a half-wavelength array).
    pub fn default_for_wavelength(wavelength_m: T) -> Self {
        Self {
            elements: 4,
            spacing_m: wavelength_m * T::of(0.25),
            steering: SteeringConvention::TwoWay,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.elements < 2 {
            return Err(ChannelError::InvalidParameter(format!(
                "array needs at least 2 elements, got {}",
                self.elements
            )));
        }
        if !(self.spacing_m > T::zero()) {
            return Err(ChannelError::InvalidParameter(
                "element spacing must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Free-space propagation parameters for the fourth-power path loss model
/// `P_r = P_t A_e^2 σ / (4π λ^2 d^4)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossParams<T> {
    pub tx_power_w: T,
    pub antenna_area_m2: T,
    pub scattering: T,
    pub wavelength_m: T,
}

impl<T: Real> PathLossParams<T> {
    pub fn validate(&self) -> Result<(), ChannelError> {
        for (name, v) in [
            ("tx_power_w", self.tx_power_w),
            ("antenna_area_m2", self.antenna_area_m2),
            ("scattering", self.scattering),
            ("wavelength_m", self.wavelength_m),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(ChannelError::InvalidParameter(format!(
                    "{name} must be strictly positive"
                )));
            }
        }
        Ok(())
    }

    /// Received power at the given distance.
    pub fn received_power(&self, distance: T) -> Result<T, ChannelError> {
        if !(distance > T::zero()) {
            return Err(ChannelError::NonPositiveDistance(distance.as_f64()));
        }
        let num = self.tx_power_w * self.antenna_area_m2 * self.antenna_area_m2 * self.scattering;
        let den = T::two_pi() * T::of(2.0)
            * self.wavelength_m
            * self.wavelength_m
            * distance.powi(4);
        Ok(num / den)
    }

    /// Distance at which the received power falls to `threshold`:
    /// the fourth root of `P_t A_e^2 σ / (4π λ^2 P_r)`.
    pub fn max_range(&self, threshold: T) -> Result<T, ChannelError> {
        if !(threshold > T::zero()) {
            return Err(ChannelError::NonPositiveThreshold(threshold.as_f64()));
        }
        let num = self.tx_power_w * self.antenna_area_m2 * self.antenna_area_m2 * self.scattering;
        let den = T::two_pi() * T::of(2.0) * self.wavelength_m * self.wavelength_m * threshold;
        Ok((num / den).powf(T::of(0.25)))
    }

    /// Amplitude attenuation of the channel, `sqrt(P_r / P_t)`. Independent
    /// of the transmit power; an emitter whose waveform amplitude equals
    /// `sqrt(P_t)` is received at exactly `received_power`.
    pub fn amplitude_gain(&self, distance: T) -> Result<T, ChannelError> {
        Ok((self.received_power(distance)? / self.tx_power_w).sqrt())
    }
}

/// Per-element steering phases for a plane wave from `aoa_deg`: element `k`
/// carries `k · κ · d · sin(θ) / λ`, with element 0 as the reference.
pub fn array_phases<T: Real>(
    array: &ArrayGeometry<T>,
    aoa_deg: T,
    wavelength_m: T,
) -> Result<Vec<T>, ChannelError> {
    if !(aoa_deg > T::of(-90.0) && aoa_deg < T::of(90.0)) {
        return Err(ChannelError::AoaOutOfRange(aoa_deg.as_f64()));
    }
    let kappa: T = array.steering.kappa();
    let unit = kappa * array.spacing_m * deg_to_rad(aoa_deg).sin() / wavelength_m;
    Ok((0..array.elements)
        .map(|k| T::of(k as f64) * unit)
        .collect())
}

/// Ideal and height-distorted bearing of `emitter` as seen from `detector`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BearingPair<T> {
    /// `arctan((y_i - y_T) / (x_i - x_T))`, the same-height bearing.
    pub ideal_deg: T,
    /// Bearing with the horizontal leg inflated by the height difference.
    pub distorted_deg: T,
}

/// Bearing from the planar arctangent formula together with the value a 2D
/// system would actually measure when detector and emitter heights differ.
/// Both collapse to the same angle when `z` matches.
pub fn bearing_with_height<T: Real>(
    detector: &DevicePose<T>,
    emitter: &DevicePose<T>,
) -> Result<BearingPair<T>, ChannelError> {
    if !(detector.planar_distance_to(emitter) > T::zero()) {
        return Err(ChannelError::CoincidentPositions);
    }
    let dx = detector.x - emitter.x;
    let dy = detector.y - emitter.y;
    let dz = detector.z - emitter.z;
    let ideal = dy.atan2(dx);
    let distorted = dy.atan2((dx * dx + dz * dz).sqrt());
    Ok(BearingPair {
        ideal_deg: rad_to_deg(ideal),
        distorted_deg: rad_to_deg(distorted),
    })
}

/// Bearing of `target` from `anchor` measured from the +y axis, so that the
/// unit direction is `(sin θ, cos θ)`. This is the convention shared by the
/// steering model, direction finding, and triangulation.
pub fn bearing_deg<T: Real>(anchor: (T, T), target: (T, T)) -> T {
    rad_to_deg((target.0 - anchor.0).atan2(target.1 - anchor.1))
}

/// One emitter propagated to the detector: everything the receive chain
/// needs to evaluate the arriving signal symbolically.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelLink<T> {
    pub waveform: PhaseWaveform<T>,
    /// Amplitude at the detector: waveform amplitude times path gain.
    pub gain: T,
    /// Propagation delay, distance / c.
    pub delay_s: T,
    /// True bearing from detector to emitter (+y convention).
    pub bearing_deg: T,
    /// Per-antenna steering phases (radians).
    pub antenna_phases: Vec<T>,
    /// Emitter clock offset relative to detector time zero.
    pub time_offset_s: T,
}

/// Seeded complex white Gaussian noise source with per-frame substreams.
#[derive(Debug, Clone)]
pub struct NoiseGenerator<T> {
    seed: u64,
    /// Per-component standard deviation, sqrt(power / 2).
    component_sigma: T,
}

impl<T: Real> NoiseGenerator<T> {
    pub fn new(noise_power_w: T, seed: u64) -> Self {
        Self {
            seed,
            component_sigma: (noise_power_w * T::of(0.5)).sqrt(),
        }
    }

    pub fn is_silent(&self) -> bool {
        self.component_sigma == T::zero()
    }

    /// Independent stream for one frame; parallel frame generation yields
    /// the same samples as sequential generation.
    pub fn frame_stream(&self, frame: u64) -> NoiseStream<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(frame.wrapping_add(1));
        NoiseStream {
            rng,
            component_sigma: self.component_sigma,
        }
    }
}

/// Sample stream of one frame's noise.
#[derive(Debug, Clone)]
pub struct NoiseStream<T> {
    rng: ChaCha8Rng,
    component_sigma: T,
}

impl<T: Real> NoiseStream<T> {
    #[inline]
    pub fn sample(&mut self) -> Complex<T> {
        let re = T::standard_normal(&mut self.rng) * self.component_sigma;
        let im = T::standard_normal(&mut self.rng) * self.component_sigma;
        Complex::new(re, im)
    }
}

/// Propagates one emitter to the detector.
///
/// The returned link carries the amplitude gain `waveform.amplitude ×
/// sqrt(P_r/P_t)`, the geometric delay, and the steering phases for the true
/// bearing; the noise generator is seeded for the detector's IF stage.
#[allow(clippy::too_many_arguments)]
pub fn apply_channel<T: Real>(
    waveform: &PhaseWaveform<T>,
    emitter: &DevicePose<T>,
    detector: &DevicePose<T>,
    array: &ArrayGeometry<T>,
    path_loss: &PathLossParams<T>,
    noise_power_w: T,
    seed: u64,
) -> Result<(ChannelLink<T>, NoiseGenerator<T>), ChannelError> {
    if noise_power_w < T::zero() {
        return Err(ChannelError::InvalidParameter(
            "noise power must be non-negative".into(),
        ));
    }
    array.validate()?;
    path_loss.validate()?;
    let distance = emitter.distance_to(detector);
    if !(distance > T::zero()) {
        return Err(ChannelError::CoincidentPositions);
    }
    let bearing = bearing_deg((detector.x, detector.y), (emitter.x, emitter.y));
    let phases = array_phases(array, bearing, path_loss.wavelength_m)?;
    let link = ChannelLink {
        waveform: waveform.clone(),
        gain: waveform.amplitude * path_loss.amplitude_gain(distance)?,
        delay_s: distance / speed_of_light::<T>(),
        bearing_deg: bearing,
        antenna_phases: phases,
        time_offset_s: T::zero(),
    };
    Ok((link, NoiseGenerator::new(noise_power_w, seed)))
}
