//! Passive detection, classification, and localization of mmWave emitters
//! with a receive-only COTS radar front end.
//!
//! The library simulates emitters as analytic phase/frequency models,
//! propagates them over a free-space channel to a small receive array,
//! and runs the full counter-surveillance pipeline on the resulting IF
//! records: frequency-component detection with sweep and stepped-tone
//! probes, spectrum classification of radar versus communication
//! waveforms, subspace direction finding, and bearing-only triangulation
//! across anchor positions.
//!
//! All numeric kernels are generic over the scalar type via [`Real`]
//! (`f32` or `f64`); the pipeline and the concrete aliases below run at
//! [`Scalar`] = `f64`.

pub mod channel;
pub mod classify;
pub mod detection;
pub mod frontend;
pub mod io;
pub mod localize;
pub mod montecarlo;
pub mod pipeline;
pub mod real;
pub mod report;
pub mod scenario;
pub mod waveforms;

pub use real::{Real, SPEED_OF_LIGHT};

/// Working scalar precision of the simulation pipeline.
pub type Scalar = f64;

/// Transmit waveform at pipeline precision.
pub type PhaseWaveform64 = waveforms::PhaseWaveform<f64>;
/// Single-precision transmit waveform.
pub type PhaseWaveform32 = waveforms::PhaseWaveform<f32>;
/// Framed IF capture at pipeline precision.
pub type IfRecord64 = frontend::IfRecord<f64>;
/// Single-precision IF capture.
pub type IfRecord32 = frontend::IfRecord<f32>;
/// Detection outcome at pipeline precision.
pub type DetectionReport64 = detection::DetectionReport<f64>;
/// Anchor observation at pipeline precision.
pub type AnchorObservation64 = localize::AnchorObservation<f64>;
/// Localization outcome at pipeline precision.
pub type LocalizationResult64 = localize::LocalizationResult<f64>;
/// Spectrum feature at pipeline precision.
pub type SpectrumFeature64 = classify::SpectrumFeature<f64>;
/// Classifier at pipeline precision.
pub type ClassifierModel64 = classify::ClassifierModel<f64>;
