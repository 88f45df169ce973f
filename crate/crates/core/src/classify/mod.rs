//! Waveform classification: spectrum features, the binary classifier, and
//! synthetic dataset generation.

pub mod cnn;
pub mod dataset;
pub mod spectrum;

use thiserror::Error;

pub use cnn::{
    evaluate, loss_and_gradients, train_model, Classification, ClassifierModel, TrainConfig,
    TrainingCurve, TrainingMetadata,
};
pub use dataset::{generate_dataset, DatasetConfig, LabeledDataset, WaveformClass};
pub use spectrum::{
    extract_spectrum, spectrum_from_stream, SignalLabel, SpectrumFeature, SPECTRUM_BINS,
};

/// Errors from feature extraction, training or inference.
#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("sweep-demodulated records cannot be used as features; re-probe with a tone")]
    SweepRecordRejected,
    #[error("classifier has not been trained")]
    UntrainedModel,
    #[error("feature must have {SPECTRUM_BINS} bins, got {got}")]
    BadFeatureLength { got: usize },
    #[error("dataset must contain both labels")]
    SingleClassDataset,
    #[error("invalid training setup: {0}")]
    InvalidTraining(String),
    #[error("dataset generation failed: {0}")]
    Generation(String),
}
