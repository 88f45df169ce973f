//! Seeded Monte-Carlo campaigns over a scenario, with optional one-axis
//! parameter sweeps and aggregate detection/localization metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::bearing_deg;
use crate::classify::ClassifierModel;
use crate::detection::DetectionReport;
use crate::pipeline::{run_pipeline, trial_seed, PipelineError, TrialOutcome};
use crate::scenario::{ScenarioConfig, SweepAxis};
use crate::Scalar;

/// Schema identifier of emitted reports.
pub const REPORT_SCHEMA: &str = "radar2-report/1";

/// Confusion counts of the spy-radar verdict against scenario ground truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positive: usize,
    pub true_negative: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_positive + self.true_negative + self.false_positive + self.false_negative
    }

    /// `TP / (TP + FN)`; 1 when the scenario has no positive trials.
    pub fn detection_rate(&self) -> f64 {
        let denom = self.true_positive + self.false_negative;
        if denom == 0 {
            1.0
        } else {
            self.true_positive as f64 / denom as f64
        }
    }

    /// `FP / (TN + FP)`; 0 when the scenario has no negative trials.
    pub fn false_alarm_rate(&self) -> f64 {
        let denom = self.true_negative + self.false_positive;
        if denom == 0 {
            0.0
        } else {
            self.false_positive as f64 / denom as f64
        }
    }
}

/// Percentile summary of an error population.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub count: usize,
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub max: f64,
    pub mean: f64,
}

impl Percentiles {
    pub fn from_samples(mut samples: Vec<f64>) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
        let pick = |q: f64| -> f64 {
            let idx = ((samples.len() - 1) as f64 * q).round() as usize;
            samples[idx]
        };
        Self {
            count: samples.len(),
            p50: pick(0.50),
            p90: pick(0.90),
            p95: pick(0.95),
            max: *samples.last().expect("non-empty"),
            mean: samples.iter().sum::<f64>() / samples.len() as f64,
        }
    }
}

/// Aggregate metrics over a batch of trials.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub confusion: ConfusionCounts,
    pub detection_rate: f64,
    pub false_alarm_rate: f64,
    pub angle_error_deg: Percentiles,
    pub localization_error_m: Percentiles,
    /// Trials that ended in a pipeline error.
    pub failures: usize,
}

/// Estimated position kept in the per-trial record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionSummary {
    pub x: Scalar,
    pub y: Scalar,
    pub residual: Scalar,
}

/// Compact record of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub detection: Option<DetectionReport<Scalar>>,
    pub positions: Option<Vec<PositionSummary>>,
    pub angle_errors_deg: Vec<f64>,
    pub localization_errors_m: Vec<f64>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

/// One row of a parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: Scalar,
    pub aggregate: AggregateMetrics,
}

/// Full campaign report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub seed: u64,
    pub trials: usize,
    pub config: ScenarioConfig,
    pub aggregate: AggregateMetrics,
    pub trial_records: Vec<TrialRecord>,
    pub sweep_rows: Vec<SweepRow>,
}

/// Runs the campaign: `trials` seeded trials of the scenario (in parallel,
/// with order-independent aggregation), plus one aggregate row per sweep
/// value when a sweep axis is declared.
pub fn monte_carlo(
    cfg: &ScenarioConfig,
    classifier: Option<&ClassifierModel<Scalar>>,
) -> Result<RunReport, PipelineError> {
    let (aggregate, trial_records) = run_batch(cfg, classifier)?;

    let mut sweep_rows = Vec::new();
    if let Some(sweep) = &cfg.sweep {
        for &value in &sweep.values {
            let modified = apply_axis(cfg, sweep.axis, value)
                .map_err(PipelineError::Config)?;
            let (row_aggregate, _) = run_batch(&modified, classifier)?;
            sweep_rows.push(SweepRow {
                axis: sweep.axis,
                value,
                aggregate: row_aggregate,
            });
        }
    }

    Ok(RunReport {
        schema: REPORT_SCHEMA.to_string(),
        seed: cfg.seed,
        trials: cfg.trials,
        config: cfg.clone(),
        aggregate,
        trial_records,
        sweep_rows,
    })
}

fn run_batch(
    cfg: &ScenarioConfig,
    classifier: Option<&ClassifierModel<Scalar>>,
) -> Result<(AggregateMetrics, Vec<TrialRecord>), PipelineError> {
    let outcomes: Vec<(usize, u64, Result<TrialOutcome, PipelineError>)> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(cfg.seed, trial);
            (trial, seed, run_pipeline(cfg, classifier, seed))
        })
        .collect();

    let truth_radar = cfg.emitters.iter().any(|e| e.is_radar());
    let mut confusion = ConfusionCounts::default();
    let mut failures = 0usize;
    let mut angle_errors = Vec::new();
    let mut localization_errors = Vec::new();
    let mut records = Vec::with_capacity(outcomes.len());

    for (trial, seed, outcome) in outcomes {
        match outcome {
            Ok(result) => {
                // Verdict vs ground truth. Synthetic-bearing studies skip
                // detection; they count as correct verdicts by construction.
                let predicted = result
                    .detection
                    .as_ref()
                    .map_or(truth_radar, |d| d.spy_radar_present);
                match (truth_radar, predicted) {
                    (true, true) => confusion.true_positive += 1,
                    (true, false) => confusion.false_negative += 1,
                    (false, true) => confusion.false_positive += 1,
                    (false, false) => confusion.true_negative += 1,
                }

                let trial_angles = angle_errors_of(cfg, &result);
                let trial_locs = localization_errors_of(cfg, &result);
                angle_errors.extend_from_slice(&trial_angles);
                localization_errors.extend_from_slice(&trial_locs);

                records.push(TrialRecord {
                    trial,
                    seed,
                    positions: result.localization.as_ref().map(|l| {
                        l.positions
                            .iter()
                            .map(|p| PositionSummary {
                                x: p.x,
                                y: p.y,
                                residual: p.residual,
                            })
                            .collect()
                    }),
                    detection: result.detection,
                    angle_errors_deg: trial_angles,
                    localization_errors_m: trial_locs,
                    warnings: result.warnings,
                    error: None,
                });
            }
            Err(e) => {
                failures += 1;
                // A failed positive trial is a miss; a failed negative one
                // stays a true negative (nothing was reported).
                if truth_radar {
                    confusion.false_negative += 1;
                } else {
                    confusion.true_negative += 1;
                }
                records.push(TrialRecord {
                    trial,
                    seed,
                    detection: None,
                    positions: None,
                    angle_errors_deg: Vec::new(),
                    localization_errors_m: Vec::new(),
                    warnings: Vec::new(),
                    error: Some(e.to_string()),
                });
            }
        }
    }

    let aggregate = AggregateMetrics {
        detection_rate: confusion.detection_rate(),
        false_alarm_rate: confusion.false_alarm_rate(),
        confusion,
        angle_error_deg: Percentiles::from_samples(angle_errors),
        localization_error_m: Percentiles::from_samples(localization_errors),
        failures,
    };
    Ok((aggregate, records))
}

/// Per-bearing angle error: each observed bearing against the nearest true
/// radar-emitter bearing from its anchor.
fn angle_errors_of(cfg: &ScenarioConfig, result: &TrialOutcome) -> Vec<f64> {
    let radar_emitters: Vec<(Scalar, Scalar)> = cfg
        .emitters
        .iter()
        .filter(|e| e.is_radar())
        .map(|e| (e.x, e.y))
        .collect();
    if radar_emitters.is_empty() {
        return Vec::new();
    }
    let mut errors = Vec::new();
    for obs in &result.observations {
        for bearing in &obs.bearings {
            let best = radar_emitters
                .iter()
                .map(|&target| {
                    (bearing.angle_deg - bearing_deg((obs.x, obs.y), target)).abs()
                })
                .fold(f64::MAX, f64::min);
            errors.push(best);
        }
    }
    errors
}

/// Per-estimate localization error: distance to the nearest true radar
/// emitter.
fn localization_errors_of(cfg: &ScenarioConfig, result: &TrialOutcome) -> Vec<f64> {
    let radar_emitters: Vec<(Scalar, Scalar)> = cfg
        .emitters
        .iter()
        .filter(|e| e.is_radar())
        .map(|e| (e.x, e.y))
        .collect();
    let Some(localization) = &result.localization else {
        return Vec::new();
    };
    if radar_emitters.is_empty() {
        return Vec::new();
    }
    localization
        .positions
        .iter()
        .map(|p| {
            radar_emitters
                .iter()
                .map(|&(x, y)| p.distance_to(x, y))
                .fold(f64::MAX, f64::min)
        })
        .collect()
}

/// Applies one sweep-axis value to a copy of the scenario.
pub fn apply_axis(
    cfg: &ScenarioConfig,
    axis: SweepAxis,
    value: Scalar,
) -> Result<ScenarioConfig, String> {
    let mut modified = cfg.clone();
    let origin = cfg
        .anchors
        .first()
        .map(|a| (a.x, a.y))
        .unwrap_or((0.0, 0.0));
    match axis {
        SweepAxis::Distance => {
            if !(value > 0.0) {
                return Err(format!("distance must be positive, got {value}"));
            }
            for emitter in &mut modified.emitters {
                let bearing = bearing_deg(origin, (emitter.x, emitter.y)).to_radians();
                emitter.x = origin.0 + value * bearing.sin();
                emitter.y = origin.1 + value * bearing.cos();
            }
        }
        SweepAxis::Angle => {
            for emitter in &mut modified.emitters {
                let dx = emitter.x - origin.0;
                let dy = emitter.y - origin.1;
                let distance = (dx * dx + dy * dy).sqrt();
                let rad = value.to_radians();
                emitter.x = origin.0 + distance * rad.sin();
                emitter.y = origin.1 + distance * rad.cos();
            }
        }
        SweepAxis::AnchorCount => {
            let count = value as usize;
            if count < 2 || count > modified.anchors.len() {
                return Err(format!(
                    "anchor count {value} outside 2..={}",
                    modified.anchors.len()
                ));
            }
            modified.anchors.truncate(count);
        }
        SweepAxis::HeightDifference => {
            for emitter in &mut modified.emitters {
                emitter.z = Some(value);
            }
        }
    }
    Ok(modified)
}
