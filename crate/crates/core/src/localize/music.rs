//! Subspace direction finding on the receive array.
//!
//! Builds the spatial covariance from per-sample antenna vectors of an IF
//! record (keeping only samples with power above the noise floor so bursty
//! emitters contribute clean snapshots), eigendecomposes it, and scans the
//! steering manifold against the noise subspace. Peaks of the reciprocal
//! projection are the arrival directions.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::channel::{array_phases, ArrayGeometry};
use crate::frontend::IfRecord;
use crate::real::{cis, Real};

use super::LocalizeError;

/// One pseudo-spectrum peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MusicPeak<T> {
    pub angle_deg: T,
    /// Pseudo-spectrum value at the peak.
    pub height: T,
}

/// MUSIC scan result.
#[derive(Debug, Clone, PartialEq)]
pub struct MusicSpectrum<T> {
    pub grid_deg: Vec<T>,
    pub pseudo_spectrum: Vec<T>,
    /// Local maxima at least 6 dB above the spectrum median, tallest first.
    pub peaks: Vec<MusicPeak<T>>,
    /// Source count used for the subspace split (hint or eigenvalue gap).
    pub source_count: usize,
    /// Covariance eigenvalues, descending.
    pub eigenvalues: Vec<T>,
}

/// Default scan grid step in degrees.
pub const DEFAULT_GRID_STEP_DEG: f64 = 0.1;
/// Peak acceptance threshold above the pseudo-spectrum median, in dB.
const PEAK_OVER_MEDIAN_DB: f64 = 6.0;

/// Scans arrival directions of the signals in `rec`.
///
/// `source_hint` fixes the signal-subspace dimension; without it the count
/// is estimated from the largest eigenvalue-ratio gap. The steering model
/// shares the array's phase convention with the channel simulation.
pub fn music_spectrum<T: Real>(
    rec: &IfRecord<T>,
    array: &ArrayGeometry<T>,
    wavelength_m: T,
    source_hint: Option<usize>,
    grid_step_deg: T,
) -> Result<MusicSpectrum<T>, LocalizeError> {
    let antennas = rec.antennas;
    if antennas < 2 {
        return Err(LocalizeError::TooFewAntennas { got: antennas });
    }
    if let Some(hint) = source_hint {
        if hint == 0 || hint >= antennas {
            return Err(LocalizeError::TooManySources {
                sources: hint,
                antennas,
            });
        }
    }
    if !(grid_step_deg > T::zero()) {
        return Err(LocalizeError::InvalidParameter(
            "grid step must be positive".into(),
        ));
    }

    // Snapshot selection: keep samples whose antenna-averaged power exceeds
    // the noise floor (median power of the record).
    let time_samples = rec.time_samples();
    let mut power: Vec<T> = (0..time_samples)
        .map(|i| {
            rec.antenna_vector(i)
                .iter()
                .map(|s| s.norm_sqr())
                .sum::<T>()
                / T::of(antennas as f64)
        })
        .collect();
    let mut sorted = power.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite power"));
    let floor = sorted[sorted.len() / 2];

    let mut covariance = DMatrix::<Complex<T>>::zeros(antennas, antennas);
    let mut snapshots = 0usize;
    for i in 0..time_samples {
        if power[i] <= floor || power[i] == T::zero() {
            continue;
        }
        snapshots += 1;
        let x = rec.antenna_vector(i);
        for a in 0..antennas {
            for b in 0..antennas {
                covariance[(a, b)] += x[a] * x[b].conj();
            }
        }
    }
    power.clear();
    if snapshots == 0 {
        return Err(LocalizeError::RankDeficient);
    }
    let scale = T::of(snapshots as f64).recip();
    covariance.scale_mut(scale);
    let trace: T = (0..antennas).map(|a| covariance[(a, a)].re).sum();
    if !(trace > T::zero()) {
        return Err(LocalizeError::RankDeficient);
    }

    // Hermitian eigendecomposition, eigenvalues descending.
    let eigen = nalgebra::SymmetricEigen::new(covariance);
    let mut order: Vec<usize> = (0..antennas).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let eigenvalues: Vec<T> = order.iter().map(|&i| eigen.eigenvalues[i]).collect();

    let source_count = match source_hint {
        Some(hint) => hint,
        None => estimate_source_count(&eigenvalues),
    };
    if source_count >= antennas {
        return Err(LocalizeError::TooManySources {
            sources: source_count,
            antennas,
        });
    }

    // Noise subspace: eigenvectors past the signal dimension.
    let noise_dims = antennas - source_count;
    let mut noise_basis = DMatrix::<Complex<T>>::zeros(antennas, noise_dims);
    for (col, &idx) in order[source_count..].iter().enumerate() {
        noise_basis.set_column(col, &eigen.eigenvectors.column(idx));
    }

    // Pseudo-spectrum over the angle grid.
    let mut grid_deg = Vec::new();
    let mut angle = -T::of(90.0) + grid_step_deg;
    while angle < T::of(90.0) {
        grid_deg.push(angle);
        angle += grid_step_deg;
    }
    let pseudo_spectrum: Vec<T> = grid_deg
        .iter()
        .map(|&theta| {
            let phases = array_phases(array, theta, wavelength_m).expect("grid within (-90, 90)");
            let steering = DVector::<Complex<T>>::from_iterator(
                antennas,
                phases.iter().map(|&p| cis(p)),
            );
            let projection = noise_basis.adjoint() * &steering;
            projection.norm_squared().recip()
        })
        .collect();

    let peaks = find_peaks(&grid_deg, &pseudo_spectrum, grid_step_deg);

    Ok(MusicSpectrum {
        grid_deg,
        pseudo_spectrum,
        peaks,
        source_count,
        eigenvalues,
    })
}

/// Largest eigenvalue-ratio gap: sources occupy the leading eigenvalues.
fn estimate_source_count<T: Real>(eigenvalues: &[T]) -> usize {
    let tiny = T::of(1e-30);
    let mut best_k = 1;
    let mut best_ratio = T::zero();
    for k in 1..eigenvalues.len() {
        let ratio = eigenvalues[k - 1] / (eigenvalues[k] + tiny);
        if ratio > best_ratio {
            best_ratio = ratio;
            best_k = k;
        }
    }
    best_k
}

/// Local maxima at least 6 dB above the median, parabolic-refined,
/// tallest first.
fn find_peaks<T: Real>(grid: &[T], values: &[T], step: T) -> Vec<MusicPeak<T>> {
    if values.len() < 3 {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite spectrum"));
    let median = sorted[sorted.len() / 2];
    let threshold = median * T::of(10f64.powf(PEAK_OVER_MEDIAN_DB / 10.0));

    let mut peaks = Vec::new();
    for i in 1..values.len() - 1 {
        if values[i] < threshold {
            continue;
        }
        if values[i] > values[i - 1] && values[i] >= values[i + 1] {
            // Parabolic refinement on the log spectrum.
            let l = values[i - 1].ln();
            let c = values[i].ln();
            let r = values[i + 1].ln();
            let denom = l - c - c + r;
            let offset = if denom.abs() > T::of(1e-30) {
                (T::of(0.5) * (l - r) / denom).clamp(-T::one(), T::one())
            } else {
                T::zero()
            };
            peaks.push(MusicPeak {
                angle_deg: grid[i] + offset * step,
                height: values[i],
            });
        }
    }
    peaks.sort_by(|a, b| b.height.partial_cmp(&a.height).expect("finite heights"));
    peaks
}
