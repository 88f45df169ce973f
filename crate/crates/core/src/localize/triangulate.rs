//! Bearing-only triangulation.
//!
//! Each anchor contributes a line through its position along the measured
//! bearing (θ from the +y axis, direction `(sin θ, cos θ)`). The emitter
//! estimate is the point minimizing the sum of squared distances to all
//! lines, found by stacking the per-anchor line equations into `G m = d`
//! and solving the least-squares problem with a compact SVD pseudo-inverse.

use nalgebra::{DMatrix, DVector};

use crate::real::{deg_to_rad, Real};

use super::LocalizeError;

/// One anchor position with a single bearing measurement (degrees, +y axis
/// convention).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorBearing<T> {
    pub x: T,
    pub y: T,
    pub angle_deg: T,
}

impl<T: Real> AnchorBearing<T> {
    pub fn new(x: T, y: T, angle_deg: T) -> Self {
        Self { x, y, angle_deg }
    }

    /// Squared distance from a point to this bearing line.
    pub fn squared_distance_to(&self, px: T, py: T) -> T {
        let theta = deg_to_rad(self.angle_deg);
        let (sin, cos) = theta.sin_cos();
        let rx = px - self.x;
        let ry = py - self.y;
        let along = rx * sin + ry * cos;
        let ox = rx - along * sin;
        let oy = ry - along * cos;
        ox * ox + oy * oy
    }
}

/// Estimated emitter position with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionEstimate<T> {
    pub x: T,
    pub y: T,
    /// Sum of squared distances from the estimate to every bearing line.
    pub residual: T,
    /// Signed distance along each bearing at which the line passes closest.
    pub along_track: Vec<T>,
    /// Singular values of the stacked system, descending.
    pub singular_values: Vec<T>,
    /// False when the system was close to the conditioning limit.
    pub condition_ok: bool,
    /// `(anchor index, bearing index)` pairs that produced this estimate.
    pub bearings_used: Vec<(usize, usize)>,
}

impl<T: Real> PositionEstimate<T> {
    pub fn distance_to(&self, x: T, y: T) -> T {
        let dx = self.x - x;
        let dy = self.y - y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Relative singular-value cutoff below which the geometry is rejected.
pub const CONDITION_CUTOFF: f64 = 1e-10;

/// Finds the point nearest to all bearing lines.
///
/// Builds the `(2N) x (N+2)` system with unknowns `(x, y, a_1 .. a_N)`:
/// row pair `i` encodes `x - a_i sin θ_i = x_i` and `y - a_i cos θ_i = y_i`.
/// The estimate is the first two entries of the pseudo-inverse solution;
/// the residual is the minimized objective.
pub fn triangulate<T: Real>(
    observations: &[AnchorBearing<T>],
) -> Result<PositionEstimate<T>, LocalizeError> {
    triangulate_with_provenance(
        observations,
        &(0..observations.len()).map(|i| (i, 0)).collect::<Vec<_>>(),
    )
}

pub(super) fn triangulate_with_provenance<T: Real>(
    observations: &[AnchorBearing<T>],
    provenance: &[(usize, usize)],
) -> Result<PositionEstimate<T>, LocalizeError> {
    let n = observations.len();
    if n < 2 {
        return Err(LocalizeError::TooFewAnchors { got: n, need: 2 });
    }

    let mut g = DMatrix::<T>::zeros(2 * n, n + 2);
    let mut d = DVector::<T>::zeros(2 * n);
    for (i, obs) in observations.iter().enumerate() {
        let theta = deg_to_rad(obs.angle_deg);
        let (sin, cos) = theta.sin_cos();
        g[(2 * i, 0)] = T::one();
        g[(2 * i, 2 + i)] = -sin;
        g[(2 * i + 1, 1)] = T::one();
        g[(2 * i + 1, 2 + i)] = -cos;
        d[2 * i] = obs.x;
        d[2 * i + 1] = obs.y;
    }

    let svd = g.svd(true, true);
    let mut singular_values: Vec<T> = svd.singular_values.iter().copied().collect();
    singular_values.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    let largest = singular_values[0];
    let smallest = *singular_values.last().expect("at least one singular value");
    let cutoff = T::of(CONDITION_CUTOFF);
    if !(largest > T::zero()) || smallest < cutoff * largest {
        return Err(LocalizeError::IllConditioned {
            anchors: suspect_anchors(observations, provenance),
        });
    }

    let solution = svd
        .solve(&d, cutoff * largest)
        .map_err(|_| LocalizeError::IllConditioned {
            anchors: suspect_anchors(observations, provenance),
        })?;

    let x = solution[0];
    let y = solution[1];
    let along_track: Vec<T> = (0..n).map(|i| solution[2 + i]).collect();

    // Residual per the stacked objective: for the least-squares solution the
    // per-line terms reduce to squared point-to-line distances.
    let mut residual = T::zero();
    for (i, obs) in observations.iter().enumerate() {
        let theta = deg_to_rad(obs.angle_deg);
        let (sin, cos) = theta.sin_cos();
        let ex = x - along_track[i] * sin - obs.x;
        let ey = y - along_track[i] * cos - obs.y;
        residual += ex * ex + ey * ey;
    }

    Ok(PositionEstimate {
        x,
        y,
        residual,
        along_track,
        singular_values,
        condition_ok: true,
        bearings_used: provenance.to_vec(),
    })
}

/// Anchors likely responsible for a degenerate geometry: pairwise-parallel
/// bearings or coincident positions.
fn suspect_anchors<T: Real>(
    observations: &[AnchorBearing<T>],
    provenance: &[(usize, usize)],
) -> Vec<usize> {
    let mut suspects = Vec::new();
    let tol = T::of(1e-6);
    for i in 0..observations.len() {
        for j in (i + 1)..observations.len() {
            let a = &observations[i];
            let b = &observations[j];
            let parallel = deg_to_rad(a.angle_deg - b.angle_deg).sin().abs() < tol;
            let coincident =
                (a.x - b.x).abs() < tol && (a.y - b.y).abs() < tol;
            if parallel || coincident {
                for k in [i, j] {
                    let anchor = provenance.get(k).map_or(k, |p| p.0);
                    if !suspects.contains(&anchor) {
                        suspects.push(anchor);
                    }
                }
            }
        }
    }
    if suspects.is_empty() {
        suspects = provenance.iter().map(|p| p.0).collect();
    }
    suspects
}
