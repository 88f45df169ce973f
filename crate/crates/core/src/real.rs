//! Scalar abstraction for the numeric core.
//!
//! Every signal-processing and geometry kernel in this crate is generic over
//! [`Real`], a floating-point scalar backed by `nalgebra`/`num-traits`
//! machinery. `f64` is the working precision of the pipeline (see the
//! [`crate::Scalar`] alias); `f32` is available for storage-sensitive callers
//! such as the binary IF dump.

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Floating-point scalar usable by all numeric kernels in this crate.
pub trait Real:
    nalgebra::RealField
    + Copy
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssign
    + rand::distr::uniform::SampleUniform
    + std::iter::Sum<Self>
    + Default
    + serde::Serialize
    + serde::de::DeserializeOwned
{
    /// Converts an `f64` constant into this scalar type.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 constant must be representable")
    }

    /// Lossy view of this scalar as `f64`.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar must convert to f64")
    }

    /// Draws a standard normal variate.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Real for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Real for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

/// Speed of light as a generic scalar.
pub fn speed_of_light<T: Real>() -> T {
    T::of(SPEED_OF_LIGHT)
}

/// Degrees to radians.
pub fn deg_to_rad<T: Real>(deg: T) -> T {
    deg * T::pi() / T::of(180.0)
}

/// Radians to degrees.
pub fn rad_to_deg<T: Real>(rad: T) -> T {
    rad * T::of(180.0) / T::pi()
}

/// Unit phasor `exp(j * phase)`.
#[inline]
pub fn cis<T: Real>(phase: T) -> Complex<T> {
    let (sin, cos) = phase.sin_cos();
    Complex::new(cos, sin)
}

/// Complex magnitude without requiring `num_traits::Float`.
#[inline]
pub fn cx_abs<T: Real>(z: Complex<T>) -> T {
    z.norm_sqr().sqrt()
}

/// Error-free product: `hi + lo == a * b` exactly (requires FMA semantics).
#[inline]
fn two_product<T: Real>(a: T, b: T) -> (T, T) {
    let hi = a * b;
    let lo = a.mul_add(b, -hi);
    (hi, lo)
}

/// Error-free sum (Knuth two-sum): `hi + lo == a + b` exactly.
#[inline]
fn two_sum<T: Real>(a: T, b: T) -> (T, T) {
    let hi = a + b;
    let bb = hi - a;
    let lo = (a - (hi - bb)) + (b - bb);
    (hi, lo)
}

/// Fractional part of `freq * t + slope * t^2 / 2` in cycles, evaluated in
/// compensated (double-word) arithmetic.
///
/// Carrier-times-time products at mmWave reach ~1e10 cycles, where plain
/// `f64` rounding would swamp sub-hertz structure; splitting each product
/// into an exact high/low pair and reducing the high words modulo 1 keeps
/// the returned fraction accurate to a few ULPs. The result is in `[0, 1)`.
pub fn phase_cycles_frac<T: Real>(freq: T, slope: T, t: T) -> T {
    let (mut hi, mut lo) = two_product(freq, t);

    if slope != T::zero() {
        let (tsq, tsq_err) = two_product(t, t);
        let half_slope = slope * T::of(0.5);
        let (qhi, qlo) = two_product(half_slope, tsq);
        let (h, l) = two_sum(hi, qhi);
        hi = h;
        lo += l + qlo + half_slope * tsq_err;
    }

    // hi is below 2^53 in every supported configuration, so hi - floor(hi)
    // is exact; the compensation term then restores the low-order bits.
    let mut frac = (hi - hi.floor()) + lo;
    if frac >= T::one() {
        frac -= T::one();
    } else if frac < T::zero() {
        frac += T::one();
    }
    frac
}

/// Phase in radians of a linear-frequency-sweep signal starting at `freq`
/// with the given slope, reduced modulo 2π.
pub fn sweep_phase<T: Real>(freq: T, slope: T, t: T) -> T {
    T::two_pi() * phase_cycles_frac(freq, slope, t)
}

/// `t mod period` for non-negative periods, robust for negative `t`.
pub fn wrap_time<T: Real>(t: T, period: T) -> T {
    let cycles = (t / period).floor();
    let wrapped = (-cycles).mul_add(period, t);
    if wrapped < T::zero() {
        wrapped + period
    } else if wrapped >= period {
        wrapped - period
    } else {
        wrapped
    }
}

/// Difference `a - b` on the phase circle, mapped into `(-π, π]`.
pub fn circular_diff<T: Real>(a: T, b: T) -> T {
    let mut d = a - b;
    let two_pi = T::two_pi();
    while d > T::pi() {
        d -= two_pi;
    }
    while d <= -T::pi() {
        d += two_pi;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_fraction_matches_exact_arithmetic_at_small_arguments() {
        // 1.25 cycles: freq 2.5 Hz at t = 0.5 s.
        let frac = phase_cycles_frac(2.5f64, 0.0, 0.5);
        assert!((frac - 0.25).abs() < 1e-15);
    }

    #[test]
    fn phase_fraction_is_precise_at_mmwave_scale() {
        // 77 GHz * 2^-14 s = 4_699_707 + 512/16384 cycles; both factors are
        // exactly representable, so the fraction must come out as 0.03125
        // despite the product being ~4.7e6 cycles.
        let frac = phase_cycles_frac(77e9f64, 0.0, f64::powi(2.0, -14));
        assert_eq!(frac, 0.03125);
    }

    #[test]
    fn wrap_time_handles_negatives() {
        assert!((wrap_time(-0.3f64, 1.0) - 0.7).abs() < 1e-15);
        assert!((wrap_time(2.5f64, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn circular_diff_wraps() {
        let d = circular_diff(0.1f64, 2.0 * std::f64::consts::PI - 0.1);
        assert!((d - 0.2).abs() < 1e-12);
    }
}
