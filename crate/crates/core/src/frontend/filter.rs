//! Low-pass filter magnitude model.

use crate::real::Real;

/// Butterworth amplitude response `|H(f)| = 1 / sqrt(1 + (f/fc)^(2n))`.
///
/// Monotonically non-increasing in `|f|`, with the half-power point exactly
/// at the cutoff: `|H(fc)|^2 = 1/2`.
pub fn butterworth_amplitude<T: Real>(freq: T, cutoff: T, order: usize) -> T {
    let ratio = (freq / cutoff).abs();
    (T::one() + ratio.powi(2 * order as i32)).sqrt().recip()
}

/// Butterworth power response `|H(f)|^2`.
pub fn butterworth_power<T: Real>(freq: T, cutoff: T, order: usize) -> T {
    let ratio = (freq / cutoff).abs();
    (T::one() + ratio.powi(2 * order as i32)).recip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_power_at_cutoff() {
        for order in 1..=8 {
            let p = butterworth_power(6e6f64, 6e6, order);
            assert!((p - 0.5).abs() < 1e-12, "order {order}: {p}");
        }
    }

    #[test]
    fn monotone_non_increasing() {
        let cutoff = 6e6f64;
        let mut prev = butterworth_amplitude(0.0, cutoff, 4);
        assert_eq!(prev, 1.0);
        for k in 1..500 {
            let f = k as f64 * 1e5;
            let h = butterworth_amplitude(f, cutoff, 4);
            assert!(h <= prev);
            prev = h;
        }
    }

    #[test]
    fn stopband_rejection_at_ten_times_cutoff() {
        // 4th order, 10x cutoff: power response is ~1e-8 (-80 dB).
        let p = butterworth_power(60e6f64, 6e6, 4);
        assert!(p < 1e-4, "power {p}");
    }
}
