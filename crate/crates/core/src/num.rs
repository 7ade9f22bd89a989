//! Scalar abstraction for the numeric kernels.
//!
//! Everything math-heavy (streaming stats, alignment, calibration) is written
//! against [`Real`] so the kernels work for `f32` and `f64` alike; the engine
//! instantiates them at [`crate::Scalar`].

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real: Float + FromPrimitive + ToPrimitive + std::fmt::Debug + 'static {
    /// Lossy conversion from `f64` (exact for `f64` itself).
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any Real")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Logistic squash `1 / (1 + e^-x)`.
pub fn sigmoid<R: Real>(x: R) -> R {
    R::one() / (R::one() + (-x).exp())
}

/// Clamp `x` into `[lo, hi]`.
pub fn clip<R: Real>(x: R, lo: R, hi: R) -> R {
    if x < lo {
        lo
    } else if x > hi {
        hi
    } else {
        x
    }
}

/// `ln 4`, the constant with `sigmoid(x / (x / ln4)) = 0.8`.
pub fn ln4<R: Real>() -> R {
    R::from_f64_lossy(4.0f64.ln())
}

/// Arithmetic mean; zero for an empty slice.
pub fn mean<R: Real>(xs: &[R]) -> R {
    if xs.is_empty() {
        return R::zero();
    }
    let sum = xs.iter().fold(R::zero(), |acc, &x| acc + x);
    sum / R::from_f64_lossy(xs.len() as f64)
}

/// Population variance; zero for fewer than two samples.
pub fn variance<R: Real>(xs: &[R]) -> R {
    if xs.len() < 2 {
        return R::zero();
    }
    let m = mean(xs);
    let sum = xs.iter().fold(R::zero(), |acc, &x| {
        let d = x - m;
        acc + d * d
    });
    sum / R::from_f64_lossy(xs.len() as f64)
}

/// Nearest-rank percentile over a sample: sorts a copy and returns the value
/// at rank `ceil(p/100 * n)` (1-based). `p` in (0, 100].
pub fn percentile_nearest_rank<R: Real>(xs: &[R], p: f64) -> Option<R> {
    if xs.is_empty() || !(0.0..=100.0).contains(&p) || p == 0.0 {
        return None;
    }
    let mut sorted: Vec<R> = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    let rank = ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    Some(sorted[rank - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_midpoint() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert_eq!(sigmoid(0.0f32), 0.5);
    }

    #[test]
    fn sigmoid_maps_p75_ratio_to_08() {
        // tau = x / ln4 makes sigmoid(x / tau) = 0.8 for any positive x
        for x in [0.5f64, 1.3863, 7.5, 42.0] {
            let tau = x / ln4::<f64>();
            assert!((sigmoid(x / tau) - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn clip_bounds() {
        assert_eq!(clip(1.5, 0.0, 1.0), 1.0);
        assert_eq!(clip(-0.5, 0.0, 1.0), 0.0);
        assert_eq!(clip(0.25, 0.0, 1.0), 0.25);
    }

    #[test]
    fn percentile_nearest_rank_convention() {
        let xs: Vec<f64> = (1..=100).map(|i| 0.1 * i as f64).collect();
        assert_eq!(percentile_nearest_rank(&xs, 99.0), Some(9.9));
        assert_eq!(percentile_nearest_rank(&xs, 75.0), Some(7.5));
        assert_eq!(percentile_nearest_rank(&xs, 100.0), Some(10.0));
        assert_eq!(percentile_nearest_rank::<f64>(&[], 50.0), None);
    }

    #[test]
    fn percentile_single_element() {
        assert_eq!(percentile_nearest_rank(&[3.0f64], 99.0), Some(3.0));
    }

    #[test]
    fn variance_of_constant_is_zero() {
        assert_eq!(variance(&[2.0f64, 2.0, 2.0]), 0.0);
    }
}
