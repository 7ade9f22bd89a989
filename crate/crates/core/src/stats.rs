//! Session-local streaming statistics shared by the channel extractors:
//! EWMA smoothing, rolling-max normalisation, and rolling z-scores.
//!
//! All state is per-series and replay-deterministic: feeding the same value
//! sequence through fresh state reproduces identical outputs.

use std::collections::VecDeque;

use crate::num::Real;

/// Exponentially weighted moving average.
///
/// `y_0 = x_0`, then `y_t = alpha * x_t + (1 - alpha) * y_{t-1}` with the
/// smoothing factor `alpha` in `(0, 1]`.
#[derive(Debug, Clone)]
pub struct Ewma<R: Real> {
    alpha: R,
    value: Option<R>,
}

impl<R: Real> Ewma<R> {
    pub fn new(alpha: R) -> Self {
        assert!(
            alpha > R::zero() && alpha <= R::one(),
            "ewma alpha must be in (0, 1]"
        );
        Self { alpha, value: None }
    }

    /// Feed one observation and return the smoothed value.
    pub fn update(&mut self, x: R) -> R {
        let next = match self.value {
            None => x,
            Some(prev) => self.alpha * x + (R::one() - self.alpha) * prev,
        };
        self.value = Some(next);
        next
    }

    pub fn value(&self) -> Option<R> {
        self.value
    }
}

/// Fixed-capacity rolling window over the last `W` observations (including
/// the current one), exposing max, mean, and population std.
#[derive(Debug, Clone)]
pub struct RollingWindow<R: Real> {
    cap: usize,
    values: VecDeque<R>,
}

impl<R: Real> RollingWindow<R> {
    pub fn new(cap: usize) -> Self {
        assert!(cap >= 1, "rolling window needs capacity >= 1");
        Self {
            cap,
            values: VecDeque::with_capacity(cap),
        }
    }

    pub fn push(&mut self, x: R) {
        if self.values.len() == self.cap {
            self.values.pop_front();
        }
        self.values.push_back(x);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> R {
        self.values.iter().fold(R::zero(), |acc, &x| acc.max(x))
    }

    pub fn mean(&self) -> R {
        if self.values.is_empty() {
            return R::zero();
        }
        let sum = self.values.iter().fold(R::zero(), |acc, &x| acc + x);
        sum / R::from_f64_lossy(self.values.len() as f64)
    }

    fn std_pop(&self) -> R {
        if self.values.len() < 2 {
            return R::zero();
        }
        let m = self.mean();
        let sum = self.values.iter().fold(R::zero(), |acc, &x| {
            let d = x - m;
            acc + d * d
        });
        (sum / R::from_f64_lossy(self.values.len() as f64)).sqrt()
    }
}

/// One telemetry series: EWMA smoothing followed by rolling-max
/// normalisation of the smoothed values.
#[derive(Debug, Clone)]
pub struct SeriesStats<R: Real> {
    ewma: Ewma<R>,
    window: RollingWindow<R>,
    eps: R,
}

impl<R: Real> SeriesStats<R> {
    pub fn new(alpha: R, window: usize, eps: R) -> Self {
        Self {
            ewma: Ewma::new(alpha),
            window: RollingWindow::new(window),
            eps,
        }
    }

    /// EWMA-smooth `x`, then normalise by the rolling max of the smoothed
    /// series. Output is in `[0, 1]` for non-negative inputs.
    pub fn smooth_norm(&mut self, x: R) -> R {
        let smoothed = self.ewma.update(x);
        self.window.push(smoothed);
        smoothed / self.window.max().max(self.eps)
    }

    /// Rolling-max normalisation without smoothing (for level series that
    /// the formulas use raw, e.g. heap pressure and capacity-normalised CPU).
    pub fn norm_only(&mut self, x: R) -> R {
        self.window.push(x);
        x / self.window.max().max(self.eps)
    }
}

/// Rolling absolute z-score of a raw series; 0 until two samples exist and
/// for flat windows (epsilon-guarded denominator).
#[derive(Debug, Clone)]
pub struct RollingZ<R: Real> {
    window: RollingWindow<R>,
    eps: R,
}

impl<R: Real> RollingZ<R> {
    pub fn new(window: usize, eps: R) -> Self {
        Self {
            window: RollingWindow::new(window),
            eps,
        }
    }

    pub fn zabs(&mut self, x: R) -> R {
        self.window.push(x);
        if self.window.len() < 2 {
            return R::zero();
        }
        (x - self.window.mean()).abs() / (self.window.std_pop() + self.eps)
    }
}

/// Sustained-elevation gate: EWMA over the raw composite score, averaged
/// over the last `K` smoothed values, compared against a threshold.
#[derive(Debug, Clone)]
pub struct SustainGate<R: Real> {
    ewma: Ewma<R>,
    recent: VecDeque<R>,
    k: usize,
}

impl<R: Real> SustainGate<R> {
    pub fn new(alpha: R, k: usize) -> Self {
        assert!(k >= 1, "gate window must be >= 1");
        Self {
            ewma: Ewma::new(alpha),
            recent: VecDeque::with_capacity(k),
            k,
        }
    }

    /// Feed the raw (pre-gate) score; returns the running mean of the last
    /// `K` EWMA-smoothed scores.
    pub fn update(&mut self, raw: R) -> R {
        let smoothed = self.ewma.update(raw);
        if self.recent.len() == self.k {
            self.recent.pop_front();
        }
        self.recent.push_back(smoothed);
        let sum = self.recent.iter().fold(R::zero(), |acc, &x| acc + x);
        sum / R::from_f64_lossy(self.recent.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ewma_first_value_passthrough() {
        let mut e = Ewma::new(0.5f64);
        assert_eq!(e.update(0.0), 0.0);
        assert_eq!(e.update(1.0), 0.5);
    }

    #[test]
    fn ewma_alpha_one_is_identity() {
        let mut e = Ewma::new(1.0f64);
        for x in [3.0, -1.0, 7.5] {
            assert_eq!(e.update(x), x);
        }
    }

    #[test]
    fn ewma_fixed_point() {
        let mut e = Ewma::new(0.3f64);
        for _ in 0..3 {
            assert_eq!(e.update(10.0), 10.0);
        }
    }

    #[test]
    fn rolling_max_norm_example() {
        // [2, 4, 1] with W = 3 -> [1.0, 1.0, 0.25]
        let mut s = SeriesStats::new(1.0f64, 3, 1e-9);
        assert_eq!(s.smooth_norm(2.0), 1.0);
        assert_eq!(s.smooth_norm(4.0), 1.0);
        assert_eq!(s.smooth_norm(1.0), 0.25);
    }

    #[test]
    fn rolling_max_norm_zero_series() {
        let mut s = SeriesStats::new(1.0f64, 4, 1e-9);
        for _ in 0..5 {
            assert_eq!(s.smooth_norm(0.0), 0.0);
        }
    }

    #[test]
    fn rolling_max_norm_w1_saturates() {
        let mut s = SeriesStats::new(1.0f64, 1, 1e-9);
        for x in [0.3, 7.0, 0.001] {
            assert_eq!(s.smooth_norm(x), 1.0);
        }
    }

    #[test]
    fn window_eviction() {
        let mut w = RollingWindow::new(2);
        w.push(5.0f64);
        w.push(1.0);
        w.push(2.0);
        assert_eq!(w.max(), 2.0);
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn zabs_flat_series_is_zero() {
        let mut z = RollingZ::new(6, 1e-9f64);
        for _ in 0..6 {
            assert_eq!(z.zabs(4.0), 0.0);
        }
    }

    #[test]
    fn zabs_single_sample_is_zero() {
        let mut z = RollingZ::new(6, 1e-9f64);
        assert_eq!(z.zabs(123.0), 0.0);
    }

    #[test]
    fn gate_mean_over_k() {
        let mut g = SustainGate::new(1.0f64, 2);
        assert_eq!(g.update(1.0), 1.0);
        assert_eq!(g.update(0.0), 0.5);
        assert_eq!(g.update(0.0), 0.0);
    }

    #[test]
    fn kernels_work_at_f32() {
        let mut s = SeriesStats::new(0.5f32, 3, 1e-6);
        let v = s.smooth_norm(2.0f32);
        assert_eq!(v, 1.0f32);
    }
}
