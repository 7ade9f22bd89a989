//! MPP-M: heap/memory pressure from meminfo snapshots.
//!
//! The memory score mixes PSS and heap-allocation rates, the heap-pressure
//! level, and smoothed swap, gated on sustained elevation (mean of the last
//! `K` EWMA'd raw scores against `tau_mem`). Binder/parcel and WebView
//! growth act as small network handshake proxies; view-tree churn feeds the
//! resource axis. Steps without a previous snapshot are skipped, not masked
//! to zero.

use serde::{Deserialize, Serialize};

use super::{growth_rate, ChannelEvidence, ChannelId, StreamConfig};
use crate::stats::{SeriesStats, SustainGate};
use crate::telemetry::MeminfoSnapshot;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MChannelConfig {
    /// Mixture over [pss_rate, heap_rate, heap_pressure, swap].
    pub alpha: [Scalar; 4],
    pub beta_ipc: Scalar,
    pub beta_wv: Scalar,
    pub gamma_ui: Scalar,
    /// Sustained-elevation gate threshold.
    pub tau_mem: Scalar,
    /// Gate averaging window K.
    pub gate_window: usize,
    pub epsilon: Scalar,
}

impl Default for MChannelConfig {
    fn default() -> Self {
        Self {
            alpha: [0.30, 0.30, 0.25, 0.15],
            beta_ipc: 0.15,
            beta_wv: 0.10,
            gamma_ui: 0.20,
            tau_mem: 0.20,
            gate_window: 3,
            epsilon: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MChannel {
    cfg: MChannelConfig,
    pss_rate: SeriesStats<Scalar>,
    heap_rate: SeriesStats<Scalar>,
    pressure: SeriesStats<Scalar>,
    swap: SeriesStats<Scalar>,
    binder: SeriesStats<Scalar>,
    webview: SeriesStats<Scalar>,
    ui_churn: SeriesStats<Scalar>,
    gate: SustainGate<Scalar>,
    prev: Option<(u64, MeminfoSnapshot)>,
}

fn rate(curr: u64, prev: u64, elapsed: Scalar) -> Scalar {
    growth_rate(curr as Scalar, prev as Scalar, elapsed)
}

impl MChannel {
    pub fn new(cfg: MChannelConfig, stream: &StreamConfig) -> Self {
        let mk = || SeriesStats::new(stream.alpha_ewma, stream.window, stream.epsilon);
        Self {
            gate: SustainGate::new(stream.alpha_ewma, cfg.gate_window.max(1)),
            cfg,
            pss_rate: mk(),
            heap_rate: mk(),
            pressure: mk(),
            swap: mk(),
            binder: mk(),
            webview: mk(),
            ui_churn: mk(),
            prev: None,
        }
    }

    /// Process one step. `None` when the step is skipped (no snapshot, or no
    /// previous snapshot to difference against).
    pub fn step(
        &mut self,
        snapshot: Option<&MeminfoSnapshot>,
        delta_t: Scalar,
        step: u64,
    ) -> Option<ChannelEvidence> {
        let curr = *snapshot?;
        let (prev_step, prev) = self.prev.replace((step, curr))?;
        // elapsed spans snapshot gaps so rates keep their scale
        let elapsed = (step.saturating_sub(prev_step).max(1) as Scalar) * delta_t.max(1e-9);

        let pss = rate(curr.pss_total_kb, prev.pss_total_kb, elapsed);
        let heap = rate(curr.heap_alloc_kb, prev.heap_alloc_kb, elapsed);
        let pressure = curr.heap_pressure(self.cfg.epsilon);
        let swap_level = curr.swap_pss_dirty_kb as Scalar;

        let a = &self.cfg.alpha;
        let raw = a[0] * self.pss_rate.smooth_norm(pss)
            + a[1] * self.heap_rate.smooth_norm(heap)
            + a[2] * self.pressure.norm_only(pressure)
            + a[3] * self.swap.smooth_norm(swap_level);
        let sustained = self.gate.update(raw);
        let s_mem = if sustained >= self.cfg.tau_mem { raw } else { 0.0 };

        let binder_rate = rate(
            curr.local_binders + curr.proxy_binders,
            prev.local_binders + prev.proxy_binders,
            elapsed,
        ) + rate(curr.parcel_count, prev.parcel_count, elapsed);
        let wv_rate = rate(curr.webviews, prev.webviews, elapsed);
        let ui_rate = rate(
            curr.views + curr.view_root_impl,
            prev.views + prev.view_root_impl,
            elapsed,
        );

        let s_net = (self.cfg.beta_ipc * self.binder.smooth_norm(binder_rate)
            + self.cfg.beta_wv * self.webview.smooth_norm(wv_rate))
        .min(1.0);
        let s_res = (self.cfg.gamma_ui * self.ui_churn.smooth_norm(ui_rate)).min(1.0);

        Some(ChannelEvidence::present(
            ChannelId::M,
            step,
            [s_net, s_mem, s_res],
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(pss: u64, alloc: u64, size: u64) -> MeminfoSnapshot {
        MeminfoSnapshot {
            pss_total_kb: pss,
            heap_alloc_kb: alloc,
            heap_size_kb: size,
            ..Default::default()
        }
    }

    fn channel(cfg: MChannelConfig) -> MChannel {
        MChannel::new(cfg, &StreamConfig::default())
    }

    #[test]
    fn first_step_is_skipped() {
        let mut ch = channel(MChannelConfig::default());
        assert!(ch.step(Some(&snap(100, 50, 100)), 5.0, 0).is_none());
        assert!(ch.step(Some(&snap(100, 50, 100)), 5.0, 1).is_some());
    }

    #[test]
    fn missing_snapshot_is_skipped() {
        let mut ch = channel(MChannelConfig::default());
        assert!(ch.step(None, 5.0, 0).is_none());
    }

    #[test]
    fn identical_snapshots_leave_only_pressure_term() {
        // rates all zero; heap_pressure 0.5 normalises to 1 at the window max,
        // so raw = alpha_3 * 1 = 0.25 and the gate (ewma'd raw 0.25 >= 0.2) passes
        let mut ch = channel(MChannelConfig::default());
        let s = snap(100_000, 50_000, 100_000);
        ch.step(Some(&s), 5.0, 0);
        let e = ch.step(Some(&s), 5.0, 1).unwrap();
        assert!((e.s[1] - 0.25).abs() < 1e-9, "got {}", e.s[1]);
        assert_eq!(e.s[0], 0.0);
        assert_eq!(e.s[2], 0.0);
    }

    #[test]
    fn failing_gate_zeroes_memory_score() {
        let mut cfg = MChannelConfig::default();
        cfg.tau_mem = 0.9; // raw 0.25 can never sustain 0.9
        let mut ch = channel(cfg);
        let s = snap(100_000, 50_000, 100_000);
        ch.step(Some(&s), 5.0, 0);
        let e = ch.step(Some(&s), 5.0, 1).unwrap();
        assert_eq!(e.s[1], 0.0);
    }

    #[test]
    fn gc_shrink_contributes_zero() {
        let mut ch = channel(MChannelConfig::default());
        ch.step(Some(&snap(100_000, 80_000, 100_000)), 5.0, 0);
        // heap alloc dropped (GC); negative rate floors at 0
        let e = ch.step(Some(&snap(100_000, 20_000, 100_000)), 5.0, 1).unwrap();
        // only pressure term remains: 0.25 * norm(0.2 within window max 0.8)
        assert!(e.s[1] <= 0.25 + 1e-9);
    }

    #[test]
    fn handshake_and_churn_respect_caps() {
        let mut ch = channel(MChannelConfig::default());
        let mut a = snap(100, 50, 100);
        a.local_binders = 10;
        a.views = 100;
        ch.step(Some(&a), 5.0, 0);
        let mut b = snap(100, 50, 100);
        b.local_binders = 500;
        b.parcel_count = 900;
        b.webviews = 5;
        b.views = 4000;
        b.view_root_impl = 10;
        let e = ch.step(Some(&b), 5.0, 1).unwrap();
        assert!(e.s[0] <= 0.15 + 0.10 + 1e-12);
        assert!(e.s[2] <= 0.20 + 1e-12);
    }

    #[test]
    fn snapshot_gap_scales_elapsed_time() {
        let mut ch = channel(MChannelConfig::default());
        ch.step(Some(&snap(0, 1, 100)), 5.0, 0);
        ch.step(None, 5.0, 1); // gap
        // delta 1000 KB over 2 steps -> rate uses 10 s, not 5 s
        let e = ch.step(Some(&snap(1000, 1, 100)), 5.0, 2).unwrap();
        assert!(e.mask);
    }

    #[test]
    fn raising_gate_threshold_never_raises_score() {
        let series: Vec<MeminfoSnapshot> = (0..10)
            .map(|i| snap(1000 * i, 100 * i + 1, 2000))
            .collect();
        let run = |tau: Scalar| -> Vec<Scalar> {
            let mut cfg = MChannelConfig::default();
            cfg.tau_mem = tau;
            let mut ch = channel(cfg);
            series
                .iter()
                .enumerate()
                .filter_map(|(i, s)| ch.step(Some(s), 5.0, i as u64))
                .map(|e| e.s[1])
                .collect()
        };
        let low = run(0.1);
        let high = run(0.6);
        for (l, h) in low.iter().zip(&high) {
            assert!(h <= l);
        }
    }
}
