//! RUP-R: scheduler-side resource intensity.
//!
//! The compute scalar blends core-aware CPU magnitude (rolling-max
//! normalised) with a rolling-z volatility term. RSS dynamics corroborate
//! memory pressure behind the same sustained-elevation gating as the M
//! channel. `top` exposes no byte counters, so the network component is
//! identically zero.

use serde::{Deserialize, Serialize};

use super::{growth_rate, shrink_rate, ChannelEvidence, ChannelId, StreamConfig};
use crate::stats::{RollingZ, SeriesStats, SustainGate};
use crate::telemetry::ProcSnapshot;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RChannelConfig {
    /// [CPU magnitude, CPU volatility] weights.
    pub gamma: [Scalar; 2],
    /// Corroborator mixture over [mem%_rate, res_rate, mem%_level, shr_shrink].
    pub alpha: [Scalar; 4],
    /// Sustained-elevation gate for the memory corroborator.
    pub tau_mem: Scalar,
    pub gate_window: usize,
}

impl Default for RChannelConfig {
    fn default() -> Self {
        Self {
            gamma: [0.8, 0.2],
            alpha: [0.3, 0.3, 0.25, 0.15],
            tau_mem: 0.20,
            gate_window: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RChannel {
    cfg: RChannelConfig,
    cpu_level: SeriesStats<Scalar>,
    cpu_vol: RollingZ<Scalar>,
    mem_rate: SeriesStats<Scalar>,
    res_rate: SeriesStats<Scalar>,
    mem_level: SeriesStats<Scalar>,
    shr_shrink: SeriesStats<Scalar>,
    gate: SustainGate<Scalar>,
    prev: Option<(u64, ProcSnapshot)>,
}

impl RChannel {
    pub fn new(cfg: RChannelConfig, stream: &StreamConfig) -> Self {
        let mk = || SeriesStats::new(stream.alpha_ewma, stream.window, stream.epsilon);
        Self {
            gate: SustainGate::new(stream.alpha_ewma, cfg.gate_window.max(1)),
            cfg,
            cpu_level: mk(),
            cpu_vol: RollingZ::new(stream.window, stream.epsilon),
            mem_rate: mk(),
            res_rate: mk(),
            mem_level: mk(),
            shr_shrink: mk(),
            prev: None,
        }
    }

    /// Process one step; masked when the snapshot is absent. Rates fall to 0
    /// on the first observation, levels still contribute.
    pub fn step(
        &mut self,
        snapshot: Option<&ProcSnapshot>,
        delta_t: Scalar,
        step: u64,
    ) -> ChannelEvidence {
        let Some(curr) = snapshot.copied() else {
            return ChannelEvidence::masked(ChannelId::R, step);
        };
        let prev = self.prev.replace((step, curr));

        let s_res = (self.cfg.gamma[0] * self.cpu_level.norm_only(curr.cpu_cap_norm())
            + self.cfg.gamma[1] * self.cpu_vol.zabs(curr.cpu_pct))
        .clamp(0.0, 1.0);

        let (mem_dot, res_dot, shr_neg) = match prev {
            Some((prev_step, p)) => {
                let elapsed = (step.saturating_sub(prev_step).max(1) as Scalar) * delta_t.max(1e-9);
                (
                    growth_rate(curr.mem_pct, p.mem_pct, elapsed),
                    growth_rate(curr.res_kb as Scalar, p.res_kb as Scalar, elapsed),
                    // the one signal defined on the negative part: SHR drops
                    shrink_rate(curr.shr_kb as Scalar, p.shr_kb as Scalar, elapsed),
                )
            }
            None => (0.0, 0.0, 0.0),
        };

        let a = &self.cfg.alpha;
        let raw = a[0] * self.mem_rate.smooth_norm(mem_dot)
            + a[1] * self.res_rate.smooth_norm(res_dot)
            + a[2] * self.mem_level.smooth_norm(curr.mem_pct)
            + a[3] * self.shr_shrink.smooth_norm(shr_neg);
        let sustained = self.gate.update(raw);
        let s_mem = if sustained >= self.cfg.tau_mem { raw } else { 0.0 };

        // top has no byte/packet counters: the network component stays 0
        ChannelEvidence::present(ChannelId::R, step, [0.0, s_mem, s_res])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(cpu: Scalar, mem: Scalar, res: u64, shr: u64, cores: u32) -> ProcSnapshot {
        ProcSnapshot {
            cpu_pct: cpu,
            mem_pct: mem,
            res_kb: res,
            virt_kb: res * 4,
            shr_kb: shr,
            cores,
            timestamp_ms: 0,
        }
    }

    fn channel(cfg: RChannelConfig) -> RChannel {
        RChannel::new(cfg, &StreamConfig::default())
    }

    #[test]
    fn network_component_identically_zero() {
        let mut ch = channel(RChannelConfig::default());
        for i in 0..50u64 {
            let e = ch.step(
                Some(&snap((i * 37 % 400) as Scalar, 2.0, 1000 + i, 500, 4)),
                5.0,
                i,
            );
            assert_eq!(e.s[0], 0.0);
        }
    }

    #[test]
    fn missing_snapshot_masks() {
        let mut ch = channel(RChannelConfig::default());
        let e = ch.step(None, 5.0, 0);
        assert!(!e.mask);
        assert_eq!(e.s, [0.0; 3]);
    }

    #[test]
    fn cpu_at_window_max_scores_gamma1() {
        // cpu 250% on 4 cores -> cap-norm 0.625 -> rolling max of itself -> 1.0
        let mut cfg = RChannelConfig::default();
        cfg.gamma = [0.8, 0.0];
        let mut ch = channel(cfg);
        let e = ch.step(Some(&snap(250.0, 0.0, 0, 0, 4)), 5.0, 0);
        assert!((e.s[2] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn flat_cpu_has_zero_volatility() {
        let mut cfg = RChannelConfig::default();
        cfg.gamma = [0.0, 1.0]; // volatility only
        let mut ch = channel(cfg);
        for i in 0..10u64 {
            let e = ch.step(Some(&snap(120.0, 0.0, 0, 0, 4)), 5.0, i);
            assert_eq!(e.s[2], 0.0);
        }
    }

    #[test]
    fn shr_drop_feeds_corroborator() {
        let mut cfg = RChannelConfig::default();
        cfg.alpha = [0.0, 0.0, 0.0, 1.0]; // shrink term only
        cfg.tau_mem = 0.0;
        let mut ch = channel(cfg);
        ch.step(Some(&snap(0.0, 0.0, 0, 9000, 4)), 5.0, 0);
        let e = ch.step(Some(&snap(0.0, 0.0, 0, 1000, 4)), 5.0, 1);
        assert!(e.s[1] > 0.0);
    }

    #[test]
    fn outputs_stay_in_unit_interval() {
        let mut ch = channel(RChannelConfig::default());
        for i in 0..200u64 {
            let cpu = ((i * 7919) % 1000) as Scalar;
            let mem = ((i * 104729) % 100) as Scalar / 10.0;
            let e = ch.step(Some(&snap(cpu, mem, i * 100, 5000 - (i * 7) % 5000, 8)), 5.0, i);
            for v in e.s {
                assert!((0.0..=1.0).contains(&v), "step {i}: {v}");
            }
        }
    }
}
