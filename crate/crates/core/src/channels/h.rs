//! NFPP-H: network flow and payload profiling.
//!
//! The payload path (HTTP records) yields byte/request/failure rates,
//! cross-domain and tracker ratios, endpoint reputation, an encode/decode
//! proxy (entropy x size), the large-payload share, and an in-flight backlog
//! that includes unmatched/expired requests. The flow path contributes only
//! the malicious-bytes rate, bounded by `w_m` to avoid double-counting with
//! throughput. Every series is EWMA-smoothed and rolling-max normalised
//! before the weighted projection.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{Baselines, ChannelEvidence, ChannelId, StreamConfig};
use crate::stats::SeriesStats;
use crate::telemetry::{FlowWindow, HttpRecord};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HChannelConfig {
    pub w_b: Scalar,
    pub w_r: Scalar,
    pub w_f: Scalar,
    pub w_x: Scalar,
    pub w_e: Scalar,
    pub w_t: Scalar,
    pub w_m: Scalar,
    /// Spillover multipliers for the non-network axes.
    pub kappa_l: Scalar,
    pub kappa_p: Scalar,
    pub kappa_h: Scalar,
    pub max_mem: Scalar,
    pub max_res: Scalar,
    /// Mask the step below this many flow+HTTP samples.
    pub min_samples: usize,
    /// Payloads at or above this size count as large.
    pub large_payload_bytes: u64,
    /// In-flight requests expire unmatched after this many steps.
    pub inflight_expiry_steps: u64,
}

impl Default for HChannelConfig {
    fn default() -> Self {
        Self {
            w_b: 0.25,
            w_r: 0.15,
            w_f: 0.10,
            w_x: 0.10,
            w_e: 0.15,
            w_t: 0.10,
            w_m: 0.15,
            kappa_l: 0.15,
            kappa_p: 0.15,
            kappa_h: 0.20,
            max_mem: 0.35,
            max_res: 0.30,
            min_samples: 1,
            large_payload_bytes: 65536,
            inflight_expiry_steps: 3,
        }
    }
}

// Per-message failure blend: status-class deviation dominates, method
// rarity and header atypicality (scored against the baseline tables)
// contribute the rest.
const FAIL_STATUS_W: Scalar = 0.6;
const FAIL_RARITY_W: Scalar = 0.2;
const FAIL_HEADER_W: Scalar = 0.2;

fn fail_score(rec: &HttpRecord, baselines: &Baselines) -> Scalar {
    let status_dev = if rec.is_failure() { 1.0 } else { 0.0 };
    let rarity = baselines.method_rarity(&rec.method);
    let header_miss = baselines.header_atypicality(&rec.headers_present);
    (FAIL_STATUS_W * status_dev + FAIL_RARITY_W * rarity + FAIL_HEADER_W * header_miss)
        .clamp(0.0, 1.0)
}

/// Tracks in-flight requests across steps; an arrival not matched within the
/// expiry window counts as expired exactly once, at expiry.
#[derive(Debug, Clone, Default)]
struct BacklogTracker {
    arrivals: VecDeque<u64>,
}

impl BacklogTracker {
    fn update(&mut self, step: u64, new_inflight: usize, expiry_steps: u64) -> (usize, usize) {
        for _ in 0..new_inflight {
            self.arrivals.push_back(step);
        }
        let mut expired = 0usize;
        while let Some(&oldest) = self.arrivals.front() {
            if step.saturating_sub(oldest) >= expiry_steps && expiry_steps > 0 {
                self.arrivals.pop_front();
                expired += 1;
            } else {
                break;
            }
        }
        (self.arrivals.len(), expired)
    }
}

#[derive(Debug, Clone)]
struct HSeries {
    bytes: SeriesStats<Scalar>,
    requests: SeriesStats<Scalar>,
    failures: SeriesStats<Scalar>,
    cross_domain: SeriesStats<Scalar>,
    reputation: SeriesStats<Scalar>,
    trackers: SeriesStats<Scalar>,
    malicious: SeriesStats<Scalar>,
    backlog: SeriesStats<Scalar>,
    large_share: SeriesStats<Scalar>,
    entropy_proxy: SeriesStats<Scalar>,
}

impl HSeries {
    fn new(sc: &StreamConfig) -> Self {
        let mk = || SeriesStats::new(sc.alpha_ewma, sc.window, sc.epsilon);
        Self {
            bytes: mk(),
            requests: mk(),
            failures: mk(),
            cross_domain: mk(),
            reputation: mk(),
            trackers: mk(),
            malicious: mk(),
            backlog: mk(),
            large_share: mk(),
            entropy_proxy: mk(),
        }
    }
}

/// Stateful H-channel extractor; one instance per session.
#[derive(Debug, Clone)]
pub struct HChannel {
    cfg: HChannelConfig,
    baselines: Baselines,
    series: HSeries,
    backlog: BacklogTracker,
    prev_flows: Option<FlowWindow>,
}

impl HChannel {
    pub fn new(cfg: HChannelConfig, stream: &StreamConfig, baselines: Baselines) -> Self {
        Self {
            cfg,
            baselines,
            series: HSeries::new(stream),
            backlog: BacklogTracker::default(),
            prev_flows: None,
        }
    }

    /// Process one step's window. Returns the evidence vector plus any
    /// flow-monotonicity warnings.
    pub fn step(
        &mut self,
        flows: Option<&FlowWindow>,
        http: &[HttpRecord],
        delta_t: Scalar,
        step: u64,
    ) -> (ChannelEvidence, Vec<String>) {
        let mut warnings = Vec::new();

        let deltas = flows.map(|w| w.deltas(self.prev_flows.as_ref()));
        if let Some(d) = &deltas {
            warnings.extend(d.warnings.iter().cloned());
        }
        if let Some(w) = flows {
            self.prev_flows = Some(w.clone());
        }

        let samples = flows.map(|w| w.len()).unwrap_or(0) + http.len();
        if samples < self.cfg.min_samples.max(1) {
            // Empty or under-sampled window: masked, streaming state untouched.
            return (ChannelEvidence::masked(ChannelId::H, step), warnings);
        }

        let dt = delta_t.max(1e-9);
        let n = http.len() as Scalar;

        let bytes_rate = http.iter().map(|r| r.body_size as Scalar).sum::<Scalar>() / dt;
        let request_rate = n / dt;
        let failure_rate = http
            .iter()
            .map(|r| fail_score(r, &self.baselines))
            .sum::<Scalar>()
            / dt;
        let cross_ratio = if n > 0.0 {
            http.iter().filter(|r| r.is_third_party).count() as Scalar / n
        } else {
            0.0
        };
        let reputation_risk = if n > 0.0 {
            http.iter().map(|r| 1.0 - r.reputation).sum::<Scalar>() / n
        } else {
            0.0
        };
        let tracker_density = if n > 0.0 {
            http.iter().filter(|r| r.tracker_match).count() as Scalar / n
        } else {
            0.0
        };
        let entropy_proxy_rate = http
            .iter()
            .filter_map(|r| r.body_entropy.map(|e| e / 8.0 * r.body_size as Scalar))
            .sum::<Scalar>()
            / dt;
        let large_share = if n > 0.0 {
            http.iter()
                .filter(|r| r.body_size >= self.cfg.large_payload_bytes)
                .count() as Scalar
                / n
        } else {
            0.0
        };
        let inflight_now = http.iter().filter(|r| r.in_flight).count();
        let (live, expired) =
            self.backlog
                .update(step, inflight_now, self.cfg.inflight_expiry_steps);
        let backlog = (live + expired) as Scalar;
        let malicious_rate = deltas
            .as_ref()
            .map(|d| d.malicious_bytes as Scalar / dt)
            .unwrap_or(0.0);

        let s = &mut self.series;
        let b_n = s.bytes.smooth_norm(bytes_rate);
        let r_n = s.requests.smooth_norm(request_rate);
        let f_n = s.failures.smooth_norm(failure_rate);
        let x_n = s.cross_domain.smooth_norm(cross_ratio);
        let e_n = s.reputation.smooth_norm(reputation_risk);
        let t_n = s.trackers.smooth_norm(tracker_density);
        let m_n = s.malicious.smooth_norm(malicious_rate);
        let l_n = s.backlog.smooth_norm(backlog);
        let p_n = s.large_share.smooth_norm(large_share);
        let h_n = s.entropy_proxy.smooth_norm(entropy_proxy_rate);

        let c = &self.cfg;
        let s_net = (c.w_b * b_n
            + c.w_r * r_n
            + c.w_f * f_n
            + c.w_x * x_n
            + c.w_e * e_n
            + c.w_t * t_n
            + c.w_m * m_n)
            .min(1.0);
        let s_mem = (c.kappa_l * l_n + c.kappa_p * p_n).min(c.max_mem);
        let s_res = (c.kappa_h * h_n).min(c.max_res);

        (
            ChannelEvidence::present(ChannelId::H, step, [s_net, s_mem, s_res]),
            warnings,
        )
    }
}
