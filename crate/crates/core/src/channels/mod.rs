//! The three evidence extractors projecting raw telemetry onto the action
//! space `{H, M, R}` (network utilisation, memory pressure, resource
//! intensity), each emitting a per-step [`ChannelEvidence`] vector.
//!
//! All extractors share the streaming treatment: rates from finite
//! differences over the sampling interval, EWMA smoothing, and session-local
//! rolling-max normalisation into `[0, 1]`. Negative rates are floored at 0
//! before normalisation (growth is pressure; the SHR shrink term is the one
//! signal defined on the negative part).

mod h;
mod m;
mod r;

pub use h::{HChannel, HChannelConfig};
pub use m::{MChannel, MChannelConfig};
pub use r::{RChannel, RChannelConfig};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::Scalar;

/// Channel identity within the action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelId {
    H,
    M,
    R,
}

/// Growth-only finite difference `max(0, curr - prev) / elapsed`. Negative
/// deltas floor at 0: growth is pressure, and rolling-max normalisation of
/// signed values is ill-defined.
pub fn growth_rate(curr: f64, prev: f64, elapsed_s: f64) -> f64 {
    (curr - prev).max(0.0) / elapsed_s.max(1e-9)
}

/// The negative part of a finite difference, for shrink-style signals
/// (shared-memory drops).
pub fn shrink_rate(curr: f64, prev: f64, elapsed_s: f64) -> f64 {
    (-(curr - prev)).max(0.0) / elapsed_s.max(1e-9)
}

/// One channel's per-step projection onto `[net, mem, res]` plus its
/// presence mask. An absent/masked channel is all-zero by invariant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelEvidence {
    pub channel: ChannelId,
    pub step: u64,
    pub s: [Scalar; 3],
    pub mask: bool,
}

impl ChannelEvidence {
    pub fn masked(channel: ChannelId, step: u64) -> Self {
        Self {
            channel,
            step,
            s: [0.0; 3],
            mask: false,
        }
    }

    pub fn present(channel: ChannelId, step: u64, s: [Scalar; 3]) -> Self {
        Self {
            channel,
            step,
            s,
            mask: true,
        }
    }
}

/// Shared streaming-statistics knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    /// EWMA smoothing factor in (0, 1].
    pub alpha_ewma: Scalar,
    /// Rolling window length in steps for max-normalisation and z-scores.
    pub window: usize,
    /// Division guard.
    pub epsilon: Scalar,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            alpha_ewma: 0.3,
            window: 12,
            epsilon: 1e-9,
        }
    }
}

/// Fixed scoring tables for metadata-robust HTTP signals: common-method
/// frequencies and the expected request-header set.
#[derive(Debug, Clone)]
pub struct Baselines {
    method_freq: BTreeMap<String, Scalar>,
    min_freq: Scalar,
    expected_headers: BTreeSet<String>,
}

const DEFAULT_METHOD_FREQ: &str = include_str!("../../data/http_method_freq.tsv");
const DEFAULT_EXPECTED_HEADERS: &str = include_str!("../../data/expected_headers.tsv");

impl Default for Baselines {
    fn default() -> Self {
        Self::parse(DEFAULT_METHOD_FREQ, DEFAULT_EXPECTED_HEADERS)
    }
}

impl Baselines {
    pub fn parse(method_tsv: &str, headers_tsv: &str) -> Self {
        let mut method_freq = BTreeMap::new();
        for line in method_tsv.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            if let (Some(method), Some(freq)) = (parts.next(), parts.next()) {
                if let Ok(f) = freq.parse::<Scalar>() {
                    method_freq.insert(method.to_ascii_uppercase(), f);
                }
            }
        }
        let min_freq = method_freq
            .values()
            .copied()
            .fold(Scalar::INFINITY, Scalar::min)
            .max(1e-6);
        let expected_headers = headers_tsv
            .lines()
            .map(|l| l.trim())
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.to_ascii_lowercase())
            .collect();
        Self {
            method_freq,
            min_freq,
            expected_headers,
        }
    }

    pub fn from_files(
        method_path: impl AsRef<Path>,
        headers_path: impl AsRef<Path>,
    ) -> std::io::Result<Self> {
        let methods = std::fs::read_to_string(method_path)?;
        let headers = std::fs::read_to_string(headers_path)?;
        Ok(Self::parse(&methods, &headers))
    }

    /// Rarity in `[0, 1]`: log-frequency relative to the rarest tabled
    /// method; unknown methods score 1.
    pub fn method_rarity(&self, method: &str) -> Scalar {
        match self.method_freq.get(&method.to_ascii_uppercase()) {
            Some(&f) if f > 0.0 => {
                let r = (-f.ln()) / (-self.min_freq.ln()).max(1e-9);
                r.clamp(0.0, 1.0)
            }
            _ => 1.0,
        }
    }

    /// Fraction of expected headers missing from the request.
    pub fn header_atypicality(&self, present: &BTreeSet<String>) -> Scalar {
        if self.expected_headers.is_empty() {
            return 0.0;
        }
        let lower: BTreeSet<String> = present.iter().map(|h| h.to_ascii_lowercase()).collect();
        let missing = self
            .expected_headers
            .iter()
            .filter(|h| !lower.contains(*h))
            .count();
        missing as Scalar / self.expected_headers.len() as Scalar
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_evidence_is_zero() {
        let e = ChannelEvidence::masked(ChannelId::H, 3);
        assert!(!e.mask);
        assert_eq!(e.s, [0.0; 3]);
    }

    #[test]
    fn method_rarity_orders_sensibly() {
        let b = Baselines::default();
        let get = b.method_rarity("GET");
        let post = b.method_rarity("post");
        let trace = b.method_rarity("TRACE");
        let unknown = b.method_rarity("BREW");
        assert!(get < post && post < trace);
        assert_eq!(trace, 1.0);
        assert_eq!(unknown, 1.0);
    }

    #[test]
    fn header_atypicality_fraction() {
        let b = Baselines::default();
        let full: BTreeSet<String> = [
            "Host",
            "User-Agent",
            "Accept",
            "Accept-Encoding",
            "Accept-Language",
            "Connection",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        assert_eq!(b.header_atypicality(&full), 0.0);
        let bare: BTreeSet<String> = ["host".to_string()].into_iter().collect();
        assert!((b.header_atypicality(&bare) - 5.0 / 6.0).abs() < 1e-12);
    }
}
