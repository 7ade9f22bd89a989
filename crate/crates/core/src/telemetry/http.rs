//! Decoded HTTP(S) record metadata, one JSON object per `http.jsonl` line.
//!
//! Records arrive pre-featurised: `reputation` is the endpoint's
//! trustworthiness in `[0, 1]` (1.0 = fully trusted) from upstream feeds,
//! `tracker_match` comes from curated lists, and `body_entropy` (bits/byte,
//! `[0, 8]`) is present only when the payload was decodable.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Parsed, TelemetryError};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpRecord {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(default)]
    pub headers_present: BTreeSet<String>,
    #[serde(default)]
    pub body_size: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_entropy: Option<Scalar>,
    #[serde(default)]
    pub registrable_origin: String,
    #[serde(default)]
    pub is_third_party: bool,
    #[serde(default)]
    pub tracker_match: bool,
    #[serde(default = "default_reputation")]
    pub reputation: Scalar,
    #[serde(default)]
    pub in_flight: bool,
    #[serde(default)]
    pub timestamp: u64,
}

fn default_reputation() -> Scalar {
    1.0
}

impl HttpRecord {
    /// Failed or unanswered: error status class, or no response recorded and
    /// not still in flight.
    pub fn is_failure(&self) -> bool {
        match self.status {
            Some(s) => s >= 400,
            None => !self.in_flight,
        }
    }
}

/// Parse one-record-per-line JSON. Out-of-range entropy/reputation values
/// are clamped with a diagnostic rather than rejected.
pub fn parse_http_jsonl(text: &str) -> Result<Parsed<Vec<HttpRecord>>, TelemetryError> {
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut rec: HttpRecord =
            serde_json::from_str(line).map_err(|e| TelemetryError::Http {
                line: lineno + 1,
                message: e.to_string(),
            })?;
        if let Some(e) = rec.body_entropy {
            if !(0.0..=8.0).contains(&e) {
                diagnostics.push(format!(
                    "http line {}: body_entropy {} clamped into [0, 8]",
                    lineno + 1,
                    e
                ));
                rec.body_entropy = Some(e.clamp(0.0, 8.0));
            }
        }
        if !(0.0..=1.0).contains(&rec.reputation) {
            diagnostics.push(format!(
                "http line {}: reputation {} clamped into [0, 1]",
                lineno + 1,
                rec.reputation
            ));
            rec.reputation = rec.reputation.clamp(0.0, 1.0);
        }
        records.push(rec);
    }
    Ok(Parsed {
        value: records,
        diagnostics,
    })
}
