//! Per-interval flow snapshots: cumulative bytes per flow key plus the
//! upstream classifier's malicious flag, and delta computation between
//! successive windows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TelemetryError;

/// Directional flow identity; `A -> B` and `B -> A` are distinct flows.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowKey {
    pub src_ip: String,
    pub dst_ip: String,
    pub src_port: u16,
    pub dst_port: u16,
}

impl std::fmt::Display for FlowKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}:{}->{}:{}",
            self.src_ip, self.src_port, self.dst_ip, self.dst_port
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub cumulative_bytes: u64,
    pub malicious: bool,
}

/// One snapshot of all flows observed up to the window end.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FlowWindow {
    pub flows: BTreeMap<FlowKey, FlowRecord>,
    pub start_ms: Option<u64>,
    pub end_ms: Option<u64>,
}

/// Per-step byte deltas derived from two successive windows.
#[derive(Debug, Clone, Default)]
pub struct FlowDeltas {
    pub per_flow: BTreeMap<FlowKey, u64>,
    pub total_bytes: u64,
    pub malicious_bytes: u64,
    pub warnings: Vec<String>,
}

impl FlowWindow {
    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    /// Per-flow cumulative-byte deltas against the previous window. A flow
    /// first seen in this window contributes its full cumulative count.
    /// Non-monotone counters are clamped to 0 with a warning.
    pub fn deltas(&self, prev: Option<&FlowWindow>) -> FlowDeltas {
        let mut out = FlowDeltas::default();
        for (key, rec) in &self.flows {
            let before = prev
                .and_then(|p| p.flows.get(key))
                .map(|r| r.cumulative_bytes)
                .unwrap_or(0);
            let delta = if rec.cumulative_bytes >= before {
                rec.cumulative_bytes - before
            } else {
                out.warnings.push(format!(
                    "flow {key}: cumulative bytes decreased ({} -> {}), delta clamped to 0",
                    before, rec.cumulative_bytes
                ));
                0
            };
            out.per_flow.insert(key.clone(), delta);
            out.total_bytes += delta;
            if rec.malicious {
                out.malicious_bytes += delta;
            }
        }
        out
    }
}

/// Parse a flow snapshot CSV with columns
/// `src_ip,dst_ip,src_port,dst_port,cumulative_bytes,malicious`.
pub fn parse_flow_snapshot(csv_text: &str) -> Result<FlowWindow, TelemetryError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| TelemetryError::Flows(e.to_string()))?
        .clone();
    let col = |name: &str| -> Result<usize, TelemetryError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TelemetryError::Flows(format!("missing column {name:?}")))
    };
    let (c_src, c_dst, c_sport, c_dport, c_bytes, c_mal) = (
        col("src_ip")?,
        col("dst_ip")?,
        col("src_port")?,
        col("dst_port")?,
        col("cumulative_bytes")?,
        col("malicious")?,
    );

    let mut window = FlowWindow::default();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| TelemetryError::Flows(e.to_string()))?;
        let field = |idx: usize| -> Result<&str, TelemetryError> {
            row.get(idx)
                .ok_or_else(|| TelemetryError::Flows(format!("row {i}: short record")))
        };
        let parse_port = |s: &str| -> Result<u16, TelemetryError> {
            s.parse()
                .map_err(|_| TelemetryError::Flows(format!("row {i}: bad port {s:?}")))
        };
        let key = FlowKey {
            src_ip: field(c_src)?.to_string(),
            dst_ip: field(c_dst)?.to_string(),
            src_port: parse_port(field(c_sport)?)?,
            dst_port: parse_port(field(c_dport)?)?,
        };
        let cumulative_bytes: u64 = field(c_bytes)?
            .parse()
            .map_err(|_| TelemetryError::Flows(format!("row {i}: bad cumulative_bytes")))?;
        let malicious = matches!(field(c_mal)?, "1" | "true" | "TRUE" | "True");
        window
            .flows
            .insert(key, FlowRecord {
                cumulative_bytes,
                malicious,
            });
    }
    Ok(window)
}
