//! Raw telemetry parsing and session-bundle assembly.
//!
//! Bundle layout on disk:
//!
//! ```text
//! session/
//!   meta.json                  {"format_version":1,"package":"...","cores":4,"delta_t_s":5.0}
//!   steps/
//!     0000/
//!       evidence.json          required; steps without evidence are rejected
//!       screenshot.png         optional opaque reference
//!       meminfo.txt            optional
//!       top.txt                optional
//!       flows.csv              optional
//!       http.jsonl             optional
//!     0001/ ...
//!   providers/                 optional recorded provider responses
//! ```
//!
//! Telemetry pieces may be individually absent; channel masking handles it.
//! Per-step parse failures degrade to channel-level skips with diagnostics,
//! never a session abort.

mod flows;
mod http;
mod meminfo;
mod proc;

pub use flows::{parse_flow_snapshot, FlowDeltas, FlowKey, FlowRecord, FlowWindow};
pub use http::{parse_http_jsonl, HttpRecord};
pub use meminfo::{parse_meminfo, MeminfoSnapshot};
pub use proc::{parse_proc, ProcSnapshot};

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::{self, EvidencePack, ValidationErrors};
use crate::Scalar;

/// A parsed value plus non-fatal diagnostics.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub value: T,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("meminfo dump missing required field(s): {fields}")]
    MeminfoMissing { fields: String },
    #[error("top dump: no process row found")]
    NoProcessRow,
    #[error("top dump: malformed {field} value {value:?}")]
    ProcField {
        field: &'static str,
        value: String,
    },
    #[error("flow snapshot: {0}")]
    Flows(String),
    #[error("http.jsonl line {line}: {message}")]
    Http { line: usize, message: String },
    #[error("session {path}: no steps found")]
    EmptySession { path: String },
    #[error("step {step}: evidence.json missing (behaviour-only steps are not scoreable)")]
    MissingEvidence { step: u64 },
    #[error("step {step}: invalid evidence: {source}")]
    InvalidEvidence {
        step: u64,
        #[source]
        source: ValidationErrors,
    },
    #[error("step {step}: timestamp {ts} not strictly greater than previous {prev}")]
    NonMonotonicTimestamps { step: u64, ts: u64, prev: u64 },
    #[error("duplicate step index {index}")]
    DuplicateStep { index: u64 },
    #[error("meta.json: {0}")]
    Meta(String),
}

/// Session-level metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionMeta {
    pub format_version: u32,
    pub package: String,
    pub cores: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_t_s: Option<f64>,
}

impl Default for SessionMeta {
    fn default() -> Self {
        Self {
            format_version: 1,
            package: String::new(),
            cores: 1,
            delta_t_s: None,
        }
    }
}

/// One time-synchronised step: evidence plus whatever telemetry the step
/// carries.
#[derive(Debug, Clone)]
pub struct SessionStep {
    pub index: u64,
    pub timestamp_ms: u64,
    pub evidence: EvidencePack,
    pub screenshot: Option<PathBuf>,
    pub flows: Option<FlowWindow>,
    pub http: Vec<HttpRecord>,
    pub meminfo: Option<MeminfoSnapshot>,
    pub proc: Option<ProcSnapshot>,
    pub diagnostics: Vec<String>,
}

/// A loaded, index-sorted session.
#[derive(Debug, Clone)]
pub struct SessionBundle {
    pub meta: SessionMeta,
    pub steps: Vec<SessionStep>,
    /// Sampling interval in seconds.
    pub delta_t_s: Scalar,
    pub root: PathBuf,
}

/// Loader knobs resolved from config.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delta_t_override: Option<f64>,
    pub tracker_list: Option<BTreeSet<String>>,
    pub heap_slack_kb: u64,
    /// Evidence items below this confidence are retained but flagged.
    pub low_confidence: Scalar,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delta_t_override: None,
            tracker_list: None,
            heap_slack_kb: 4096,
            low_confidence: 0.2,
        }
    }
}

fn read(path: &Path) -> Result<String, TelemetryError> {
    std::fs::read_to_string(path).map_err(|source| TelemetryError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Newline-delimited registrable domains; `#` starts a comment.
pub fn load_tracker_list(path: impl AsRef<Path>) -> Result<BTreeSet<String>, TelemetryError> {
    let text = read(path.as_ref())?;
    Ok(text
        .lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_ascii_lowercase())
        .collect())
}

/// Load a session directory into an index-sorted bundle. Deterministic and
/// independent of directory listing order.
pub fn load_session(
    dir: impl AsRef<Path>,
    opts: &LoadOptions,
) -> Result<SessionBundle, TelemetryError> {
    let dir = dir.as_ref();

    let meta: SessionMeta = match std::fs::read_to_string(dir.join("meta.json")) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| TelemetryError::Meta(e.to_string()))?,
        Err(_) => SessionMeta::default(),
    };
    if meta.format_version != 1 {
        return Err(TelemetryError::Meta(format!(
            "unsupported format_version {}",
            meta.format_version
        )));
    }

    let steps_dir = dir.join("steps");
    let mut indexed: Vec<(u64, PathBuf)> = Vec::new();
    if let Ok(entries) = std::fs::read_dir(&steps_dir) {
        for entry in entries.flatten() {
            let path = entry.path();
            if !path.is_dir() {
                continue;
            }
            let name = entry.file_name().to_string_lossy().to_string();
            if let Ok(index) = name.parse::<u64>() {
                indexed.push((index, path));
            }
        }
    }
    indexed.sort_by_key(|(i, _)| *i);
    for pair in indexed.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(TelemetryError::DuplicateStep { index: pair[0].0 });
        }
    }
    if indexed.is_empty() {
        return Err(TelemetryError::EmptySession {
            path: dir.display().to_string(),
        });
    }

    let mut steps = Vec::with_capacity(indexed.len());
    for (index, step_dir) in &indexed {
        steps.push(load_step(*index, step_dir, &meta, opts)?);
    }

    // Timestamps come from evidence; if the whole session lacks them,
    // synthesise a uniform grid so streaming rates stay well-defined.
    let all_zero = steps.len() > 1 && steps.iter().all(|s| s.timestamp_ms == 0);
    if all_zero {
        let dt_ms = (meta.delta_t_s.unwrap_or(5.0) * 1000.0) as u64;
        for (i, step) in steps.iter_mut().enumerate() {
            step.timestamp_ms = i as u64 * dt_ms;
            step.diagnostics
                .push("timestamp synthesised from step index".to_string());
        }
    }
    for pair in steps.windows(2) {
        if pair[1].timestamp_ms <= pair[0].timestamp_ms {
            return Err(TelemetryError::NonMonotonicTimestamps {
                step: pair[1].index,
                ts: pair[1].timestamp_ms,
                prev: pair[0].timestamp_ms,
            });
        }
    }

    let delta_t_s = opts
        .delta_t_override
        .or(meta.delta_t_s)
        .unwrap_or_else(|| median_gap_seconds(&steps).unwrap_or(5.0));

    Ok(SessionBundle {
        meta,
        steps,
        delta_t_s,
        root: dir.to_path_buf(),
    })
}

fn median_gap_seconds(steps: &[SessionStep]) -> Option<f64> {
    if steps.len() < 2 {
        return None;
    }
    let mut gaps: Vec<u64> = steps
        .windows(2)
        .map(|p| p[1].timestamp_ms - p[0].timestamp_ms)
        .collect();
    gaps.sort_unstable();
    Some(gaps[gaps.len() / 2] as f64 / 1000.0)
}

fn load_step(
    index: u64,
    step_dir: &Path,
    meta: &SessionMeta,
    opts: &LoadOptions,
) -> Result<SessionStep, TelemetryError> {
    let mut diagnostics = Vec::new();

    let evidence_path = step_dir.join("evidence.json");
    if !evidence_path.exists() {
        return Err(TelemetryError::MissingEvidence { step: index });
    }
    let raw = read(&evidence_path)?;
    let validation_opts = evidence::ValidationOptions {
        low_confidence: opts.low_confidence,
    };
    let validated = evidence::validate_evidence_with(&raw, &validation_opts).map_err(|errors| {
        TelemetryError::InvalidEvidence {
            step: index,
            source: errors,
        }
    })?;
    for w in &validated.warnings {
        diagnostics.push(format!("evidence: {w}"));
    }
    let evidence = validated.pack;

    let screenshot = {
        let p = step_dir.join("screenshot.png");
        p.exists().then_some(p)
    };

    let meminfo = match std::fs::read_to_string(step_dir.join("meminfo.txt")) {
        Ok(text) => match parse_meminfo(&text) {
            Ok(parsed) => {
                diagnostics.extend(parsed.diagnostics);
                if let Some(w) = parsed.value.check_heap_slack(opts.heap_slack_kb) {
                    diagnostics.push(w);
                }
                Some(parsed.value)
            }
            Err(e) => {
                diagnostics.push(format!("meminfo unusable, M channel skipped: {e}"));
                None
            }
        },
        Err(_) => None,
    };

    let proc = match std::fs::read_to_string(step_dir.join("top.txt")) {
        Ok(text) => match parse_proc(&text, meta.cores) {
            Ok(snap) => Some(snap),
            Err(e) => {
                diagnostics.push(format!("top unusable, R channel masked: {e}"));
                None
            }
        },
        Err(_) => None,
    };

    let flows = match std::fs::read_to_string(step_dir.join("flows.csv")) {
        Ok(text) => match parse_flow_snapshot(&text) {
            Ok(w) => Some(w),
            Err(e) => {
                diagnostics.push(format!("flows unusable: {e}"));
                None
            }
        },
        Err(_) => None,
    };

    let http = match std::fs::read_to_string(step_dir.join("http.jsonl")) {
        Ok(text) => match parse_http_jsonl(&text) {
            Ok(parsed) => {
                diagnostics.extend(parsed.diagnostics);
                let mut records = parsed.value;
                if let Some(trackers) = &opts.tracker_list {
                    for rec in &mut records {
                        if trackers.contains(&rec.registrable_origin.to_ascii_lowercase()) {
                            rec.tracker_match = true;
                        }
                    }
                }
                records
            }
            Err(e) => {
                diagnostics.push(format!("http records unusable: {e}"));
                Vec::new()
            }
        },
        Err(_) => Vec::new(),
    };

    Ok(SessionStep {
        index,
        timestamp_ms: evidence.timestamp,
        evidence,
        screenshot,
        flows,
        http,
        meminfo,
        proc,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_evidence(dir: &Path, step: u64, ts: u64) {
        let json = format!(
            r#"{{"components":[],"state_indicators":{{}},"screen_summary":{{"description":"d","primary_goal":"g","evidence_bullets":["a","b"]}},"step":{step},"timestamp":{ts}}}"#
        );
        fs::write(dir.join("evidence.json"), json).unwrap();
    }

    fn make_session(root: &Path, n: usize, dt_ms: u64) {
        fs::write(
            root.join("meta.json"),
            r#"{"format_version":1,"package":"com.example.app","cores":4}"#,
        )
        .unwrap();
        for i in 0..n {
            let step = root.join("steps").join(format!("{i:04}"));
            fs::create_dir_all(&step).unwrap();
            write_evidence(&step, i as u64, i as u64 * dt_ms);
        }
    }

    #[test]
    fn three_step_fixture_infers_delta_t() {
        let tmp = tempfile::tempdir().unwrap();
        make_session(tmp.path(), 3, 5000);
        let bundle = load_session(tmp.path(), &LoadOptions::default()).unwrap();
        assert_eq!(bundle.steps.len(), 3);
        assert_eq!(bundle.delta_t_s, 5.0);
        assert_eq!(bundle.meta.cores, 4);
    }

    #[test]
    fn empty_directory_is_load_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_session(tmp.path(), &LoadOptions::default()),
            Err(TelemetryError::EmptySession { .. })
        ));
    }

    #[test]
    fn step_missing_evidence_is_load_error() {
        let tmp = tempfile::tempdir().unwrap();
        make_session(tmp.path(), 2, 5000);
        let bad = tmp.path().join("steps").join("0002");
        fs::create_dir_all(&bad).unwrap();
        assert!(matches!(
            load_session(tmp.path(), &LoadOptions::default()),
            Err(TelemetryError::MissingEvidence { step: 2 })
        ));
    }

    #[test]
    fn step_without_meminfo_loads_with_channel_skip() {
        let tmp = tempfile::tempdir().unwrap();
        make_session(tmp.path(), 2, 5000);
        // valid meminfo only on step 0
        fs::write(
            tmp.path().join("steps/0000/meminfo.txt"),
            "TOTAL PSS: 1\nHeap Size: 2\nHeap Alloc: 1\nViews: 1\nViewRootImpl: 1\nLocal Binders: 1\nProxy Binders: 1\nParcel count: 1\nWebViews: 0\nTOTAL SWAP PSS: 0\n",
        )
        .unwrap();
        let bundle = load_session(tmp.path(), &LoadOptions::default()).unwrap();
        assert!(bundle.steps[0].meminfo.is_some());
        assert!(bundle.steps[1].meminfo.is_none());
    }

    #[test]
    fn corrupt_meminfo_degrades_with_diagnostic() {
        let tmp = tempfile::tempdir().unwrap();
        make_session(tmp.path(), 1, 5000);
        fs::write(tmp.path().join("steps/0000/meminfo.txt"), "garbage").unwrap();
        let bundle = load_session(tmp.path(), &LoadOptions::default()).unwrap();
        assert!(bundle.steps[0].meminfo.is_none());
        assert!(bundle.steps[0]
            .diagnostics
            .iter()
            .any(|d| d.contains("M channel skipped")));
    }

    #[test]
    fn non_monotone_timestamps_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        make_session(tmp.path(), 3, 5000);
        write_evidence(&tmp.path().join("steps/0002"), 2, 3000); // goes backwards
        assert!(matches!(
            load_session(tmp.path(), &LoadOptions::default()),
            Err(TelemetryError::NonMonotonicTimestamps { .. })
        ));
    }

    #[test]
    fn tracker_list_marks_matching_origins() {
        let tmp = tempfile::tempdir().unwrap();
        make_session(tmp.path(), 1, 5000);
        fs::write(
            tmp.path().join("steps/0000/http.jsonl"),
            r#"{"method":"GET","registrable_origin":"ads.example"}"#,
        )
        .unwrap();
        let mut opts = LoadOptions::default();
        opts.tracker_list = Some(["ads.example".to_string()].into_iter().collect());
        let bundle = load_session(tmp.path(), &opts).unwrap();
        assert!(bundle.steps[0].http[0].tracker_match);
    }

    #[test]
    fn loading_is_idempotent() {
        let tmp = tempfile::tempdir().unwrap();
        make_session(tmp.path(), 4, 5000);
        let once = load_session(tmp.path(), &LoadOptions::default()).unwrap();
        let twice = load_session(tmp.path(), &LoadOptions::default()).unwrap();
        let view = |b: &SessionBundle| -> Vec<(u64, u64)> {
            b.steps.iter().map(|s| (s.index, s.timestamp_ms)).collect()
        };
        assert_eq!(view(&once), view(&twice));
        assert_eq!(once.delta_t_s, twice.delta_t_s);
    }

    #[test]
    fn zero_timestamps_synthesised_from_index() {
        let tmp = tempfile::tempdir().unwrap();
        make_session(tmp.path(), 3, 0); // all timestamps zero
        let bundle = load_session(tmp.path(), &LoadOptions::default()).unwrap();
        assert_eq!(bundle.steps[2].timestamp_ms, 10000);
    }
}
