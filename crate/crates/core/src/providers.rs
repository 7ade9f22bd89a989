//! Evidence/judge provider backends: remote HTTP, recorded replay, and the
//! built-in deterministic judge, behind a uniform timeout/retry/fallback
//! policy.
//!
//! Judge chains always terminate in the built-in judge, so a session never
//! loses its confidence signal; evidence chains end in a hard error because
//! the intent mapping cannot run without evidence. Every degraded call is
//! reported to the caller, never silently absorbed.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{builtin_judge, BehaviourVector, JudgeInput};
use crate::config::{ProviderConfig, ProviderMode};
use crate::evidence::{validate_evidence, EvidencePack, StateIndicators};
use crate::intent::IntentVector;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("timeout after {0} ms")]
    Timeout(u64),
    #[error("transport: {0}")]
    Transport(String),
    #[error("http status {0}")]
    Http(u16),
    #[error("schema: {0}")]
    Schema(String),
    #[error("no recorded response: {0}")]
    Missing(String),
    #[error("{0} does not serve this request kind")]
    Unsupported(&'static str),
    #[error("provider chain exhausted: {0}")]
    Exhausted(String),
}

/// Evidence request context (the judge path takes a full [`JudgeInput`]).
#[derive(Debug, Clone)]
pub struct EvidenceRequest {
    pub step: u64,
    pub screenshot: Option<PathBuf>,
    /// Up to N prior (intent, goal) pairs, most recent first.
    pub context: Vec<(IntentVector, String)>,
}

/// A judge answer plus passthrough metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgeAnswer {
    pub confidence: Scalar,
    pub latency_ms: u64,
    pub completion_tokens: Option<u64>,
    pub total_tokens: Option<u64>,
}

/// A validated evidence answer.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceAnswer {
    pub pack: EvidencePack,
    pub latency_ms: u64,
    pub completion_tokens: Option<u64>,
    pub total_tokens: Option<u64>,
}

pub trait Provider: Send + Sync {
    fn name(&self) -> &'static str;
    fn judge(&self, step: u64, input: &JudgeInput) -> Result<JudgeAnswer, ProviderError>;
    fn evidence(&self, request: &EvidenceRequest) -> Result<EvidenceAnswer, ProviderError>;
}

// ---------------------------------------------------------------------------
// Built-in
// ---------------------------------------------------------------------------

/// Deterministic three-layer judge; cannot serve evidence. It reasons over
/// state indicators and component classes, not pixels — screenshots only
/// flow to remote providers.
pub struct BuiltinProvider;

impl Provider for BuiltinProvider {
    fn name(&self) -> &'static str {
        "builtin"
    }

    fn judge(&self, _step: u64, input: &JudgeInput) -> Result<JudgeAnswer, ProviderError> {
        Ok(JudgeAnswer {
            confidence: builtin_judge(input),
            latency_ms: 0,
            completion_tokens: None,
            total_tokens: None,
        })
    }

    fn evidence(&self, _request: &EvidenceRequest) -> Result<EvidenceAnswer, ProviderError> {
        Err(ProviderError::Unsupported("builtin"))
    }
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

/// Reads recorded responses from `providers/<step>.json`, making the whole
/// system hermetic and deterministic.
pub struct ReplayProvider {
    dir: PathBuf,
}

impl ReplayProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn read_step(&self, step: u64) -> Result<serde_json::Value, ProviderError> {
        let plain = self.dir.join(format!("{step}.json"));
        let padded = self.dir.join(format!("{step:04}.json"));
        let path = if plain.exists() {
            plain
        } else if padded.exists() {
            padded
        } else {
            return Err(ProviderError::Missing(format!(
                "{}/{step}.json",
                self.dir.display()
            )));
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| ProviderError::Schema(e.to_string()))
    }
}

impl Provider for ReplayProvider {
    fn name(&self) -> &'static str {
        "replay"
    }

    fn judge(&self, step: u64, _input: &JudgeInput) -> Result<JudgeAnswer, ProviderError> {
        let value = self.read_step(step)?;
        let confidence = value
            .get("confidence")
            .and_then(|c| c.as_f64())
            .ok_or_else(|| ProviderError::Schema("missing numeric \"confidence\"".into()))?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(ProviderError::Schema(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(JudgeAnswer {
            confidence,
            latency_ms: 0,
            completion_tokens: value.get("completion_tokens").and_then(|v| v.as_u64()),
            total_tokens: value.get("total_tokens").and_then(|v| v.as_u64()),
        })
    }

    fn evidence(&self, request: &EvidenceRequest) -> Result<EvidenceAnswer, ProviderError> {
        let value = self.read_step(request.step)?;
        // either the pack itself, or wrapped under "evidence"
        let payload = value.get("evidence").unwrap_or(&value);
        let raw = serde_json::to_string(payload)
            .map_err(|e| ProviderError::Schema(e.to_string()))?;
        let validated =
            validate_evidence(&raw).map_err(|e| ProviderError::Schema(e.to_string()))?;
        Ok(EvidenceAnswer {
            pack: validated.pack,
            latency_ms: 0,
            completion_tokens: value.get("completion_tokens").and_then(|v| v.as_u64()),
            total_tokens: value.get("total_tokens").and_then(|v| v.as_u64()),
        })
    }
}

// ---------------------------------------------------------------------------
// Remote
// ---------------------------------------------------------------------------

/// Wire body for judge calls: `{screenshot_b64, i, b, history, indicators}`.
#[derive(Serialize)]
struct JudgeWire<'a> {
    kind: &'static str,
    screenshot_b64: Option<String>,
    i: &'a IntentVector,
    b: &'a BehaviourVector,
    history: &'a [(IntentVector, BehaviourVector)],
    indicators: &'a StateIndicators,
}

#[derive(Serialize)]
struct EvidenceWire<'a> {
    kind: &'static str,
    screenshot_b64: Option<String>,
    context: &'a [(IntentVector, String)],
}

#[derive(Deserialize)]
struct ConfidenceBody {
    confidence: Scalar,
    #[serde(default)]
    completion_tokens: Option<u64>,
    #[serde(default)]
    total_tokens: Option<u64>,
}

/// HTTP POST provider for real VLM/LLM backends.
pub struct RemoteProvider {
    url: String,
    token: Option<String>,
    timeout_ms: u64,
    client: reqwest::blocking::Client,
}

impl RemoteProvider {
    pub fn new(url: String, token: Option<String>, timeout_ms: u64) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(timeout_ms))
            .build()
            .expect("http client builds");
        Self {
            url,
            token,
            timeout_ms,
            client,
        }
    }

    fn post(&self, body: &impl Serialize) -> Result<(serde_json::Value, u64), ProviderError> {
        let started = Instant::now();
        let mut req = self.client.post(&self.url).json(body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout(self.timeout_ms)
            } else {
                ProviderError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ProviderError::Http(status.as_u16()));
        }
        let value: serde_json::Value = resp
            .json()
            .map_err(|e| ProviderError::Schema(e.to_string()))?;
        Ok((value, started.elapsed().as_millis() as u64))
    }
}

fn screenshot_b64(path: &Option<PathBuf>) -> Option<String> {
    let bytes = std::fs::read(path.as_ref()?).ok()?;
    Some(base64::engine::general_purpose::STANDARD.encode(bytes))
}

impl Provider for RemoteProvider {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn judge(&self, _step: u64, input: &JudgeInput) -> Result<JudgeAnswer, ProviderError> {
        let wire = JudgeWire {
            kind: "judge",
            screenshot_b64: screenshot_b64(&input.screenshot),
            i: &input.intent,
            b: &input.behaviour,
            history: &input.history,
            indicators: &input.indicators,
        };
        let (value, latency_ms) = self.post(&wire)?;
        let body: ConfidenceBody = serde_json::from_value(value)
            .map_err(|e| ProviderError::Schema(format!("confidence body: {e}")))?;
        if !(0.0..=1.0).contains(&body.confidence) {
            return Err(ProviderError::Schema(format!(
                "confidence {} outside [0, 1]",
                body.confidence
            )));
        }
        Ok(JudgeAnswer {
            confidence: body.confidence,
            latency_ms,
            completion_tokens: body.completion_tokens,
            total_tokens: body.total_tokens,
        })
    }

    fn evidence(&self, request: &EvidenceRequest) -> Result<EvidenceAnswer, ProviderError> {
        let wire = EvidenceWire {
            kind: "evidence",
            screenshot_b64: screenshot_b64(&request.screenshot),
            context: &request.context,
        };
        let (value, latency_ms) = self.post(&wire)?;
        let payload = value.get("evidence").unwrap_or(&value);
        let raw = serde_json::to_string(payload)
            .map_err(|e| ProviderError::Schema(e.to_string()))?;
        let validated =
            validate_evidence(&raw).map_err(|e| ProviderError::Schema(e.to_string()))?;
        Ok(EvidenceAnswer {
            pack: validated.pack,
            latency_ms,
            completion_tokens: value.get("completion_tokens").and_then(|v| v.as_u64()),
            total_tokens: value.get("total_tokens").and_then(|v| v.as_u64()),
        })
    }
}

// ---------------------------------------------------------------------------
// Chain
// ---------------------------------------------------------------------------

/// Retry/backoff policy applied per provider before falling through.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 2,
            backoff_ms: 500,
        }
    }
}

/// Judge outcome with degradation bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgeOutcome {
    pub confidence: Scalar,
    pub provider: &'static str,
    /// True when any configured provider failed before an answer arrived.
    pub degraded: bool,
    pub notes: Vec<String>,
    pub completion_tokens: Option<u64>,
    pub total_tokens: Option<u64>,
}

/// Ordered fallback chain. First success wins.
pub struct ProviderChain {
    providers: Vec<Box<dyn Provider>>,
    policy: RetryPolicy,
}

impl ProviderChain {
    pub fn new(providers: Vec<Box<dyn Provider>>, policy: RetryPolicy) -> Self {
        assert!(!providers.is_empty(), "chain needs at least one provider");
        Self { providers, policy }
    }

    /// Build the chain a config asks for; judge chains always end in the
    /// built-in provider.
    pub fn from_config(cfg: &ProviderConfig, session_root: &Path) -> Self {
        let mut providers: Vec<Box<dyn Provider>> = Vec::new();
        match cfg.mode {
            ProviderMode::Builtin => {}
            ProviderMode::Replay => {
                providers.push(Box::new(ReplayProvider::new(session_root.join("providers"))));
            }
            ProviderMode::Remote => {
                if let Some(url) = &cfg.url {
                    providers.push(Box::new(RemoteProvider::new(
                        url.clone(),
                        cfg.token.clone(),
                        cfg.timeout_ms,
                    )));
                } else {
                    log::warn!("provider mode is remote but no url configured; using builtin");
                }
            }
        }
        providers.push(Box::new(BuiltinProvider));
        Self::new(
            providers,
            RetryPolicy {
                retries: cfg.retries,
                backoff_ms: cfg.backoff_ms,
            },
        )
    }

    fn attempt<T>(
        &self,
        provider: &dyn Provider,
        mut call: impl FnMut(&dyn Provider) -> Result<T, ProviderError>,
        notes: &mut Vec<String>,
    ) -> Option<T> {
        let mut backoff = self.policy.backoff_ms;
        for attempt in 0..=self.policy.retries {
            match call(provider) {
                Ok(v) => return Some(v),
                Err(ProviderError::Missing(m)) => {
                    // nothing recorded: retrying cannot help
                    notes.push(format!("{}: {m}", provider.name()));
                    return None;
                }
                Err(ProviderError::Unsupported(_)) => return None,
                Err(e @ ProviderError::Schema(_)) => {
                    // deterministic response defect: fall through, no retry
                    notes.push(format!("{}: {e}", provider.name()));
                    return None;
                }
                Err(e) => {
                    notes.push(format!(
                        "{} attempt {}: {e}",
                        provider.name(),
                        attempt + 1
                    ));
                    if attempt < self.policy.retries {
                        std::thread::sleep(Duration::from_millis(backoff));
                        backoff = backoff.saturating_mul(2);
                    }
                }
            }
        }
        None
    }

    /// Judge one step; falls through the chain and never fails (the final
    /// built-in provider is total).
    pub fn judge(&self, step: u64, input: &JudgeInput) -> JudgeOutcome {
        let mut notes = Vec::new();
        for provider in &self.providers {
            if let Some(answer) =
                self.attempt(provider.as_ref(), |p| p.judge(step, input), &mut notes)
            {
                return JudgeOutcome {
                    confidence: answer.confidence,
                    provider: provider.name(),
                    degraded: !notes.is_empty(),
                    notes,
                    completion_tokens: answer.completion_tokens,
                    total_tokens: answer.total_tokens,
                };
            }
        }
        // unreachable with a builtin terminator, but stay total regardless
        JudgeOutcome {
            confidence: builtin_judge(input),
            provider: "builtin",
            degraded: true,
            notes,
            completion_tokens: None,
            total_tokens: None,
        }
    }

    /// Fetch evidence; exhaustion is a hard error since the intent mapping
    /// cannot proceed without evidence.
    pub fn evidence(
        &self,
        request: &EvidenceRequest,
    ) -> Result<(EvidenceAnswer, &'static str, Vec<String>), ProviderError> {
        let mut notes = Vec::new();
        for provider in &self.providers {
            if let Some(answer) =
                self.attempt(provider.as_ref(), |p| p.evidence(request), &mut notes)
            {
                return Ok((answer, provider.name(), notes));
            }
        }
        Err(ProviderError::Exhausted(notes.join("; ")))
    }

    /// True when any non-builtin provider is configured.
    pub fn has_external(&self) -> bool {
        self.providers.iter().any(|p| p.name() != "builtin")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};

    fn judge_input() -> JudgeInput {
        JudgeInput {
            screenshot: None,
            intent: IntentVector::new(0.5, 0.5, 0.5),
            behaviour: BehaviourVector {
                net: 0.9,
                mem: 0.1,
                res: 0.1,
                scored: true,
            },
            history: Vec::new(),
            indicators: StateIndicators::default(),
            component_kinds: Vec::new(),
        }
    }

    fn fast_policy() -> RetryPolicy {
        RetryPolicy {
            retries: 1,
            backoff_ms: 1,
        }
    }

    #[test]
    fn replay_returns_recorded_confidence() {
        let tmp = tempfile::tempdir().unwrap();
        std::fs::write(tmp.path().join("7.json"), r#"{"confidence":0.85}"#).unwrap();
        let chain = ProviderChain::new(
            vec![Box::new(ReplayProvider::new(tmp.path())), Box::new(BuiltinProvider)],
            fast_policy(),
        );
        let out = chain.judge(7, &judge_input());
        assert_eq!(out.confidence, 0.85);
        assert_eq!(out.provider, "replay");
        assert!(!out.degraded);
    }

    #[test]
    fn replay_miss_falls_back_to_builtin_flagged() {
        let tmp = tempfile::tempdir().unwrap();
        let chain = ProviderChain::new(
            vec![Box::new(ReplayProvider::new(tmp.path())), Box::new(BuiltinProvider)],
            fast_policy(),
        );
        let out = chain.judge(3, &judge_input());
        assert_eq!(out.provider, "builtin");
        assert!(out.degraded);
        assert_eq!(out.confidence, 0.5);
    }

    #[test]
    fn replay_evidence_validates_through_evidence_module() {
        let tmp = tempfile::tempdir().unwrap();
        std::fs::write(
            tmp.path().join("0.json"),
            r#"{"evidence":{"components":[],"state_indicators":{},"screen_summary":{"description":"d","primary_goal":"g","evidence_bullets":["a","b"]}}}"#,
        )
        .unwrap();
        std::fs::write(
            tmp.path().join("1.json"),
            r#"{"evidence":{"components":[{"kind":"Button","bbox":[0,0,1,1],"confidence":1.0}],"state_indicators":{},"screen_summary":{"description":"d","primary_goal":"g","evidence_bullets":["a","b"]}}}"#,
        )
        .unwrap();
        let provider = ReplayProvider::new(tmp.path());
        let ok = provider.evidence(&EvidenceRequest {
            step: 0,
            screenshot: None,
            context: Vec::new(),
        });
        assert!(ok.is_ok());
        let bad = provider.evidence(&EvidenceRequest {
            step: 1,
            screenshot: None,
            context: Vec::new(),
        });
        assert!(matches!(bad, Err(ProviderError::Schema(_))));
    }

    #[test]
    fn evidence_chain_exhaustion_is_hard_error() {
        let chain = ProviderChain::new(vec![Box::new(BuiltinProvider)], fast_policy());
        let err = chain.evidence(&EvidenceRequest {
            step: 0,
            screenshot: None,
            context: Vec::new(),
        });
        assert!(matches!(err, Err(ProviderError::Exhausted(_))));
    }

    /// Minimal single-request HTTP responder for remote-provider tests.
    fn serve_once(response_body: &'static str, status: &'static str) -> (String, std::thread::JoinHandle<()>) {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            if let Ok((mut stream, _)) = listener.accept() {
                let mut buf = [0u8; 65536];
                let _ = stream.read(&mut buf);
                let body = response_body;
                let resp = format!(
                    "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            }
        });
        (format!("http://{addr}/judge"), handle)
    }

    #[test]
    fn remote_judge_round_trip() {
        let (url, handle) = serve_once(r#"{"confidence":0.66,"completion_tokens":12,"total_tokens":480}"#, "200 OK");
        let provider = RemoteProvider::new(url, Some("tok".into()), 5_000);
        let answer = provider.judge(0, &judge_input()).unwrap();
        assert_eq!(answer.confidence, 0.66);
        assert_eq!(answer.completion_tokens, Some(12));
        assert_eq!(answer.total_tokens, Some(480));
        handle.join().unwrap();
    }

    #[test]
    fn remote_http_error_falls_back() {
        let (url, handle) = serve_once(r#"{"error":"nope"}"#, "500 Internal Server Error");
        let chain = ProviderChain::new(
            vec![
                Box::new(RemoteProvider::new(url, None, 5_000)),
                Box::new(BuiltinProvider),
            ],
            RetryPolicy {
                retries: 0,
                backoff_ms: 1,
            },
        );
        let out = chain.judge(0, &judge_input());
        assert_eq!(out.provider, "builtin");
        assert!(out.degraded);
        assert!(out.notes.iter().any(|n| n.contains("500")));
        handle.join().unwrap();
    }

    #[test]
    fn remote_schema_violation_reported_distinctly() {
        let (url, handle) = serve_once(r#"{"confidence":7.5}"#, "200 OK");
        let provider = RemoteProvider::new(url, None, 5_000);
        let err = provider.judge(0, &judge_input()).unwrap_err();
        assert!(matches!(err, ProviderError::Schema(_)));
        handle.join().unwrap();
    }
}
