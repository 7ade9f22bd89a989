//! Engine configuration: shipped defaults, single-file TOML overrides, and
//! environment handling.
//!
//! Resolution order is fixed: defaults <- config file <- environment <-
//! CLI flags (flags are applied by the caller). The documented key namespace:
//!
//! ```toml
//! [prior.<class>]            # w, e = [net, mem, res]     (per-class merge)
//! [constants.<axis>]         # kappa, tau                 (axis atomic)
//! [state_params.add.<axis>]  # <indicator> = alpha
//! [state_params.mul.<axis>]  # <indicator> = beta
//! [state_params.keywords]    # <keyword> = weight
//! [channels]                 # alpha_ewma, window, epsilon
//! [channels.h]  [channels.m]  [channels.r]
//! [fusion]                   # alpha_h/m/r, gamma, theta, b_hi, c_lo
//! [validation]               # low_confidence
//! [pipeline]                 # history
//! [provider]                 # mode, url, token, timeout_ms, retries, backoff_ms
//! [telemetry]                # tracker_list, heap_slack_kb, delta_t_s
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::FusionConfig;
use crate::channels::{HChannelConfig, MChannelConfig, RChannelConfig, StreamConfig};
use crate::evidence::ComponentKind;
use crate::intent::{
    AxisConstants, IndicatorKind, PriorEntry, StateParams, UIImpactPrior,
};
use crate::Scalar;

pub const ENV_PROVIDER_URL: &str = "UIXPOSE_PROVIDER_URL";
pub const ENV_PROVIDER_TOKEN: &str = "UIXPOSE_PROVIDER_TOKEN";
pub const ENV_CONFIG: &str = "UIXPOSE_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Toml(String),
    #[error("config key state_params.{table}.{axis}: unknown axis (expected net/mem/res)")]
    UnknownAxis { table: &'static str, axis: String },
    #[error("config key state_params.{table}.{axis}.{indicator}: unknown indicator")]
    UnknownIndicator {
        table: &'static str,
        axis: String,
        indicator: String,
    },
    #[error("config key {key}: {message}")]
    BadValue { key: String, message: String },
}

/// Streaming knobs plus the three channel configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelsConfig {
    /// EWMA smoothing factor in (0, 1].
    pub alpha_ewma: Scalar,
    /// Rolling window length in steps.
    pub window: usize,
    pub epsilon: Scalar,
    pub h: HChannelConfig,
    pub m: MChannelConfig,
    pub r: RChannelConfig,
}

impl ChannelsConfig {
    pub fn stream(&self) -> StreamConfig {
        StreamConfig {
            alpha_ewma: self.alpha_ewma,
            window: self.window,
            epsilon: self.epsilon,
        }
    }
}

impl Default for ChannelsConfig {
    fn default() -> Self {
        let stream = StreamConfig::default();
        Self {
            alpha_ewma: stream.alpha_ewma,
            window: stream.window,
            epsilon: stream.epsilon,
            h: HChannelConfig::default(),
            m: MChannelConfig::default(),
            r: RChannelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    /// Items below this confidence are retained but flagged.
    pub low_confidence: Scalar,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self { low_confidence: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Intent-context and judge history depth N.
    pub history: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { history: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Builtin,
    Remote,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    pub url: Option<String>,
    pub token: Option<String>,
    pub timeout_ms: u64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            mode: ProviderMode::Builtin,
            url: None,
            token: None,
            timeout_ms: 30_000,
            retries: 2,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TelemetryConfig {
    /// Newline-delimited registrable-domain list for tracker matching.
    pub tracker_list: Option<PathBuf>,
    pub heap_slack_kb: u64,
    /// Overrides the bundle's sampling interval when set.
    pub delta_t_s: Option<f64>,
    /// Override baseline tables for HTTP metadata scoring.
    pub method_freq: Option<PathBuf>,
    pub expected_headers: Option<PathBuf>,
}

impl Default for TelemetryConfig {
    fn default() -> Self {
        Self {
            tracker_list: None,
            heap_slack_kb: 4096,
            delta_t_s: None,
            method_freq: None,
            expected_headers: None,
        }
    }
}

/// Fully resolved engine configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EngineConfig {
    pub prior: UIImpactPrior,
    pub constants: AxisConstants,
    pub state_params: StateParams,
    pub channels: ChannelsConfig,
    pub fusion: FusionConfig,
    pub validation: ValidationConfig,
    pub pipeline: PipelineConfig,
    pub provider: ProviderConfig,
    pub telemetry: TelemetryConfig,
}


/// File layer: every section optional, merged over the defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawConfig {
    format_version: Option<u32>,
    prior: Option<BTreeMap<ComponentKind, PriorEntry>>,
    constants: Option<AxisConstants>,
    state_params: Option<RawStateParams>,
    channels: Option<ChannelsConfig>,
    fusion: Option<FusionConfig>,
    validation: Option<ValidationConfig>,
    pipeline: Option<PipelineConfig>,
    provider: Option<ProviderConfig>,
    telemetry: Option<TelemetryConfig>,
}

/// `state_params` on disk is axis-major string maps; converted and merged
/// into the typed indicator-major representation.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawStateParams {
    add: BTreeMap<String, BTreeMap<String, Scalar>>,
    mul: BTreeMap<String, BTreeMap<String, Scalar>>,
    keywords: BTreeMap<String, Scalar>,
}

fn axis_index(axis: &str, table: &'static str) -> Result<usize, ConfigError> {
    match axis {
        "net" => Ok(0),
        "mem" => Ok(1),
        "res" => Ok(2),
        other => Err(ConfigError::UnknownAxis {
            table,
            axis: other.to_string(),
        }),
    }
}

fn merge_state_params(base: &mut StateParams, raw: RawStateParams) -> Result<(), ConfigError> {
    for (table_name, source, dest) in [
        ("add", &raw.add, &mut base.add),
        ("mul", &raw.mul, &mut base.mul),
    ] {
        for (axis, entries) in source {
            let a = axis_index(axis, table_name)?;
            for (name, value) in entries {
                let kind =
                    IndicatorKind::parse(name).ok_or_else(|| ConfigError::UnknownIndicator {
                        table: table_name,
                        axis: axis.clone(),
                        indicator: name.clone(),
                    })?;
                dest.entry(kind).or_insert([0.0; 3])[a] = *value;
            }
        }
    }
    for (kw, weight) in raw.keywords {
        base.keywords.insert(kw, weight);
    }
    base.validate().map_err(|e| ConfigError::BadValue {
        key: "state_params".into(),
        message: e.to_string(),
    })
}

fn validate_channels(c: &ChannelsConfig) -> Result<(), ConfigError> {
    let bad = |key: &str, message: &str| {
        Err(ConfigError::BadValue {
            key: key.to_string(),
            message: message.to_string(),
        })
    };
    if !(c.alpha_ewma > 0.0 && c.alpha_ewma <= 1.0) {
        return bad("channels.alpha_ewma", "must be in (0, 1]");
    }
    if c.window < 1 {
        return bad("channels.window", "must be >= 1");
    }
    let h_weights = [
        c.h.w_b, c.h.w_r, c.h.w_f, c.h.w_x, c.h.w_e, c.h.w_t, c.h.w_m, c.h.kappa_l, c.h.kappa_p,
        c.h.kappa_h,
    ];
    if h_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return bad("channels.h", "weights and spillovers must be finite and >= 0");
    }
    if !(c.h.max_mem > 0.0 && c.h.max_mem <= 1.0 && c.h.max_res > 0.0 && c.h.max_res <= 1.0) {
        return bad("channels.h.max_mem/max_res", "caps must be in (0, 1]");
    }
    for (key, mixture) in [("channels.m.alpha", c.m.alpha), ("channels.r.alpha", c.r.alpha)] {
        if mixture.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return bad(key, "mixture weights must be finite and >= 0");
        }
    }
    for (key, tau) in [("channels.m.tau_mem", c.m.tau_mem), ("channels.r.tau_mem", c.r.tau_mem)] {
        if !(0.0..=1.0).contains(&tau) {
            return bad(key, "gate threshold must be in [0, 1]");
        }
    }
    if c.m.gate_window < 1 || c.r.gate_window < 1 {
        return bad("channels.m/r.gate_window", "must be >= 1");
    }
    Ok(())
}

impl EngineConfig {
    /// Parse a TOML document and merge it over the defaults.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Toml(e.to_string()))?;
        if let Some(v) = raw.format_version {
            if v != 1 {
                return Err(ConfigError::BadValue {
                    key: "format_version".into(),
                    message: format!("unsupported version {v}"),
                });
            }
        }
        let mut cfg = EngineConfig::default();
        if let Some(prior) = raw.prior {
            for (kind, entry) in prior {
                if entry.w < 0.0 || entry.e.iter().any(|e| !(0.0..=1.0).contains(e)) {
                    return Err(ConfigError::BadValue {
                        key: format!("prior.{kind}"),
                        message: "w must be >= 0 and effects in [0, 1]".into(),
                    });
                }
                cfg.prior.entries.insert(kind, entry);
            }
        }
        if let Some(c) = raw.constants {
            for (axis, ac) in [("net", c.net), ("mem", c.mem), ("res", c.res)] {
                if ac.kappa <= 0.0 || ac.tau <= 0.0 {
                    return Err(ConfigError::BadValue {
                        key: format!("constants.{axis}"),
                        message: "kappa and tau must be positive".into(),
                    });
                }
            }
            cfg.constants = c;
        }
        if let Some(sp) = raw.state_params {
            merge_state_params(&mut cfg.state_params, sp)?;
        }
        if let Some(channels) = raw.channels {
            validate_channels(&channels)?;
            cfg.channels = channels;
        }
        if let Some(fusion) = raw.fusion {
            if fusion.alpha_h + fusion.alpha_m + fusion.alpha_r <= 0.0 {
                return Err(ConfigError::BadValue {
                    key: "fusion.alpha_h/alpha_m/alpha_r".into(),
                    message: "fusion weights must sum to a positive value".into(),
                });
            }
            if fusion.gamma <= 0.0 {
                return Err(ConfigError::BadValue {
                    key: "fusion.gamma".into(),
                    message: "must be positive".into(),
                });
            }
            if !(0.0..=1.0).contains(&fusion.theta) {
                return Err(ConfigError::BadValue {
                    key: "fusion.theta".into(),
                    message: "must be in [0, 1]".into(),
                });
            }
            cfg.fusion = fusion;
        }
        if let Some(v) = raw.validation {
            cfg.validation = v;
        }
        if let Some(p) = raw.pipeline {
            cfg.pipeline = p;
        }
        if let Some(p) = raw.provider {
            cfg.provider = p;
        }
        if let Some(t) = raw.telemetry {
            cfg.telemetry = t;
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Apply `UIXPOSE_PROVIDER_URL` / `UIXPOSE_PROVIDER_TOKEN`.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var(ENV_PROVIDER_URL) {
            if !url.is_empty() {
                self.provider.url = Some(url);
            }
        }
        if let Ok(token) = std::env::var(ENV_PROVIDER_TOKEN) {
            if !token.is_empty() {
                self.provider.token = Some(token);
            }
        }
    }

    /// Serialisable snapshot for reports, with the provider token redacted.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("config serialises");
        if let Some(provider) = value.get_mut("provider") {
            if provider.get("token").map(|t| !t.is_null()).unwrap_or(false) {
                provider["token"] = serde_json::Value::String("<redacted>".into());
            }
        }
        value
    }
}
