//! The per-screen EVIDENCE contract: component detections over a fixed
//! 20-class ontology, state indicators, and a screen summary.
//!
//! Wire schema (JSON):
//!
//! ```json
//! {
//!   "components": [
//!     {"kind": "Map", "bbox": [0, 0, 1080, 600], "visible_text": null, "confidence": 0.9}
//!   ],
//!   "state_indicators": {
//!     "loading_spinner_visible": false,
//!     "error_banner_visible": false,
//!     "empty_state_visible": false,
//!     "media_state": "inactive",
//!     "progress_determinate_ratio": 0.4,
//!     "indicator_texts": ["Uploading 3 files"],
//!     "confidences": {"loading_spinner_visible": 0.9},
//!     "evidence": {"loading_spinner_visible": {"bbox": [10, 10, 64, 64], "text": "Loading"}}
//!   },
//!   "screen_summary": {
//!     "description": "Map view",
//!     "primary_goal": "Browse the map",
//!     "evidence_bullets": ["Map [0,0,1080,600]", "Toolbar 'Search'"],
//!     "ui_class": "Map / browse"
//!   },
//!   "step": 3,
//!   "timestamp": 15000
//! }
//! ```
//!
//! Validation is total: any input yields either a typed [`EvidencePack`] plus
//! warnings, or the complete list of violations. Unknown keys and noisy
//! numerics (confidence, progress ratio) are tolerated with warnings; unknown
//! component classes and malformed geometry are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::intent::IntentVector;
use crate::num::clip;
use crate::Scalar;

/// The closed component ontology. No module accepts a class outside this set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ComponentKind {
    BackgroundImage,
    #[serde(rename = "Bottom_Navigation")]
    BottomNavigation,
    Card,
    #[serde(rename = "CheckBox(box)")]
    CheckBox,
    CheckedTextView,
    Drawer,
    EditText,
    Icon,
    Image,
    Map,
    Modal,
    #[serde(rename = "Multi_Tab")]
    MultiTab,
    PageIndicator,
    Remember,
    Spinner,
    Switch,
    Text,
    TextButton,
    Toolbar,
    UpperTaskBar,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 20] = [
        ComponentKind::BackgroundImage,
        ComponentKind::BottomNavigation,
        ComponentKind::Card,
        ComponentKind::CheckBox,
        ComponentKind::CheckedTextView,
        ComponentKind::Drawer,
        ComponentKind::EditText,
        ComponentKind::Icon,
        ComponentKind::Image,
        ComponentKind::Map,
        ComponentKind::Modal,
        ComponentKind::MultiTab,
        ComponentKind::PageIndicator,
        ComponentKind::Remember,
        ComponentKind::Spinner,
        ComponentKind::Switch,
        ComponentKind::Text,
        ComponentKind::TextButton,
        ComponentKind::Toolbar,
        ComponentKind::UpperTaskBar,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ComponentKind::BackgroundImage => "BackgroundImage",
            ComponentKind::BottomNavigation => "Bottom_Navigation",
            ComponentKind::Card => "Card",
            ComponentKind::CheckBox => "CheckBox(box)",
            ComponentKind::CheckedTextView => "CheckedTextView",
            ComponentKind::Drawer => "Drawer",
            ComponentKind::EditText => "EditText",
            ComponentKind::Icon => "Icon",
            ComponentKind::Image => "Image",
            ComponentKind::Map => "Map",
            ComponentKind::Modal => "Modal",
            ComponentKind::MultiTab => "Multi_Tab",
            ComponentKind::PageIndicator => "PageIndicator",
            ComponentKind::Remember => "Remember",
            ComponentKind::Spinner => "Spinner",
            ComponentKind::Switch => "Switch",
            ComponentKind::Text => "Text",
            ComponentKind::TextButton => "TextButton",
            ComponentKind::Toolbar => "Toolbar",
            ComponentKind::UpperTaskBar => "UpperTaskBar",
        }
    }

    pub fn parse(s: &str) -> Option<ComponentKind> {
        Self::ALL.iter().copied().find(|k| k.as_str() == s)
    }

    /// Closest ontology class for error messages on unknown classes:
    /// case-insensitive containment first, then edit distance.
    pub fn nearest(s: &str) -> ComponentKind {
        let needle = s.to_ascii_lowercase();
        *Self::ALL
            .iter()
            .min_by_key(|k| {
                let candidate = k.as_str().to_ascii_lowercase();
                let unrelated = !candidate.contains(&needle) && !needle.contains(&candidate);
                (unrelated, levenshtein(&needle, &candidate))
            })
            .expect("ontology is non-empty")
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut prev = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = if ca == cb { prev } else { prev + 1 };
            prev = row[j + 1];
            row[j + 1] = cost.min(row[j] + 1).min(row[j + 1] + 1);
        }
    }
    row[b.len()]
}

/// Pixel bounding box `[x_min, y_min, x_max, y_max]` with `x_min < x_max`
/// and `y_min < y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox(pub [i64; 4]);

impl BBox {
    pub fn x_min(&self) -> i64 {
        self.0[0]
    }
    pub fn y_min(&self) -> i64 {
        self.0[1]
    }
    pub fn x_max(&self) -> i64 {
        self.0[2]
    }
    pub fn y_max(&self) -> i64 {
        self.0[3]
    }

    pub fn geometry_error(&self) -> Option<&'static str> {
        if self.x_min() >= self.x_max() {
            Some("x_min must be < x_max")
        } else if self.y_min() >= self.y_max() {
            Some("y_min must be < y_max")
        } else {
            None
        }
    }
}

/// One detected UI component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UIComponent {
    pub kind: ComponentKind,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible_text: Option<String>,
    pub confidence: Scalar,
}

/// Media playback state; severity maps to {1, 0.5, 0}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaState {
    Playing,
    Paused,
    #[default]
    Inactive,
}

impl MediaState {
    pub fn severity(&self) -> Scalar {
        match self {
            MediaState::Playing => 1.0,
            MediaState::Paused => 0.5,
            MediaState::Inactive => 0.0,
        }
    }
}

/// Visual backing for a set indicator flag: a bbox and/or quoted on-screen
/// text.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IndicatorEvidence {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

/// Screen-state flags and measurements, derived solely from visible
/// evidence. The key set mirrors the shipped indicator kinds and is
/// extensible: unknown keys are warned about, never rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StateIndicators {
    #[serde(default)]
    pub loading_spinner_visible: bool,
    #[serde(default)]
    pub error_banner_visible: bool,
    #[serde(default)]
    pub empty_state_visible: bool,
    #[serde(default)]
    pub media_state: MediaState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub progress_determinate_ratio: Option<Scalar>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub indicator_texts: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub confidences: BTreeMap<String, Scalar>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub evidence: BTreeMap<String, IndicatorEvidence>,
}

impl StateIndicators {
    /// Names of boolean flags that are currently set.
    pub fn set_flags(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.loading_spinner_visible {
            out.push("loading_spinner_visible");
        }
        if self.error_banner_visible {
            out.push("error_banner_visible");
        }
        if self.empty_state_visible {
            out.push("empty_state_visible");
        }
        out
    }
}

/// Short auditable summary of the screen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenSummary {
    pub description: String,
    pub primary_goal: String,
    pub evidence_bullets: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ui_class: Option<String>,
}

/// Validated per-screen evidence: the unit the intent mapping consumes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvidencePack {
    #[serde(default)]
    pub components: Vec<UIComponent>,
    #[serde(default)]
    pub state_indicators: StateIndicators,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screen_summary: Option<ScreenSummary>,
    #[serde(default)]
    pub step: u64,
    #[serde(default)]
    pub timestamp: u64,
}

impl EvidencePack {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("evidence pack serialises")
    }

    pub fn ui_class(&self) -> Option<&str> {
        self.screen_summary
            .as_ref()
            .and_then(|s| s.ui_class.as_deref())
    }

    pub fn primary_goal(&self) -> &str {
        self.screen_summary
            .as_ref()
            .map(|s| s.primary_goal.as_str())
            .unwrap_or("")
    }
}

/// Rolling history of the last `N` (intent, goal) pairs, most recent first,
/// threaded to evidence providers as context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentContext {
    history: Vec<(IntentVector, String)>,
    cap: usize,
}

impl IntentContext {
    pub fn new(cap: usize) -> Self {
        assert!(cap >= 1, "context capacity must be >= 1");
        Self {
            history: Vec::new(),
            cap,
        }
    }

    pub fn push(&mut self, intent: IntentVector, goal: impl Into<String>) {
        self.history.insert(0, (intent, goal.into()));
        self.history.truncate(self.cap);
    }

    pub fn history(&self) -> &[(IntentVector, String)] {
        &self.history
    }

    pub fn cap(&self) -> usize {
        self.cap
    }
}

impl Default for IntentContext {
    fn default() -> Self {
        Self::new(3)
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("malformed JSON: {0}")]
    Parse(String),
    #[error("{path}: expected {expected}")]
    WrongType { path: String, expected: String },
    #[error("{path}: required field missing")]
    MissingField { path: String },
    #[error("{path}: unknown component class {kind:?}{}", suggestion_suffix(.suggestion))]
    UnknownClass {
        path: String,
        kind: String,
        suggestion: Option<String>,
    },
    #[error("{path}: invalid bbox {bbox:?}: {reason}")]
    BadBBox {
        path: String,
        bbox: [i64; 4],
        reason: String,
    },
    #[error("{path}: media_state must be one of playing/paused/inactive, got {value:?}")]
    BadMediaState { path: String, value: String },
    #[error("screen_summary.evidence_bullets: expected 2..=5 bullets, got {count}")]
    BadBulletCount { count: usize },
}

fn suggestion_suffix(s: &Option<String>) -> String {
    match s {
        Some(n) => format!(" (nearest allowed is {:?})", n),
        None => String::new(),
    }
}

/// Complete list of violations for one input.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ValidationErrors(pub Vec<ValidationError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} validation error(s):", self.0.len())?;
        for e in &self.0 {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}

/// Non-fatal findings: clamps, defaults, unknown keys, audit flags.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationWarning {
    UnknownKey { path: String },
    Defaulted { path: String },
    Clamped { path: String, from: Scalar },
    LowConfidence { path: String, confidence: Scalar },
    Unevidenced { indicator: String },
}

impl fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationWarning::UnknownKey { path } => write!(f, "{path}: unknown key ignored"),
            ValidationWarning::Defaulted { path } => write!(f, "{path}: missing, defaulted"),
            ValidationWarning::Clamped { path, from } => {
                write!(f, "{path}: {from} clamped into [0,1]")
            }
            ValidationWarning::LowConfidence { path, confidence } => {
                write!(f, "{path}: retained with low confidence {confidence}")
            }
            ValidationWarning::Unevidenced { indicator } => write!(
                f,
                "state_indicators.{indicator}: set without bbox/text evidence and not marked low-confidence"
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ValidationOptions {
    /// Items below this confidence are retained but flagged.
    pub low_confidence: Scalar,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            low_confidence: 0.2,
        }
    }
}

/// A pack that passed validation, with any non-fatal findings.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedEvidence {
    pub pack: EvidencePack,
    pub warnings: Vec<ValidationWarning>,
}

#[derive(Debug, Error)]
pub enum EvidenceError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
}

/// Validate raw EVIDENCE JSON with default options.
pub fn validate_evidence(raw: &str) -> Result<ValidatedEvidence, ValidationErrors> {
    validate_evidence_with(raw, &ValidationOptions::default())
}

/// Validate raw EVIDENCE JSON, collecting every violation rather than
/// stopping at the first. Total: terminates with a pack or a non-empty
/// error list for any input.
pub fn validate_evidence_with(
    raw: &str,
    opts: &ValidationOptions,
) -> Result<ValidatedEvidence, ValidationErrors> {
    let value: Value = match serde_json::from_str(raw) {
        Ok(v) => v,
        Err(e) => return Err(ValidationErrors(vec![ValidationError::Parse(e.to_string())])),
    };
    let mut cx = Cx {
        errors: Vec::new(),
        warnings: Vec::new(),
        opts,
    };
    let pack = walk_pack(&value, &mut cx);
    if cx.errors.is_empty() {
        Ok(ValidatedEvidence {
            pack,
            warnings: cx.warnings,
        })
    } else {
        Err(ValidationErrors(cx.errors))
    }
}

/// Read and validate an EVIDENCE file.
pub fn load_evidence_file(path: impl AsRef<Path>) -> Result<ValidatedEvidence, EvidenceError> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|source| EvidenceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(validate_evidence(&raw)?)
}

struct Cx<'a> {
    errors: Vec<ValidationError>,
    warnings: Vec<ValidationWarning>,
    opts: &'a ValidationOptions,
}

impl Cx<'_> {
    fn error(&mut self, e: ValidationError) {
        self.errors.push(e);
    }
    fn warn(&mut self, w: ValidationWarning) {
        log::warn!("evidence: {w}");
        self.warnings.push(w);
    }
    fn wrong_type(&mut self, path: &str, expected: &str) {
        self.error(ValidationError::WrongType {
            path: path.to_string(),
            expected: expected.to_string(),
        });
    }
}

fn walk_pack(value: &Value, cx: &mut Cx) -> EvidencePack {
    let Some(obj) = value.as_object() else {
        cx.wrong_type("$", "a JSON object");
        return EvidencePack::default();
    };

    const KNOWN: [&str; 5] = [
        "components",
        "state_indicators",
        "screen_summary",
        "step",
        "timestamp",
    ];
    for key in obj.keys() {
        if !KNOWN.contains(&key.as_str()) {
            cx.warn(ValidationWarning::UnknownKey { path: key.clone() });
        }
    }

    let components = match obj.get("components") {
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .filter_map(|(i, c)| walk_component(c, i, cx))
            .collect(),
        Some(_) => {
            cx.wrong_type("components", "an array");
            Vec::new()
        }
        None => {
            cx.warn(ValidationWarning::Defaulted {
                path: "components".into(),
            });
            Vec::new()
        }
    };

    let state_indicators = match obj.get("state_indicators") {
        Some(v) => walk_indicators(v, cx),
        None => {
            cx.warn(ValidationWarning::Defaulted {
                path: "state_indicators".into(),
            });
            StateIndicators::default()
        }
    };

    let screen_summary = obj.get("screen_summary").and_then(|v| walk_summary(v, cx));

    let step = walk_u64(obj.get("step"), "step", cx);
    let timestamp = walk_u64(obj.get("timestamp"), "timestamp", cx);

    EvidencePack {
        components,
        state_indicators,
        screen_summary,
        step,
        timestamp,
    }
}

fn walk_u64(v: Option<&Value>, path: &str, cx: &mut Cx) -> u64 {
    match v {
        None | Some(Value::Null) => 0,
        Some(v) => match v.as_u64() {
            Some(n) => n,
            None => {
                cx.wrong_type(path, "a non-negative integer");
                0
            }
        },
    }
}

fn walk_component(v: &Value, index: usize, cx: &mut Cx) -> Option<UIComponent> {
    let path = format!("components[{index}]");
    let Some(obj) = v.as_object() else {
        cx.wrong_type(&path, "a JSON object");
        return None;
    };
    const KNOWN: [&str; 4] = ["kind", "bbox", "visible_text", "confidence"];
    for key in obj.keys() {
        if !KNOWN.contains(&key.as_str()) {
            cx.warn(ValidationWarning::UnknownKey {
                path: format!("{path}.{key}"),
            });
        }
    }

    let kind = match obj.get("kind") {
        Some(Value::String(s)) => match ComponentKind::parse(s) {
            Some(k) => Some(k),
            None => {
                cx.error(ValidationError::UnknownClass {
                    path: format!("{path}.kind"),
                    kind: s.clone(),
                    suggestion: Some(ComponentKind::nearest(s).as_str().to_string()),
                });
                None
            }
        },
        Some(_) => {
            cx.wrong_type(&format!("{path}.kind"), "a string");
            None
        }
        None => {
            cx.error(ValidationError::MissingField {
                path: format!("{path}.kind"),
            });
            None
        }
    };

    let bbox = walk_bbox(obj.get("bbox"), &format!("{path}.bbox"), true, cx);

    let visible_text = match obj.get("visible_text") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            cx.wrong_type(&format!("{path}.visible_text"), "a string or null");
            None
        }
    };

    let confidence = match obj.get("confidence") {
        Some(v) => match v.as_f64() {
            Some(c) => clamp_unit(c, &format!("{path}.confidence"), cx),
            None => {
                cx.wrong_type(&format!("{path}.confidence"), "a number");
                1.0
            }
        },
        None => {
            cx.warn(ValidationWarning::Defaulted {
                path: format!("{path}.confidence"),
            });
            1.0
        }
    };

    if confidence < cx.opts.low_confidence {
        cx.warn(ValidationWarning::LowConfidence {
            path: path.clone(),
            confidence,
        });
    }

    Some(UIComponent {
        kind: kind?,
        bbox: bbox?,
        visible_text,
        confidence,
    })
}

fn walk_bbox(v: Option<&Value>, path: &str, required: bool, cx: &mut Cx) -> Option<BBox> {
    let v = match v {
        Some(v) => v,
        None => {
            if required {
                cx.error(ValidationError::MissingField {
                    path: path.to_string(),
                });
            }
            return None;
        }
    };
    let Some(arr) = v.as_array() else {
        cx.wrong_type(path, "an array of four integers");
        return None;
    };
    if arr.len() != 4 {
        cx.wrong_type(path, "an array of four integers");
        return None;
    }
    let mut coords = [0i64; 4];
    for (i, item) in arr.iter().enumerate() {
        match item.as_i64() {
            Some(n) => coords[i] = n,
            None => {
                cx.wrong_type(path, "an array of four integers");
                return None;
            }
        }
    }
    let bbox = BBox(coords);
    if let Some(reason) = bbox.geometry_error() {
        cx.error(ValidationError::BadBBox {
            path: path.to_string(),
            bbox: coords,
            reason: reason.to_string(),
        });
        return None;
    }
    Some(bbox)
}

fn clamp_unit(x: Scalar, path: &str, cx: &mut Cx) -> Scalar {
    if !x.is_finite() {
        cx.warn(ValidationWarning::Clamped {
            path: path.to_string(),
            from: x,
        });
        return 0.0;
    }
    if !(0.0..=1.0).contains(&x) {
        cx.warn(ValidationWarning::Clamped {
            path: path.to_string(),
            from: x,
        });
        return clip(x, 0.0, 1.0);
    }
    x
}

fn walk_indicators(v: &Value, cx: &mut Cx) -> StateIndicators {
    let Some(obj) = v.as_object() else {
        cx.wrong_type("state_indicators", "a JSON object");
        return StateIndicators::default();
    };
    const KNOWN: [&str; 8] = [
        "loading_spinner_visible",
        "error_banner_visible",
        "empty_state_visible",
        "media_state",
        "progress_determinate_ratio",
        "indicator_texts",
        "confidences",
        "evidence",
    ];
    for key in obj.keys() {
        if !KNOWN.contains(&key.as_str()) {
            cx.warn(ValidationWarning::UnknownKey {
                path: format!("state_indicators.{key}"),
            });
        }
    }

    let mut ind = StateIndicators::default();
    for (field, slot) in [
        ("loading_spinner_visible", 0usize),
        ("error_banner_visible", 1),
        ("empty_state_visible", 2),
    ] {
        if let Some(v) = obj.get(field) {
            match v.as_bool() {
                Some(b) => match slot {
                    0 => ind.loading_spinner_visible = b,
                    1 => ind.error_banner_visible = b,
                    _ => ind.empty_state_visible = b,
                },
                None => cx.wrong_type(&format!("state_indicators.{field}"), "a boolean"),
            }
        }
    }

    if let Some(v) = obj.get("media_state") {
        match v {
            Value::Null => {}
            Value::String(s) => match s.as_str() {
                "playing" => ind.media_state = MediaState::Playing,
                "paused" => ind.media_state = MediaState::Paused,
                "inactive" => ind.media_state = MediaState::Inactive,
                other => cx.error(ValidationError::BadMediaState {
                    path: "state_indicators.media_state".into(),
                    value: other.to_string(),
                }),
            },
            _ => cx.wrong_type("state_indicators.media_state", "a string"),
        }
    }

    if let Some(v) = obj.get("progress_determinate_ratio") {
        match v {
            Value::Null => {}
            _ => match v.as_f64() {
                Some(r) => {
                    ind.progress_determinate_ratio =
                        Some(clamp_unit(r, "state_indicators.progress_determinate_ratio", cx));
                }
                None => cx.wrong_type("state_indicators.progress_determinate_ratio", "a number"),
            },
        }
    }

    if let Some(v) = obj.get("indicator_texts") {
        match v.as_array() {
            Some(items) => {
                for (i, item) in items.iter().enumerate() {
                    match item.as_str() {
                        Some(s) => ind.indicator_texts.push(s.to_string()),
                        None => cx.wrong_type(
                            &format!("state_indicators.indicator_texts[{i}]"),
                            "a string",
                        ),
                    }
                }
            }
            None => cx.wrong_type("state_indicators.indicator_texts", "an array of strings"),
        }
    }

    if let Some(v) = obj.get("confidences") {
        match v.as_object() {
            Some(map) => {
                for (k, cv) in map {
                    match cv.as_f64() {
                        Some(c) => {
                            let c =
                                clamp_unit(c, &format!("state_indicators.confidences.{k}"), cx);
                            ind.confidences.insert(k.clone(), c);
                        }
                        None => {
                            cx.wrong_type(&format!("state_indicators.confidences.{k}"), "a number")
                        }
                    }
                }
            }
            None => cx.wrong_type("state_indicators.confidences", "an object"),
        }
    }

    if let Some(v) = obj.get("evidence") {
        match v.as_object() {
            Some(map) => {
                for (k, ev) in map {
                    let path = format!("state_indicators.evidence.{k}");
                    let Some(eobj) = ev.as_object() else {
                        cx.wrong_type(&path, "an object");
                        continue;
                    };
                    let bbox = walk_bbox(eobj.get("bbox"), &format!("{path}.bbox"), false, cx);
                    let text = match eobj.get("text") {
                        None | Some(Value::Null) => None,
                        Some(Value::String(s)) => Some(s.clone()),
                        Some(_) => {
                            cx.wrong_type(&format!("{path}.text"), "a string or null");
                            None
                        }
                    };
                    ind.evidence
                        .insert(k.clone(), IndicatorEvidence { bbox, text });
                }
            }
            None => cx.wrong_type("state_indicators.evidence", "an object"),
        }
    }

    // Audit rule: a set flag needs visual backing or an explicit
    // low-confidence mark.
    for flag in ind.set_flags() {
        let has_evidence = ind
            .evidence
            .get(flag)
            .map(|e| e.bbox.is_some() || e.text.is_some())
            .unwrap_or(false);
        let low_conf = ind
            .confidences
            .get(flag)
            .map(|c| *c < cx.opts.low_confidence)
            .unwrap_or(false);
        if !has_evidence && !low_conf {
            cx.warn(ValidationWarning::Unevidenced {
                indicator: flag.to_string(),
            });
        }
    }

    ind
}

fn walk_summary(v: &Value, cx: &mut Cx) -> Option<ScreenSummary> {
    if v.is_null() {
        return None;
    }
    let Some(obj) = v.as_object() else {
        cx.wrong_type("screen_summary", "a JSON object");
        return None;
    };
    const KNOWN: [&str; 4] = ["description", "primary_goal", "evidence_bullets", "ui_class"];
    for key in obj.keys() {
        if !KNOWN.contains(&key.as_str()) {
            cx.warn(ValidationWarning::UnknownKey {
                path: format!("screen_summary.{key}"),
            });
        }
    }

    let get_str = |cx: &mut Cx, field: &str, required: bool| -> String {
        match obj.get(field) {
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                cx.wrong_type(&format!("screen_summary.{field}"), "a string");
                String::new()
            }
            None => {
                if required {
                    cx.error(ValidationError::MissingField {
                        path: format!("screen_summary.{field}"),
                    });
                }
                String::new()
            }
        }
    };

    let description = get_str(cx, "description", true);
    let primary_goal = get_str(cx, "primary_goal", true);

    let mut bullets = Vec::new();
    match obj.get("evidence_bullets") {
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                match item.as_str() {
                    Some(s) => bullets.push(s.to_string()),
                    None => {
                        cx.wrong_type(&format!("screen_summary.evidence_bullets[{i}]"), "a string")
                    }
                }
            }
            if !(2..=5).contains(&bullets.len()) {
                cx.error(ValidationError::BadBulletCount {
                    count: bullets.len(),
                });
            }
        }
        Some(_) => cx.wrong_type("screen_summary.evidence_bullets", "an array of strings"),
        None => cx.error(ValidationError::MissingField {
            path: "screen_summary.evidence_bullets".into(),
        }),
    }

    let ui_class = match obj.get("ui_class") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            cx.wrong_type("screen_summary.ui_class", "a string or null");
            None
        }
    };

    Some(ScreenSummary {
        description,
        primary_goal,
        evidence_bullets: bullets,
        ui_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BLANK: &str = r#"{"components":[],"state_indicators":{},"screen_summary":{"description":"blank","primary_goal":"none","evidence_bullets":["a","b"]}}"#;

    #[test]
    fn blank_screen_is_valid() {
        let v = validate_evidence(BLANK).unwrap();
        assert_eq!(v.pack.components.len(), 0);
        assert_eq!(v.pack.step, 0);
    }

    #[test]
    fn map_component_accepted() {
        let raw = r#"{"components":[{"kind":"Map","bbox":[0,0,1080,600],"confidence":0.9}],
            "state_indicators":{},"screen_summary":{"description":"d","primary_goal":"g","evidence_bullets":["a","b"]}}"#;
        let v = validate_evidence(raw).unwrap();
        assert_eq!(v.pack.components.len(), 1);
        assert_eq!(v.pack.components[0].kind, ComponentKind::Map);
        assert_eq!(v.pack.components[0].confidence, 0.9);
    }

    #[test]
    fn degenerate_bbox_is_geometry_error() {
        let raw = r#"{"components":[{"kind":"Map","bbox":[100,50,100,200],"confidence":0.9}],
            "state_indicators":{},"screen_summary":{"description":"d","primary_goal":"g","evidence_bullets":["a","b"]}}"#;
        let errs = validate_evidence(raw).unwrap_err();
        assert!(matches!(errs.0[0], ValidationError::BadBBox { .. }));
    }

    #[test]
    fn unknown_class_names_offender_and_suggests() {
        let raw = r#"{"components":[{"kind":"Button","bbox":[0,0,10,10],"confidence":0.9}],
            "state_indicators":{},"screen_summary":{"description":"d","primary_goal":"g","evidence_bullets":["a","b"]}}"#;
        let errs = validate_evidence(raw).unwrap_err();
        match &errs.0[0] {
            ValidationError::UnknownClass {
                kind, suggestion, ..
            } => {
                assert_eq!(kind, "Button");
                assert_eq!(suggestion.as_deref(), Some("TextButton"));
            }
            other => panic!("expected class error, got {other:?}"),
        }
    }

    #[test]
    fn all_violations_reported_not_just_first() {
        let raw = r#"{"components":[
            {"kind":"Button","bbox":[0,0,10,10],"confidence":0.9},
            {"kind":"Map","bbox":[5,5,5,9],"confidence":0.9}],
            "state_indicators":{},"screen_summary":{"description":"d","primary_goal":"g","evidence_bullets":["a"]}}"#;
        let errs = validate_evidence(raw).unwrap_err();
        assert_eq!(errs.0.len(), 3); // class + bbox + bullet count
    }

    #[test]
    fn malformed_json_is_parse_error() {
        let errs = validate_evidence("{not json").unwrap_err();
        assert!(matches!(errs.0[0], ValidationError::Parse(_)));
    }

    #[test]
    fn confidence_clamped_with_warning() {
        let raw = r#"{"components":[{"kind":"Text","bbox":[0,0,10,10],"confidence":1.7}],
            "state_indicators":{},"screen_summary":{"description":"d","primary_goal":"g","evidence_bullets":["a","b"]}}"#;
        let v = validate_evidence(raw).unwrap();
        assert_eq!(v.pack.components[0].confidence, 1.0);
        assert!(v
            .warnings
            .iter()
            .any(|w| matches!(w, ValidationWarning::Clamped { .. })));
    }

    #[test]
    fn unknown_top_level_key_warns_not_rejects() {
        let raw = r#"{"components":[],"state_indicators":{},"screen_summary":{"description":"d","primary_goal":"g","evidence_bullets":["a","b"]},"extra_provider_field":42}"#;
        let v = validate_evidence(raw).unwrap();
        assert!(v
            .warnings
            .iter()
            .any(|w| matches!(w, ValidationWarning::UnknownKey { .. })));
    }

    #[test]
    fn set_flag_without_evidence_warns() {
        let raw = r#"{"components":[],"state_indicators":{"loading_spinner_visible":true},
            "screen_summary":{"description":"d","primary_goal":"g","evidence_bullets":["a","b"]}}"#;
        let v = validate_evidence(raw).unwrap();
        assert!(v
            .warnings
            .iter()
            .any(|w| matches!(w, ValidationWarning::Unevidenced { .. })));
    }

    #[test]
    fn round_trip_revalidates_equal() {
        let raw = r#"{"components":[{"kind":"Map","bbox":[0,0,1080,600],"visible_text":"tiles","confidence":0.9}],
            "state_indicators":{"loading_spinner_visible":true,"media_state":"paused",
              "indicator_texts":["Loading"],"confidences":{"loading_spinner_visible":0.8},
              "evidence":{"loading_spinner_visible":{"bbox":[1,1,20,20]}}},
            "screen_summary":{"description":"d","primary_goal":"g","evidence_bullets":["a","b","c"],"ui_class":"Map / browse"},
            "step":4,"timestamp":20000}"#;
        let first = validate_evidence(raw).unwrap().pack;
        let second = validate_evidence(&first.to_json()).unwrap().pack;
        assert_eq!(first, second);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_evidence_file("/nonexistent/evidence.json").unwrap_err();
        assert!(matches!(err, EvidenceError::Io { .. }));
    }

    #[test]
    fn intent_context_caps_history() {
        let mut cx = IntentContext::new(2);
        for i in 0..4 {
            cx.push(IntentVector::new(0.1 * i as f64, 0.0, 0.0), format!("g{i}"));
        }
        assert_eq!(cx.history().len(), 2);
        assert_eq!(cx.history()[0].1, "g3"); // most recent first
    }

    #[test]
    fn media_severity_levels() {
        assert_eq!(MediaState::Playing.severity(), 1.0);
        assert_eq!(MediaState::Paused.severity(), 0.5);
        assert_eq!(MediaState::Inactive.severity(), 0.0);
    }

    #[test]
    fn nearest_class_suggestions() {
        assert_eq!(ComponentKind::nearest("Button"), ComponentKind::TextButton);
        assert_eq!(ComponentKind::nearest("map"), ComponentKind::Map);
        assert_eq!(ComponentKind::nearest("Checkbox"), ComponentKind::CheckBox);
    }
}
