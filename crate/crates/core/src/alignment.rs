//! Behaviour fusion, alignment scoring, quadrant triage, and the forensic
//! judge.
//!
//! Channel evidence fuses into a behaviour vector by masked weighted
//! average. Alignment uses an RBF kernel on the squared Euclidean distance
//! between intent and behaviour — stable at low magnitudes where cosine
//! similarity degenerates — and misalignment is its complement. The backend
//! magnitude (L2 norm of behaviour) captures total energy undiluted, so the
//! `(A, B)` plane splits into four triage quadrants. A three-layer judge
//! scores whether visible context justifies the dominant channel, catching
//! semantic spoofing that pure vector alignment misses.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::channels::ChannelEvidence;
use crate::evidence::{ComponentKind, MediaState, StateIndicators};
use crate::intent::{Axis, IntentVector};
use crate::num::Real;
use crate::Scalar;

/// Fusion weights, RBF sensitivity, and decision thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub alpha_h: Scalar,
    pub alpha_m: Scalar,
    pub alpha_r: Scalar,
    /// RBF sensitivity.
    pub gamma: Scalar,
    /// Misalignment threshold: flag when `M >= theta`.
    pub theta: Scalar,
    /// Backend-magnitude split for the triage quadrants.
    pub b_hi: Scalar,
    /// Judge-confidence floor below which aligned steps stay unverified.
    pub c_lo: Scalar,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            alpha_h: 0.4,
            alpha_m: 0.3,
            alpha_r: 0.3,
            gamma: 2.0,
            theta: 0.5,
            b_hi: 0.4,
            c_lo: 0.4,
        }
    }
}

/// Fused behaviour over `[net, mem, res]`; `scored = false` when every
/// channel was masked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviourVector {
    pub net: Scalar,
    pub mem: Scalar,
    pub res: Scalar,
    pub scored: bool,
}

impl BehaviourVector {
    pub fn as_array(&self) -> [Scalar; 3] {
        [self.net, self.mem, self.res]
    }

    pub fn get(&self, axis: Axis) -> Scalar {
        self.as_array()[axis.index()]
    }

    pub fn unscored() -> Self {
        Self {
            net: 0.0,
            mem: 0.0,
            res: 0.0,
            scored: false,
        }
    }
}

/// Masked weighted fusion: `b = sum(alpha_k s_k) / sum(alpha_k m_k)`, a
/// zero unscored vector when every channel is masked.
pub fn fuse(
    h: &ChannelEvidence,
    m: &ChannelEvidence,
    r: &ChannelEvidence,
    cfg: &FusionConfig,
) -> BehaviourVector {
    let weights = [cfg.alpha_h, cfg.alpha_m, cfg.alpha_r];
    let channels = [h, m, r];
    let mut denom = 0.0;
    let mut num = [0.0; 3];
    for (alpha, ch) in weights.iter().zip(channels) {
        if ch.mask {
            denom += alpha;
            for (acc, s) in num.iter_mut().zip(ch.s) {
                *acc += alpha * s;
            }
        }
    }
    if denom <= 0.0 {
        return BehaviourVector::unscored();
    }
    BehaviourVector {
        net: num[0] / denom,
        mem: num[1] / denom,
        res: num[2] / denom,
        scored: true,
    }
}

/// RBF alignment kernel: `A = exp(-gamma * ||i - b||^2)` in `(0, 1]`, and
/// its complement `M = 1 - A`.
pub fn rbf_alignment<R: Real>(i: [R; 3], b: [R; 3], gamma: R) -> (R, R) {
    let mut d2 = R::zero();
    for a in 0..3 {
        let d = i[a] - b[a];
        d2 = d2 + d * d;
    }
    let align = (-gamma * d2).exp();
    (align, R::one() - align)
}

/// Alignment/misalignment for intent vs behaviour.
pub fn align(i: &IntentVector, b: &BehaviourVector, gamma: Scalar) -> (Scalar, Scalar) {
    rbf_alignment(i.as_array(), b.as_array(), gamma)
}

/// Backend magnitude: total energy of observed behaviour (L2 norm).
pub fn magnitude(b: &BehaviourVector) -> Scalar {
    b.as_array().iter().map(|v| v * v).sum::<Scalar>().sqrt()
}

/// 2D triage over alignment and backend magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrant {
    #[serde(rename = "Safe/Authorised")]
    SafeAuthorised,
    #[serde(rename = "Overt Anomaly")]
    OvertAnomaly,
    #[serde(rename = "Idle/Safe")]
    IdleSafe,
    #[serde(rename = "Uncertain/Stealth")]
    UncertainStealth,
}

impl Quadrant {
    pub fn label(&self) -> &'static str {
        match self {
            Quadrant::SafeAuthorised => "Safe/Authorised",
            Quadrant::OvertAnomaly => "Overt Anomaly",
            Quadrant::IdleSafe => "Idle/Safe",
            Quadrant::UncertainStealth => "Uncertain/Stealth",
        }
    }
}

/// Place `(A, B)` in a quadrant: `A` splits at `1 - theta`, `B` at `b_hi`.
pub fn triage(a: Scalar, b_mag: Scalar, cfg: &FusionConfig) -> Quadrant {
    let a_high = a >= 1.0 - cfg.theta;
    let b_high = b_mag >= cfg.b_hi;
    match (b_high, a_high) {
        (true, true) => Quadrant::SafeAuthorised,
        (true, false) => Quadrant::OvertAnomaly,
        (false, true) => Quadrant::IdleSafe,
        (false, false) => Quadrant::UncertainStealth,
    }
}

/// Per-step verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Authorised,
    Anomaly,
    Uncertain,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Authorised => "Authorised",
            Verdict::Anomaly => "Anomaly",
            Verdict::Uncertain => "Uncertain",
        }
    }
}

/// Verdict rule: unscored steps are uncertain; `M >= theta` flags an
/// anomaly; aligned steps need judge confidence `C >= c_lo` to be
/// authorised, otherwise they are anomalous when energetic (the spoofing
/// trap) and uncertain when quiet.
pub fn verdict(
    _a: Scalar,
    m: Scalar,
    b_mag: Scalar,
    c: Scalar,
    scored: bool,
    cfg: &FusionConfig,
) -> (Verdict, Option<&'static str>) {
    if !scored {
        return (Verdict::Uncertain, Some("unscored: all channels masked"));
    }
    if m >= cfg.theta {
        return (Verdict::Anomaly, Some("misalignment at or above theta"));
    }
    if c >= cfg.c_lo {
        (Verdict::Authorised, None)
    } else if b_mag >= cfg.b_hi {
        (Verdict::Anomaly, Some("visually unverified"))
    } else {
        (Verdict::Uncertain, Some("low-energy unverified"))
    }
}

/// Argmax of the behaviour components; ties break net > mem > res so
/// reports stay deterministic.
pub fn dominant_channel(b: &BehaviourVector) -> Axis {
    let arr = b.as_array();
    let mut best = Axis::Net;
    for axis in [Axis::Mem, Axis::Res] {
        if arr[axis.index()] > arr[best.index()] {
            best = axis;
        }
    }
    best
}

/// Everything the forensic judge sees for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgeInput {
    pub screenshot: Option<PathBuf>,
    pub intent: IntentVector,
    pub behaviour: BehaviourVector,
    /// Up to N prior (intent, behaviour) pairs, most recent first.
    pub history: Vec<(IntentVector, BehaviourVector)>,
    pub indicators: StateIndicators,
    /// Component classes visible on the screen (drives Layer 1).
    pub component_kinds: Vec<ComponentKind>,
}

/// Deterministic three-layer judge. Base 0.5; Layer 1 (+0.4) when a visual
/// justifier matches the dominant channel; Layer 2 (+0.2) when recent
/// history carried intent >= 0.6 on that channel; Layer 3 (-0.4) when an
/// error/empty indicator co-occurs with dominant-channel evidence >= 0.8.
pub fn builtin_judge(input: &JudgeInput) -> Scalar {
    let dominant = dominant_channel(&input.behaviour);
    let mut c: Scalar = 0.5;

    let has_kind = |kinds: &[ComponentKind]| input.component_kinds.iter().any(|k| kinds.contains(k));
    let visual_justifier = match dominant {
        Axis::Net => {
            has_kind(&[ComponentKind::Spinner])
                || input.indicators.loading_spinner_visible
                || input.indicators.progress_determinate_ratio.is_some()
        }
        Axis::Mem => has_kind(&[
            ComponentKind::Image,
            ComponentKind::Map,
            ComponentKind::BackgroundImage,
        ]),
        Axis::Res => {
            has_kind(&[ComponentKind::EditText])
                || input.indicators.media_state == MediaState::Playing
        }
    };
    if visual_justifier {
        c += 0.4;
    }

    let implicit_context = input
        .history
        .iter()
        .any(|(intent, _)| intent.get(dominant) >= 0.6);
    if implicit_context {
        c += 0.2;
    }

    let anomaly_trap = (input.indicators.error_banner_visible
        || input.indicators.empty_state_visible)
        && input.behaviour.get(dominant) >= 0.8;
    if anomaly_trap {
        c -= 0.4;
    }

    c.clamp(0.0, 1.0)
}

/// The scored tuple for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub step: u64,
    pub a: Scalar,
    pub m: Scalar,
    pub b_mag: Scalar,
    pub c: Scalar,
    pub quadrant: Quadrant,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub dominant: Axis,
}

/// Score one step end to end given intent, fused behaviour, and judge
/// confidence.
pub fn score_step(
    step: u64,
    intent: &IntentVector,
    behaviour: &BehaviourVector,
    confidence: Scalar,
    cfg: &FusionConfig,
) -> AlignmentResult {
    let (a, m) = align(intent, behaviour, cfg.gamma);
    let b_mag = magnitude(behaviour);
    let quadrant = triage(a, b_mag, cfg);
    let (v, reason) = verdict(a, m, b_mag, confidence, behaviour.scored, cfg);
    AlignmentResult {
        step,
        a,
        m,
        b_mag,
        c: confidence,
        quadrant,
        verdict: v,
        reason: reason.map(|r| r.to_string()),
        dominant: dominant_channel(behaviour),
    }
}
