//! Deterministic evidence-to-intent mapping and axis-constant estimation.
//!
//! Per-component impacts (class weight x confidence x effect) accumulate per
//! axis, get soft-capped at `kappa`, squashed through a sigmoid scaled by
//! `tau`, and finally adjusted by visible state modifiers (additive boosts
//! and multiplicative dampers driven by indicator severities). Zero evidence
//! lands exactly at `(0.5, 0.5, 0.5)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::{EvidencePack, StateIndicators};
use crate::num::{clip, ln4, percentile_nearest_rank, sigmoid};
use crate::Scalar;

/// The three behaviour axes: network utilisation, memory pressure, resource
/// intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Net,
    Mem,
    Res,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Net, Axis::Mem, Axis::Res];

    pub fn index(&self) -> usize {
        match self {
            Axis::Net => 0,
            Axis::Mem => 1,
            Axis::Res => 2,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::Net => "net",
            Axis::Mem => "mem",
            Axis::Res => "res",
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Screen intent over the three axes, each component in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntentVector {
    pub net: Scalar,
    pub mem: Scalar,
    pub res: Scalar,
}

impl IntentVector {
    pub fn new(net: Scalar, mem: Scalar, res: Scalar) -> Self {
        Self { net, mem, res }
    }

    pub fn as_array(&self) -> [Scalar; 3] {
        [self.net, self.mem, self.res]
    }

    pub fn get(&self, axis: Axis) -> Scalar {
        self.as_array()[axis.index()]
    }
}

/// Per-class weight and effect triple `[net, mem, res]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorEntry {
    pub w: Scalar,
    pub e: [Scalar; 3],
}

/// UI-impact prior: how strongly each visible component class loads each
/// axis. Keyed by ontology class; classes absent from the prior are skipped
/// during accumulation (and counted in diagnostics).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UIImpactPrior {
    pub entries: BTreeMap<crate::evidence::ComponentKind, PriorEntry>,
}

/// Shipped default prior, embedded at build time.
pub const DEFAULT_PRIOR_TOML: &str = include_str!("../data/default_prior.toml");

impl Default for UIImpactPrior {
    fn default() -> Self {
        #[derive(Deserialize)]
        struct File {
            prior: BTreeMap<crate::evidence::ComponentKind, PriorEntry>,
        }
        let file: File =
            toml::from_str(DEFAULT_PRIOR_TOML).expect("embedded default prior parses");
        let prior = UIImpactPrior {
            entries: file.prior,
        };
        debug_assert!(prior.is_complete());
        prior
    }
}

impl UIImpactPrior {
    pub fn get(&self, kind: crate::evidence::ComponentKind) -> Option<&PriorEntry> {
        self.entries.get(&kind)
    }

    /// True when every ontology class has an entry with effects in `[0, 1]`
    /// and a non-negative weight.
    pub fn is_complete(&self) -> bool {
        crate::evidence::ComponentKind::ALL.iter().all(|k| {
            self.entries
                .get(k)
                .map(|p| p.w >= 0.0 && p.e.iter().all(|e| (0.0..=1.0).contains(e)))
                .unwrap_or(false)
        })
    }
}

/// Per-axis soft cap and sigmoid scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisConst {
    pub kappa: Scalar,
    pub tau: Scalar,
}

/// Soft caps and sigmoid scales for all three axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AxisConstants {
    pub net: AxisConst,
    pub mem: AxisConst,
    pub res: AxisConst,
}

impl AxisConstants {
    pub fn get(&self, axis: Axis) -> AxisConst {
        match axis {
            Axis::Net => self.net,
            Axis::Mem => self.mem,
            Axis::Res => self.res,
        }
    }
}

impl Default for AxisConstants {
    fn default() -> Self {
        Self {
            net: AxisConst {
                kappa: 6.7310,
                tau: 1.3077,
            },
            mem: AxisConst {
                kappa: 6.7041,
                tau: 1.3147,
            },
            res: AxisConst {
                kappa: 3.1326,
                tau: 0.8558,
            },
        }
    }
}

/// State-indicator kinds driving the post-squash modifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorKind {
    LoadingSpinner,
    ErrorBanner,
    EmptyState,
    Media,
    Progress,
    Text,
}

impl IndicatorKind {
    pub const ALL: [IndicatorKind; 6] = [
        IndicatorKind::LoadingSpinner,
        IndicatorKind::ErrorBanner,
        IndicatorKind::EmptyState,
        IndicatorKind::Media,
        IndicatorKind::Progress,
        IndicatorKind::Text,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            IndicatorKind::LoadingSpinner => "loading_spinner",
            IndicatorKind::ErrorBanner => "error_banner",
            IndicatorKind::EmptyState => "empty_state",
            IndicatorKind::Media => "media",
            IndicatorKind::Progress => "progress",
            IndicatorKind::Text => "text",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.as_str() == s)
    }
}

/// Indicator severity `m_k` in `[0, 1]`: booleans map to {0, 1}, determinate
/// progress to `1 - ratio`, media to {1, 0.5, 0}, and indicator texts to a
/// clipped keyword-weight sum.
pub fn indicator_severity(
    kind: IndicatorKind,
    ind: &StateIndicators,
    keywords: &BTreeMap<String, Scalar>,
) -> Scalar {
    match kind {
        IndicatorKind::LoadingSpinner => ind.loading_spinner_visible as u8 as Scalar,
        IndicatorKind::ErrorBanner => ind.error_banner_visible as u8 as Scalar,
        IndicatorKind::EmptyState => ind.empty_state_visible as u8 as Scalar,
        IndicatorKind::Media => ind.media_state.severity(),
        IndicatorKind::Progress => ind
            .progress_determinate_ratio
            .map(|r| 1.0 - r)
            .unwrap_or(0.0),
        IndicatorKind::Text => {
            let mut sum = 0.0;
            for (kw, weight) in keywords {
                let kw_lower = kw.to_ascii_lowercase();
                let present = ind
                    .indicator_texts
                    .iter()
                    .any(|t| t.to_ascii_lowercase().contains(&kw_lower));
                if present {
                    sum += *weight;
                }
            }
            clip(sum, 0.0, 1.0)
        }
    }
}

/// Additive strengths, multiplicative dampers, and text keyword weights for
/// the state modifiers. `add[k]` and `mul[k]` are `[net, mem, res]` triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateParams {
    pub add: BTreeMap<IndicatorKind, [Scalar; 3]>,
    pub mul: BTreeMap<IndicatorKind, [Scalar; 3]>,
    pub keywords: BTreeMap<String, Scalar>,
}

impl Default for StateParams {
    fn default() -> Self {
        let mut add = BTreeMap::new();
        add.insert(IndicatorKind::LoadingSpinner, [0.15, 0.0, 0.0]);
        add.insert(IndicatorKind::ErrorBanner, [0.0, 0.0, 0.05]);
        add.insert(IndicatorKind::Media, [0.2, 0.0, 0.1]);

        let mut mul = BTreeMap::new();
        mul.insert(IndicatorKind::ErrorBanner, [0.5, 0.0, 0.0]);
        mul.insert(IndicatorKind::EmptyState, [0.3, 0.3, 0.3]);

        let mut keywords = BTreeMap::new();
        for kw in ["uploading", "downloading", "syncing", "loading"] {
            keywords.insert(kw.to_string(), 0.5);
        }

        Self { add, mul, keywords }
    }
}

impl StateParams {
    /// All beta dampers must sit in `[0, 1]` and alphas be non-negative.
    pub fn validate(&self) -> Result<(), IntentError> {
        for (k, triple) in &self.mul {
            if triple.iter().any(|b| !(0.0..=1.0).contains(b)) {
                return Err(IntentError::BadStateParam {
                    indicator: k.as_str().to_string(),
                });
            }
        }
        for (k, triple) in &self.add {
            if triple.iter().any(|a| *a < 0.0 || !a.is_finite()) {
                return Err(IntentError::BadStateParam {
                    indicator: k.as_str().to_string(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum IntentError {
    #[error("axis {axis} has no pre-squash samples")]
    EmptyAxis { axis: Axis },
    #[error("axis {axis} estimate is non-positive (degenerate corpus)")]
    DegenerateAxis { axis: Axis },
    #[error("state param for indicator {indicator} out of range")]
    BadStateParam { indicator: String },
}

/// Result of one intent computation, with the diagnostics the pipeline
/// reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentComputation {
    pub intent: IntentVector,
    /// Uncapped per-axis accumulation sums (the corpus statistic behind
    /// kappa/tau estimation).
    pub presquash: [Scalar; 3],
    /// Components whose class was missing from the prior.
    pub skipped_components: usize,
}

/// Sum per-component impacts without capping. Classes missing from the
/// prior are skipped and counted.
pub fn accumulate_sums(pack: &EvidencePack, prior: &UIImpactPrior) -> ([Scalar; 3], usize) {
    let mut sums = [0.0; 3];
    let mut skipped = 0usize;
    for c in &pack.components {
        let Some(entry) = prior.get(c.kind) else {
            skipped += 1;
            continue;
        };
        let p = clip(c.confidence, 0.0, 1.0);
        for (sum, effect) in sums.iter_mut().zip(entry.e) {
            *sum += entry.w * p * effect;
        }
    }
    (sums, skipped)
}

/// Map validated evidence to an intent vector.
pub fn compute_intent(
    pack: &EvidencePack,
    prior: &UIImpactPrior,
    constants: &AxisConstants,
    sp: &StateParams,
) -> IntentComputation {
    let (presquash, skipped_components) = accumulate_sums(pack, prior);

    let mut i = [0.0; 3];
    for axis in Axis::ALL {
        let a = axis.index();
        let c = constants.get(axis);
        let capped = presquash[a].min(c.kappa);
        i[a] = sigmoid(capped / c.tau);
    }

    // Indicator severities, then additive/multiplicative composition.
    let mut severities = BTreeMap::new();
    for kind in IndicatorKind::ALL {
        severities.insert(
            kind,
            indicator_severity(kind, &pack.state_indicators, &sp.keywords),
        );
    }
    for a in 0..3 {
        let mut delta_add = 0.0;
        let mut gamma_mul = 1.0;
        for kind in IndicatorKind::ALL {
            let m_k = severities[&kind];
            if let Some(alpha) = sp.add.get(&kind) {
                delta_add += alpha[a] * m_k;
            }
            if let Some(beta) = sp.mul.get(&kind) {
                gamma_mul *= 1.0 - beta[a] * m_k;
            }
        }
        i[a] = clip(i[a] * gamma_mul + delta_add, 0.0, 1.0);
    }

    IntentComputation {
        intent: IntentVector::new(i[0], i[1], i[2]),
        presquash,
        skipped_components,
    }
}

/// Estimate per-axis caps and scales from corpora of pre-squash sums:
/// `kappa` from the high tail (99th percentile for net, 98th for mem/res,
/// nearest-rank) and `tau = p75 / ln 4` so the 75th percentile squashes
/// to 0.8.
pub fn estimate_axis_constants(
    net: &[Scalar],
    mem: &[Scalar],
    res: &[Scalar],
) -> Result<AxisConstants, IntentError> {
    let estimate = |sums: &[Scalar], kappa_pct: f64, axis: Axis| -> Result<AxisConst, IntentError> {
        if sums.is_empty() {
            return Err(IntentError::EmptyAxis { axis });
        }
        let kappa = percentile_nearest_rank(sums, kappa_pct)
            .ok_or(IntentError::EmptyAxis { axis })?;
        let p75 =
            percentile_nearest_rank(sums, 75.0).ok_or(IntentError::EmptyAxis { axis })?;
        let tau = p75 / ln4::<Scalar>();
        if kappa <= 0.0 || tau <= 0.0 {
            return Err(IntentError::DegenerateAxis { axis });
        }
        Ok(AxisConst { kappa, tau })
    };
    Ok(AxisConstants {
        net: estimate(net, 99.0, Axis::Net)?,
        mem: estimate(mem, 98.0, Axis::Mem)?,
        res: estimate(res, 98.0, Axis::Res)?,
    })
}
