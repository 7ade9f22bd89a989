//! Hyperparameter derivation from paired-delta tables: rank normalisation,
//! blended correlation strength, Benjamini-Hochberg shrinkage, weight
//! normalisation, and spillover estimation.
//!
//! The table aligns physical deltas (throughput, memory pressure) with
//! behavioural surrogate series; surrogates that fail FDR control are shrunk
//! to zero and the survivors renormalised. The whole pipeline is
//! deterministic: no RNG anywhere.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::num::{percentile_nearest_rank, Real};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("column {0:?} missing from table")]
    ColumnMissing(String),
    #[error("series length mismatch: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("need at least 3 aligned rows, got {0}")]
    TooFewRows(usize),
    #[error("q must be in (0, 1), got {0}")]
    BadQ(Scalar),
    #[error("table cell {column:?} row {row}: {message}")]
    BadCell {
        column: String,
        row: usize,
        message: String,
    },
    #[error("table: {0}")]
    Malformed(String),
}

/// Percentile-rank a series into `[0, 1]` with average ranks for ties;
/// a singleton maps to the midpoint 0.5. Invariant under strictly monotone
/// transforms of the input.
pub fn rank_normalise<R: Real>(xs: &[R]) -> Vec<R> {
    let n = xs.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![R::from_f64_lossy(0.5)];
    }
    let ranks = average_ranks(xs);
    let denom = R::from_f64_lossy((n - 1) as f64);
    ranks
        .into_iter()
        .map(|r| (r - R::one()) / denom)
        .collect()
}

/// 1-based ranks with ties averaged.
fn average_ranks<R: Real>(xs: &[R]) -> Vec<R> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![R::zero(); xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = R::from_f64_lossy((i + j) as f64 / 2.0 + 1.0);
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; `None` when either series is degenerate (constant).
pub fn pearson<R: Real>(x: &[R], y: &[R]) -> Option<R> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return None;
    }
    let nn = R::from_f64_lossy(n as f64);
    let mx = x.iter().fold(R::zero(), |a, &v| a + v) / nn;
    let my = y.iter().fold(R::zero(), |a, &v| a + v) / nn;
    let mut cov = R::zero();
    let mut vx = R::zero();
    let mut vy = R::zero();
    for k in 0..n {
        let dx = x[k] - mx;
        let dy = y[k] - my;
        cov = cov + dx * dy;
        vx = vx + dx * dx;
        vy = vy + dy * dy;
    }
    if vx <= R::zero() || vy <= R::zero() {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Spearman rank correlation: Pearson over average ranks.
pub fn spearman<R: Real>(x: &[R], y: &[R]) -> Option<R> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Blended correlation strength plus its p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    /// `(|rho_spearman| + |rho_pearson|) / 2` in `[0, 1]`.
    pub strength: Scalar,
    /// Two-sided t-approximation on the stronger coefficient, doubled to
    /// correct for picking the stronger of the two (the uncorrected pick is
    /// anti-conservative and under-shrinks pure noise). Swappable if a
    /// different test is wanted.
    pub p_value: Scalar,
    pub rho_pearson: Scalar,
    pub rho_spearman: Scalar,
}

/// Blend Spearman and Pearson magnitudes; constant series yield strength 0
/// with p = 1.
pub fn blended_strength(x: &[Scalar], y: &[Scalar]) -> Result<Correlation, CalibrationError> {
    if x.len() != y.len() {
        return Err(CalibrationError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(CalibrationError::TooFewRows(x.len()));
    }
    let (rho_p, rho_s) = match (pearson(x, y), spearman(x, y)) {
        (Some(p), Some(s)) => (p, s),
        _ => {
            return Ok(Correlation {
                strength: 0.0,
                p_value: 1.0,
                rho_pearson: 0.0,
                rho_spearman: 0.0,
            })
        }
    };
    let strength = (rho_s.abs() + rho_p.abs()) / 2.0;
    let r = if rho_s.abs() >= rho_p.abs() { rho_s } else { rho_p };
    let p_value = two_sided_t_pvalue(r, x.len());
    Ok(Correlation {
        strength,
        p_value,
        rho_pearson: rho_p,
        rho_spearman: rho_s,
    })
}

fn two_sided_t_pvalue(r: Scalar, n: usize) -> Scalar {
    let df = (n - 2) as Scalar;
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return 0.0; // |r| = 1: perfectly determined
    }
    let t = r.abs() * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    // x2 for two-sidedness, x2 again for the stronger-of-two selection
    (4.0 * (1.0 - dist.cdf(t))).clamp(0.0, 1.0)
}

/// Benjamini-Hochberg step-up: sort p-values ascending, find the largest
/// `i` with `p_(i) <= (i/m) q`, reject hypotheses `1..=i`. Returns original
/// indices of the rejected (significant) hypotheses.
pub fn bh_select(p_values: &[Scalar], q: Scalar) -> Result<BTreeSet<usize>, CalibrationError> {
    if !(0.0..1.0).contains(&q) || q == 0.0 {
        return Err(CalibrationError::BadQ(q));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        p_values[a]
            .partial_cmp(&p_values[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut cutoff = 0usize; // number of rejected hypotheses
    for (i, &idx) in order.iter().enumerate() {
        if p_values[idx] <= (i + 1) as Scalar / m as Scalar * q {
            cutoff = i + 1;
        }
    }
    Ok(order[..cutoff].iter().copied().collect())
}

// ---------------------------------------------------------------------------
// Paired-delta table and roles
// ---------------------------------------------------------------------------

/// Aligned observation table: named numeric columns of equal length.
///
/// Surrogate columns are expected to arrive as percentile-ranked scores in
/// `[0, 1]` (see [`rank_normalise`]) — that is how they are constructed
/// upstream. Columns pass to the correlation machinery as-is; supplying raw
/// series changes only the Pearson leg of the blend, since Spearman is
/// rank-invariant.
#[derive(Debug, Clone, Default)]
pub struct PairedDeltaTable {
    columns: BTreeMap<String, Vec<Scalar>>,
    rows: usize,
}

impl PairedDeltaTable {
    pub fn from_columns(
        columns: BTreeMap<String, Vec<Scalar>>,
    ) -> Result<Self, CalibrationError> {
        let mut rows = None;
        for (name, col) in &columns {
            match rows {
                None => rows = Some(col.len()),
                Some(r) if r != col.len() => {
                    return Err(CalibrationError::Malformed(format!(
                        "column {name:?} has {} rows, expected {r}",
                        col.len()
                    )))
                }
                _ => {}
            }
        }
        let rows = rows.unwrap_or(0);
        if rows < 3 {
            return Err(CalibrationError::TooFewRows(rows));
        }
        Ok(Self { columns, rows })
    }

    /// Parse a CSV with a header row naming the columns.
    pub fn from_csv(text: &str) -> Result<Self, CalibrationError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| CalibrationError::Malformed(e.to_string()))?
            .iter()
            .map(|h| h.to_string())
            .collect();
        let mut columns: BTreeMap<String, Vec<Scalar>> =
            headers.iter().map(|h| (h.clone(), Vec::new())).collect();
        for (row_idx, row) in reader.records().enumerate() {
            let row = row.map_err(|e| CalibrationError::Malformed(e.to_string()))?;
            for (col_idx, name) in headers.iter().enumerate() {
                let cell = row.get(col_idx).unwrap_or("");
                let value: Scalar = cell.parse().map_err(|_| CalibrationError::BadCell {
                    column: name.clone(),
                    row: row_idx,
                    message: format!("not a number: {cell:?}"),
                })?;
                if !value.is_finite() {
                    return Err(CalibrationError::BadCell {
                        column: name.clone(),
                        row: row_idx,
                        message: format!("non-finite value: {cell:?}"),
                    });
                }
                columns.get_mut(name).expect("known header").push(value);
            }
        }
        Self::from_columns(columns)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn has(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&[Scalar], CalibrationError> {
        self.columns
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| CalibrationError::ColumnMissing(name.to_string()))
    }
}

/// Sidecar mapping of table columns onto calibration roles.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnRoles {
    pub physical: PhysicalRoles,
    /// The H-channel surrogate series, scored against throughput.
    pub h_surrogates: Vec<String>,
    /// M-channel mixture: rate-based components and level indicators,
    /// scored against the memory-pressure delta.
    pub m_rates: Vec<String>,
    pub m_levels: Vec<String>,
    /// Handshake proxies scored against throughput, capped by budget.
    pub m_handshakes: Vec<String>,
    /// UI churn column scored against memory pressure.
    pub m_churn: Option<String>,
    /// R-channel corroborators scored against memory pressure.
    pub r_components: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalRoles {
    pub throughput: String,
    pub memory: String,
}

impl ColumnRoles {
    pub fn from_json(text: &str) -> Result<Self, CalibrationError> {
        serde_json::from_str(text).map_err(|e| CalibrationError::Malformed(e.to_string()))
    }
}

/// Tuning knobs with the shipped defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationOptions {
    pub q: Scalar,
    pub spillover_cap: Scalar,
    pub handshake_budget: Scalar,
    pub churn_cap: Scalar,
    /// Gate quantile (percent) over the composite R distribution.
    pub gate_percentile: Scalar,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            q: 0.05,
            spillover_cap: 0.2,
            handshake_budget: 0.25,
            churn_cap: 0.2,
            gate_percentile: 80.0,
        }
    }
}

/// One scored surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateScore {
    pub name: String,
    pub strength: Scalar,
    pub p_value: Scalar,
    pub significant: bool,
    /// Zero when shrunk.
    pub weight: Scalar,
}

fn score_family(
    table: &PairedDeltaTable,
    names: &[String],
    target: &[Scalar],
    q: Scalar,
) -> Result<Vec<SurrogateScore>, CalibrationError> {
    let mut scores = Vec::with_capacity(names.len());
    for name in names {
        let series = table.get(name)?;
        let corr = blended_strength(series, target)?;
        scores.push(SurrogateScore {
            name: name.clone(),
            strength: corr.strength,
            p_value: corr.p_value,
            significant: false,
            weight: 0.0,
        });
    }
    let p_values: Vec<Scalar> = scores.iter().map(|s| s.p_value).collect();
    if !p_values.is_empty() {
        let rejected = bh_select(&p_values, q)?;
        for (i, score) in scores.iter_mut().enumerate() {
            score.significant = rejected.contains(&i);
        }
    }
    Ok(scores)
}

fn normalise_survivors(scores: &mut [SurrogateScore]) -> bool {
    let total: Scalar = scores
        .iter()
        .filter(|s| s.significant)
        .map(|s| s.strength)
        .sum();
    if total <= 0.0 {
        return false;
    }
    for s in scores.iter_mut() {
        s.weight = if s.significant { s.strength / total } else { 0.0 };
    }
    true
}

/// H-channel calibration output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HCalibration {
    pub surrogates: Vec<SurrogateScore>,
    /// All-shrunk fallback engaged: uniform weights, treat with suspicion.
    pub uniform_fallback: bool,
    /// Spillover multipliers (kappa_L, kappa_P, kappa_H analogues).
    pub spillover: Scalar,
    /// Strength of raw traffic volume against its own lag; reported only,
    /// never applied.
    pub baseline_anchor: Scalar,
}

/// Normalise surrogate correlation strengths into H weights, shrinking
/// non-significant surrogates to zero; derive the spillover budget from the
/// memory/throughput cross-correlation.
pub fn calibrate_h(
    table: &PairedDeltaTable,
    roles: &ColumnRoles,
    opts: &CalibrationOptions,
) -> Result<HCalibration, CalibrationError> {
    let throughput = table.get(&roles.physical.throughput)?;
    let mut surrogates = score_family(table, &roles.h_surrogates, throughput, opts.q)?;

    let uniform_fallback = !normalise_survivors(&mut surrogates);
    if uniform_fallback && !surrogates.is_empty() {
        log::warn!(
            "calibration: every H surrogate was shrunk; falling back to uniform weights — treat this configuration as uncalibrated"
        );
        let uniform = 1.0 / surrogates.len() as Scalar;
        for s in surrogates.iter_mut() {
            s.weight = uniform;
        }
    }

    let memory = table.get(&roles.physical.memory)?;
    let cross = blended_strength(memory, throughput)?;
    let spillover = (cross.strength * opts.spillover_cap).clamp(0.0, opts.spillover_cap);

    let lagged = &throughput[..throughput.len() - 1];
    let lead = &throughput[1..];
    let baseline_anchor = if lead.len() >= 3 {
        blended_strength(lagged, lead)?.strength
    } else {
        0.0
    };

    Ok(HCalibration {
        surrogates,
        uniform_fallback,
        spillover,
        baseline_anchor,
    })
}

/// M-channel calibration output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCalibration {
    /// Rates then levels, in role order.
    pub mixture: Vec<SurrogateScore>,
    pub rate_count: usize,
    /// True when the rates-dominate prior forced a level rescale.
    pub rebalanced: bool,
    pub handshakes: Vec<SurrogateScore>,
    pub churn: Option<SurrogateScore>,
}

/// Derive the memory mixture (rates + levels vs memory-pressure deltas),
/// enforce the rates >= levels prior by scaling levels down, and budget the
/// handshake/churn spillovers.
pub fn calibrate_m(
    table: &PairedDeltaTable,
    roles: &ColumnRoles,
    opts: &CalibrationOptions,
) -> Result<MCalibration, CalibrationError> {
    let memory = table.get(&roles.physical.memory)?;
    let throughput = table.get(&roles.physical.throughput)?;

    let mut names = roles.m_rates.clone();
    names.extend(roles.m_levels.iter().cloned());
    let mut mixture = score_family(table, &names, memory, opts.q)?;
    let rate_count = roles.m_rates.len();

    let any = normalise_survivors(&mut mixture);
    let mut rebalanced = false;
    if any {
        let rate_sum: Scalar = mixture[..rate_count].iter().map(|s| s.weight).sum();
        let level_sum: Scalar = mixture[rate_count..].iter().map(|s| s.weight).sum();
        if level_sum > rate_sum {
            // soft prior: rate-based components keep at least level influence
            let factor = if level_sum > 0.0 { rate_sum / level_sum } else { 0.0 };
            for s in mixture[rate_count..].iter_mut() {
                s.weight *= factor;
            }
            rebalanced = true;
        }
    }

    let mut handshakes = score_family(table, &roles.m_handshakes, throughput, opts.q)?;
    for s in handshakes.iter_mut() {
        s.weight = if s.significant { s.strength } else { 0.0 };
    }
    let total: Scalar = handshakes.iter().map(|s| s.weight).sum();
    if total > opts.handshake_budget && total > 0.0 {
        let factor = opts.handshake_budget / total;
        for s in handshakes.iter_mut() {
            s.weight *= factor;
        }
    }

    let churn = match &roles.m_churn {
        Some(name) => {
            let mut scored = score_family(table, std::slice::from_ref(name), memory, opts.q)?;
            let mut s = scored.remove(0);
            s.weight = if s.significant {
                s.strength.min(opts.churn_cap)
            } else {
                0.0
            };
            Some(s)
        }
        None => None,
    };

    Ok(MCalibration {
        mixture,
        rate_count,
        rebalanced,
        handshakes,
        churn,
    })
}

/// R-channel calibration output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RCalibration {
    /// In role order; absent columns carry weight 0 and `available = false`.
    pub mixture: Vec<SurrogateScore>,
    pub available: Vec<bool>,
    /// Default distribution engaged because every candidate column was
    /// absent.
    pub used_default: bool,
    /// Sustained-elevation gate from the composite distribution.
    pub gate: Scalar,
}

const R_DEFAULT_MIXTURE: [Scalar; 4] = [0.3, 0.3, 0.25, 0.15];
const R_DEFAULT_GATE: Scalar = 0.20;

/// Score the scheduler-side corroborators against memory-pressure deltas,
/// renormalising over the available surviving subset; revert to the shipped
/// default distribution only when every candidate is absent.
pub fn calibrate_r(
    table: &PairedDeltaTable,
    roles: &ColumnRoles,
    opts: &CalibrationOptions,
) -> Result<RCalibration, CalibrationError> {
    let memory = table.get(&roles.physical.memory)?;
    let available: Vec<bool> = roles.r_components.iter().map(|n| table.has(n)).collect();
    let present: Vec<String> = roles
        .r_components
        .iter()
        .zip(&available)
        .filter(|(_, ok)| **ok)
        .map(|(n, _)| n.clone())
        .collect();

    if present.is_empty() {
        let mixture = roles
            .r_components
            .iter()
            .enumerate()
            .map(|(i, name)| SurrogateScore {
                name: name.clone(),
                strength: 0.0,
                p_value: 1.0,
                significant: false,
                weight: R_DEFAULT_MIXTURE.get(i).copied().unwrap_or(0.0),
            })
            .collect();
        return Ok(RCalibration {
            mixture,
            available,
            used_default: true,
            gate: R_DEFAULT_GATE,
        });
    }

    let mut present_scores = score_family(table, &present, memory, opts.q)?;
    normalise_survivors(&mut present_scores);

    // composite over the weighted rank-normalised survivors drives the gate
    let rows = table.rows();
    let mut composite = vec![0.0; rows];
    for s in &present_scores {
        if s.weight > 0.0 {
            let ranked = rank_normalise(table.get(&s.name)?);
            for (acc, v) in composite.iter_mut().zip(ranked) {
                *acc += s.weight * v;
            }
        }
    }
    let gate = percentile_nearest_rank(&composite, opts.gate_percentile)
        .unwrap_or(R_DEFAULT_GATE);

    let mut by_name: BTreeMap<String, SurrogateScore> = present_scores
        .into_iter()
        .map(|s| (s.name.clone(), s))
        .collect();
    let mixture = roles
        .r_components
        .iter()
        .map(|name| {
            by_name.remove(name).unwrap_or(SurrogateScore {
                name: name.clone(),
                strength: 0.0,
                p_value: 1.0,
                significant: false,
                weight: 0.0,
            })
        })
        .collect();

    Ok(RCalibration {
        mixture,
        available,
        used_default: false,
        gate,
    })
}

/// Render the calibration results as a TOML fragment mergeable into the
/// main config. Canonical surrogate names map onto channel weight keys;
/// anything else is reported in the results but not emitted.
pub fn emit_config_fragment(
    h: Option<&HCalibration>,
    m: Option<&MCalibration>,
    r: Option<&RCalibration>,
) -> String {
    let mut out = String::new();
    if let Some(h) = h {
        out.push_str("[channels.h]\n");
        const KEYS: [(&str, &str); 6] = [
            ("requests", "w_r"),
            ("failures", "w_f"),
            ("cross_domain", "w_x"),
            ("reputation", "w_e"),
            ("trackers", "w_t"),
            ("malicious_bytes", "w_m"),
        ];
        for s in &h.surrogates {
            if let Some((_, key)) = KEYS.iter().find(|(name, _)| *name == s.name) {
                out.push_str(&format!("{key} = {}\n", s.weight));
            }
        }
        out.push_str(&format!("kappa_l = {}\n", h.spillover));
        out.push_str(&format!("kappa_p = {}\n", h.spillover));
        out.push_str(&format!("kappa_h = {}\n", h.spillover));
        out.push_str(&format!("# baseline_anchor = {} (reported, not applied)\n", h.baseline_anchor));
        out.push('\n');
    }
    if let Some(m) = m {
        out.push_str("[channels.m]\n");
        let alphas: Vec<String> = m
            .mixture
            .iter()
            .take(4)
            .map(|s| s.weight.to_string())
            .collect();
        out.push_str(&format!("alpha = [{}]\n", alphas.join(", ")));
        if let Some(s) = m.handshakes.first() {
            out.push_str(&format!("beta_ipc = {}\n", s.weight));
        }
        if let Some(s) = m.handshakes.get(1) {
            out.push_str(&format!("beta_wv = {}\n", s.weight));
        }
        if let Some(churn) = &m.churn {
            out.push_str(&format!("gamma_ui = {}\n", churn.weight));
        }
        out.push('\n');
    }
    if let Some(r) = r {
        out.push_str("[channels.r]\n");
        let alphas: Vec<String> = r
            .mixture
            .iter()
            .take(4)
            .map(|s| s.weight.to_string())
            .collect();
        out.push_str(&format!("alpha = [{}]\n", alphas.join(", ")));
        out.push_str(&format!("tau_mem = {}\n", r.gate));
        out.push('\n');
    }
    out
}
