//! Report model and writers: full JSON, a per-step CSV table, and a
//! plot-ready predicted-vs-observed series file.
//!
//! Everything in here is deterministic — ordered collections, no
//! wall-clock — so replaying a session byte-reproduces the report.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::{AlignmentResult, BehaviourVector, Verdict};
use crate::intent::IntentVector;

/// Per-step channel bookkeeping.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelDiagnostics {
    pub h_present: bool,
    pub m_present: bool,
    pub r_present: bool,
    pub skipped_components: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// One scored step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ui_class: Option<String>,
    pub intent: IntentVector,
    pub behaviour: BehaviourVector,
    pub alignment: AlignmentResult,
    pub channels: ChannelDiagnostics,
    pub judge_provider: String,
    pub judge_degraded: bool,
}

impl StepRecord {
    pub fn class_label(&self) -> &str {
        self.ui_class.as_deref().unwrap_or("Unlabelled")
    }
}

/// Verdict counts for one UI class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRow {
    pub ui_class: String,
    pub authorised: u64,
    pub anomaly: u64,
    pub uncertain: u64,
}

impl ClassRow {
    pub fn total(&self) -> u64 {
        self.authorised + self.anomaly + self.uncertain
    }
}

/// Group records by UI class (fallback label `"Unlabelled"`) and count
/// verdicts. Row order is class-name order; counts conserve the step total.
pub fn aggregate_by_class(records: &[StepRecord]) -> Vec<ClassRow> {
    let mut rows: BTreeMap<&str, ClassRow> = BTreeMap::new();
    for record in records {
        let row = rows
            .entry(record.class_label())
            .or_insert_with(|| ClassRow {
                ui_class: record.class_label().to_string(),
                authorised: 0,
                anomaly: 0,
                uncertain: 0,
            });
        match record.alignment.verdict {
            Verdict::Authorised => row.authorised += 1,
            Verdict::Anomaly => row.anomaly += 1,
            Verdict::Uncertain => row.uncertain += 1,
        }
    }
    rows.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub steps: u64,
    pub authorised: u64,
    pub anomaly: u64,
    pub uncertain: u64,
    pub scored: u64,
    pub degraded: u64,
}

/// The full session report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub package: String,
    pub delta_t_s: f64,
    pub totals: Totals,
    pub by_class: Vec<ClassRow>,
    pub steps: Vec<StepRecord>,
    /// Resolved configuration (provider token redacted).
    pub config: serde_json::Value,
}

impl SessionReport {
    pub fn has_anomaly(&self) -> bool {
        self.totals.anomaly > 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Per-step CSV table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "step,ui_class,i_net,i_mem,i_res,b_net,b_mem,b_res,A,M,B,C,quadrant,verdict\n",
        );
        for r in &self.steps {
            let a = &r.alignment;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.step,
                csv_escape(r.class_label()),
                r.intent.net,
                r.intent.mem,
                r.intent.res,
                r.behaviour.net,
                r.behaviour.mem,
                r.behaviour.res,
                a.a,
                a.m,
                a.b_mag,
                a.c,
                csv_escape(a.quadrant.label()),
                a.verdict.as_str(),
            ));
        }
        out
    }

    /// Plot-ready predicted-vs-observed series per axis.
    pub fn to_series_csv(&self) -> String {
        let mut out =
            String::from("step,pred_net,obs_net,pred_mem,obs_mem,pred_res,obs_res\n");
        for r in &self.steps {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.step,
                r.intent.net,
                r.behaviour.net,
                r.intent.mem,
                r.behaviour.mem,
                r.intent.res,
                r.behaviour.res,
            ));
        }
        out
    }

    /// Write `report.json`, `report.csv`, and `series.csv` into `out_dir`.
    pub fn write_files(&self, out_dir: impl AsRef<Path>) -> std::io::Result<()> {
        let out_dir = out_dir.as_ref();
        std::fs::create_dir_all(out_dir)?;
        for (name, contents) in [
            ("report.json", self.to_json()),
            ("report.csv", self.to_csv()),
            ("series.csv", self.to_series_csv()),
        ] {
            let mut f = std::fs::File::create(out_dir.join(name))?;
            f.write_all(contents.as_bytes())?;
        }
        Ok(())
    }
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Compute totals from records.
pub fn totals(records: &[StepRecord]) -> Totals {
    let mut t = Totals {
        steps: records.len() as u64,
        ..Default::default()
    };
    for r in records {
        match r.alignment.verdict {
            Verdict::Authorised => t.authorised += 1,
            Verdict::Anomaly => t.anomaly += 1,
            Verdict::Uncertain => t.uncertain += 1,
        }
        if r.behaviour.scored {
            t.scored += 1;
        }
        if r.judge_degraded {
            t.degraded += 1;
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::Quadrant;
    use crate::intent::Axis;

    fn record(step: u64, ui_class: Option<&str>, verdict: Verdict) -> StepRecord {
        StepRecord {
            step,
            ui_class: ui_class.map(|s| s.to_string()),
            intent: IntentVector::new(0.5, 0.5, 0.5),
            behaviour: BehaviourVector {
                net: 0.1,
                mem: 0.1,
                res: 0.1,
                scored: true,
            },
            alignment: AlignmentResult {
                step,
                a: 0.8,
                m: 0.2,
                b_mag: 0.17,
                c: 0.5,
                quadrant: Quadrant::IdleSafe,
                verdict,
                reason: None,
                dominant: Axis::Net,
            },
            channels: ChannelDiagnostics::default(),
            judge_provider: "builtin".into(),
            judge_degraded: false,
        }
    }

    #[test]
    fn aggregate_counts_per_class() {
        let records = vec![
            record(0, Some("Settings"), Verdict::Authorised),
            record(1, Some("Settings"), Verdict::Authorised),
            record(2, Some("Settings"), Verdict::Anomaly),
        ];
        let rows = aggregate_by_class(&records);
        assert_eq!(rows.len(), 1);
        assert_eq!(
            (rows[0].authorised, rows[0].anomaly, rows[0].uncertain),
            (2, 1, 0)
        );
    }

    #[test]
    fn unlabelled_records_group_under_fallback() {
        let rows = aggregate_by_class(&[record(0, None, Verdict::Uncertain)]);
        assert_eq!(rows[0].ui_class, "Unlabelled");
    }

    #[test]
    fn counts_conserve_totals() {
        let records: Vec<StepRecord> = (0..30)
            .map(|i| {
                let verdict = match i % 3 {
                    0 => Verdict::Authorised,
                    1 => Verdict::Anomaly,
                    _ => Verdict::Uncertain,
                };
                let class = ["Home", "Search", "Settings"][(i % 3) as usize];
                record(i, Some(class), verdict)
            })
            .collect();
        let rows = aggregate_by_class(&records);
        let sum: u64 = rows.iter().map(|r| r.total()).sum();
        assert_eq!(sum, records.len() as u64);
        let t = totals(&records);
        assert_eq!(t.authorised + t.anomaly + t.uncertain, t.steps);
    }

    #[test]
    fn csv_has_documented_columns() {
        let report = SessionReport {
            package: "com.example".into(),
            delta_t_s: 5.0,
            totals: totals(&[record(0, Some("a,b"), Verdict::Authorised)]),
            by_class: vec![],
            steps: vec![record(0, Some("a,b"), Verdict::Authorised)],
            config: serde_json::json!({}),
        };
        let csv = report.to_csv();
        assert!(csv.starts_with(
            "step,ui_class,i_net,i_mem,i_res,b_net,b_mem,b_res,A,M,B,C,quadrant,verdict\n"
        ));
        assert!(csv.contains("\"a,b\"")); // comma-safe
        let series = report.to_series_csv();
        assert!(series.starts_with("step,pred_net,obs_net,pred_mem,obs_mem,pred_res,obs_res\n"));
    }
}
