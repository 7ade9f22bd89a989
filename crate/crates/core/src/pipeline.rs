//! Session orchestration: per step, obtain intent, run the channel
//! extractors, fuse, align, judge, and verdict; accumulate streaming state
//! and the intent context; emit the report model.
//!
//! One session is one sequential pipeline (the streaming statistics are
//! stateful); distinct sessions run in parallel with isolated state.

use std::collections::VecDeque;

pub use crate::report::{SessionReport, StepRecord};

use crate::alignment::{fuse, score_step, BehaviourVector, JudgeInput};
use crate::channels::{Baselines, ChannelEvidence, ChannelId, HChannel, MChannel, RChannel};
use crate::config::{EngineConfig, ProviderMode};
use crate::evidence::IntentContext;
use crate::intent::{compute_intent, IntentVector};
use crate::providers::{EvidenceRequest, ProviderChain, ProviderError};
use crate::report::{aggregate_by_class, totals, ChannelDiagnostics};
use crate::telemetry::SessionBundle;

fn load_baselines(cfg: &EngineConfig) -> Baselines {
    match (&cfg.telemetry.method_freq, &cfg.telemetry.expected_headers) {
        (Some(methods), Some(headers)) => match Baselines::from_files(methods, headers) {
            Ok(b) => b,
            Err(e) => {
                log::warn!("baseline tables unreadable ({e}); using shipped defaults");
                Baselines::default()
            }
        },
        _ => Baselines::default(),
    }
}

/// Run a loaded session bundle through the full scoring pipeline.
pub fn run_session(
    bundle: &SessionBundle,
    cfg: &EngineConfig,
    chain: &ProviderChain,
) -> SessionReport {
    let stream = cfg.channels.stream();
    let mut h_channel = HChannel::new(cfg.channels.h, &stream, load_baselines(cfg));
    let mut m_channel = MChannel::new(cfg.channels.m, &stream);
    let mut r_channel = RChannel::new(cfg.channels.r, &stream);

    let history_cap = cfg.pipeline.history.max(1);
    let mut intent_context = IntentContext::new(history_cap);
    let mut judge_history: VecDeque<(IntentVector, BehaviourVector)> =
        VecDeque::with_capacity(history_cap);

    let delta_t = cfg.telemetry.delta_t_s.unwrap_or(bundle.delta_t_s);
    let refresh_evidence = cfg.provider.mode == ProviderMode::Replay;

    let mut records = Vec::with_capacity(bundle.steps.len());
    for step in &bundle.steps {
        let mut notes = step.diagnostics.clone();

        // Evidence comes from the bundle; a replay provider may override it
        // with a recorded pack (validated on the way in).
        let mut evidence = &step.evidence;
        let provider_pack;
        if refresh_evidence {
            let request = EvidenceRequest {
                step: step.index,
                screenshot: step.screenshot.clone(),
                context: intent_context.history().to_vec(),
            };
            match chain.evidence(&request) {
                Ok((answer, provider, _)) => {
                    provider_pack = answer.pack;
                    evidence = &provider_pack;
                    notes.push(format!("evidence refreshed from {provider} provider"));
                }
                Err(ProviderError::Exhausted(_)) => {} // nothing recorded: stored evidence stands
                Err(e) => notes.push(format!("evidence provider error, using stored: {e}")),
            }
        }

        let intent_out = compute_intent(evidence, &cfg.prior, &cfg.constants, &cfg.state_params);
        let intent = intent_out.intent;

        let (h, h_warnings) = h_channel.step(
            step.flows.as_ref(),
            &step.http,
            delta_t,
            step.index,
        );
        notes.extend(h_warnings);
        let m = m_channel
            .step(step.meminfo.as_ref(), delta_t, step.index)
            .unwrap_or_else(|| ChannelEvidence::masked(ChannelId::M, step.index));
        let r = r_channel.step(step.proc.as_ref(), delta_t, step.index);

        let behaviour = fuse(&h, &m, &r, &cfg.fusion);

        let judge_input = JudgeInput {
            screenshot: step.screenshot.clone(),
            intent,
            behaviour,
            history: judge_history.iter().cloned().collect(),
            indicators: evidence.state_indicators.clone(),
            component_kinds: evidence.components.iter().map(|c| c.kind).collect(),
        };
        let judge = chain.judge(step.index, &judge_input);
        notes.extend(judge.notes.iter().cloned());

        let alignment = score_step(step.index, &intent, &behaviour, judge.confidence, &cfg.fusion);

        intent_context.push(intent, evidence.primary_goal().to_string());
        if judge_history.len() == history_cap {
            judge_history.pop_front();
        }
        judge_history.push_back((intent, behaviour));

        records.push(StepRecord {
            step: step.index,
            ui_class: evidence.ui_class().map(|s| s.to_string()),
            intent,
            behaviour,
            alignment,
            channels: ChannelDiagnostics {
                h_present: h.mask,
                m_present: m.mask,
                r_present: r.mask,
                skipped_components: intent_out.skipped_components,
                notes,
            },
            judge_provider: judge.provider.to_string(),
            judge_degraded: judge.degraded,
        });
    }

    SessionReport {
        package: bundle.meta.package.clone(),
        delta_t_s: delta_t,
        totals: totals(&records),
        by_class: aggregate_by_class(&records),
        steps: records,
        config: cfg.snapshot(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::Verdict;
    use crate::providers::ProviderChain;
    use std::fs;
    use std::path::Path;

    fn write_step(root: &Path, i: u64, evidence: &str, telemetry: bool) {
        let dir = root.join("steps").join(format!("{i:04}"));
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("evidence.json"), evidence).unwrap();
        if telemetry {
            fs::write(
                dir.join("meminfo.txt"),
                format!(
                    "TOTAL PSS: {}\nHeap Size: 100000\nHeap Alloc: {}\nViews: {}\nViewRootImpl: 3\nLocal Binders: 30\nProxy Binders: 20\nParcel count: 40\nWebViews: 1\nTOTAL SWAP PSS: 0\n",
                    80_000 + i * 1500,
                    40_000 + i * 800,
                    120 + i * 5
                ),
            )
            .unwrap();
            fs::write(
                dir.join("top.txt"),
                format!(
                    " 4242 u0_a1 20 0 1200000 {} 50000 S {} 4.0 0:01.00 app\n",
                    300_000 + i * 1000,
                    120 + (i % 3) * 10
                ),
            )
            .unwrap();
        }
    }

    fn idle_evidence(i: u64) -> String {
        format!(
            r#"{{"components":[{{"kind":"Text","bbox":[0,0,100,40],"confidence":0.9}}],
                "state_indicators":{{"empty_state_visible":true,"evidence":{{"empty_state_visible":{{"text":"No items"}}}}}},
                "screen_summary":{{"description":"idle","primary_goal":"none","evidence_bullets":["a","b"],"ui_class":"Idle"}},
                "step":{i},"timestamp":{}}}"#,
            i * 5000
        )
    }

    fn bundle(root: &Path, n: u64, telemetry: bool) -> crate::telemetry::SessionBundle {
        fs::write(
            root.join("meta.json"),
            r#"{"format_version":1,"package":"com.test","cores":4,"delta_t_s":5.0}"#,
        )
        .unwrap();
        for i in 0..n {
            write_step(root, i, &idle_evidence(i), telemetry);
        }
        crate::telemetry::load_session(root, &crate::telemetry::LoadOptions::default()).unwrap()
    }

    #[test]
    fn zero_telemetry_session_is_all_uncertain() {
        let tmp = tempfile::tempdir().unwrap();
        let bundle = bundle(tmp.path(), 3, false);
        let cfg = EngineConfig::default();
        let chain = ProviderChain::from_config(&cfg.provider, tmp.path());
        let report = run_session(&bundle, &cfg, &chain);
        assert_eq!(report.totals.steps, 3);
        assert_eq!(report.totals.anomaly, 0);
        assert_eq!(report.totals.uncertain, 3);
        assert_eq!(report.totals.scored, 0);
        for s in &report.steps {
            assert_eq!(s.alignment.verdict, Verdict::Uncertain);
            assert!(!s.behaviour.scored);
        }
    }

    #[test]
    fn replay_runs_are_byte_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let bundle = bundle(tmp.path(), 5, true);
        let mut cfg = EngineConfig::default();
        cfg.provider.mode = ProviderMode::Replay;
        // one recorded judge response; the rest fall back to builtin
        fs::create_dir_all(tmp.path().join("providers")).unwrap();
        fs::write(
            tmp.path().join("providers/2.json"),
            r#"{"confidence":0.77}"#,
        )
        .unwrap();
        let chain = ProviderChain::from_config(&cfg.provider, tmp.path());
        let a = run_session(&bundle, &cfg, &chain).to_json();
        let b = run_session(&bundle, &cfg, &chain).to_json();
        assert_eq!(a, b);
        assert!(a.contains("\"judge_provider\": \"replay\""));
    }

    #[test]
    fn degraded_steps_are_flagged() {
        let tmp = tempfile::tempdir().unwrap();
        let bundle = bundle(tmp.path(), 2, true);
        let mut cfg = EngineConfig::default();
        cfg.provider.mode = ProviderMode::Replay; // no recorded files at all
        let chain = ProviderChain::from_config(&cfg.provider, tmp.path());
        let report = run_session(&bundle, &cfg, &chain);
        assert_eq!(report.totals.degraded, report.totals.steps);
        assert!(report.steps.iter().all(|s| s.judge_provider == "builtin"));
    }

    #[test]
    fn class_counts_conserve_step_total() {
        let tmp = tempfile::tempdir().unwrap();
        let bundle = bundle(tmp.path(), 4, true);
        let cfg = EngineConfig::default();
        let chain = ProviderChain::from_config(&cfg.provider, tmp.path());
        let report = run_session(&bundle, &cfg, &chain);
        let sum: u64 = report.by_class.iter().map(|r| r.total()).sum();
        assert_eq!(sum, report.totals.steps);
    }
}
