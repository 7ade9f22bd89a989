//! Scenario-level checks on the synthetic bundles: where anomalies land and
//! how the quiet shapes score.

use uixpose_core::alignment::Verdict;
use uixpose_core::config::EngineConfig;
use uixpose_core::fixtures::{gen_fixture, FixtureKind};
use uixpose_core::pipeline::run_session;
use uixpose_core::providers::ProviderChain;
use uixpose_core::telemetry::{load_session, LoadOptions};

fn analyse(kind: FixtureKind, seed: u64, steps: usize) -> uixpose_core::SessionReport {
    let tmp = tempfile::tempdir().unwrap();
    gen_fixture(kind, tmp.path(), seed, steps).unwrap();
    let bundle = load_session(tmp.path(), &LoadOptions::default()).unwrap();
    let cfg = EngineConfig::default();
    let chain = ProviderChain::from_config(&cfg.provider, tmp.path());
    run_session(&bundle, &cfg, &chain)
}

#[test]
fn benign_idle_scores_uncertain_never_anomalous() {
    let report = analyse(FixtureKind::BenignIdle, 7, 60);
    assert_eq!(report.totals.anomaly, 0);
    assert_eq!(report.totals.uncertain, 60);
}

#[test]
fn crash_burst_anomalies_concentrate_on_crash_indicators() {
    let report = analyse(FixtureKind::CrashBurst, 7, 60);
    assert!(report.totals.anomaly >= 1, "crash bursts must surface");
    // every anomaly sits on a step whose UI showed the crash dialog; the
    // control-panel steps around the bursts stay clean
    for step in &report.steps {
        if step.alignment.verdict == Verdict::Anomaly {
            assert_eq!(
                step.ui_class.as_deref(),
                Some("Crash dialog / app info"),
                "anomaly outside a crash step at {}",
                step.step
            );
        }
    }
    let crash_row = report
        .by_class
        .iter()
        .find(|r| r.ui_class == "Crash dialog / app info")
        .expect("crash class present");
    assert!(crash_row.anomaly > crash_row.authorised);
}

#[test]
fn exfil_anomalies_persist_across_seeds() {
    for seed in [1, 7, 99] {
        let report = analyse(FixtureKind::Exfil, seed, 30);
        assert!(
            report.totals.anomaly as f64 >= 0.8 * report.totals.steps as f64,
            "seed {seed}: only {}/{} anomalies",
            report.totals.anomaly,
            report.totals.steps
        );
    }
}

#[test]
fn benign_heavy_stays_authorised_across_seeds() {
    for seed in [1, 7, 99] {
        let report = analyse(FixtureKind::BenignHeavy, seed, 30);
        assert_eq!(report.totals.anomaly, 0, "seed {seed}");
        assert!(report.totals.authorised as f64 >= 0.8 * report.totals.steps as f64);
    }
}
