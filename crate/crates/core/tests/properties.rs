//! Property suites for the cross-module invariants: validation totality,
//! intent boundedness/monotonicity, fusion bounds, streaming scale sanity,
//! and step independence under stateless streaming config.

use proptest::prelude::*;

use uixpose_core::alignment::{fuse, FusionConfig};
use uixpose_core::channels::{
    growth_rate, ChannelEvidence, ChannelId, HChannel, HChannelConfig, MChannel, MChannelConfig,
    RChannel, RChannelConfig, StreamConfig,
};
use uixpose_core::evidence::{
    validate_evidence, BBox, ComponentKind, EvidencePack, MediaState, UIComponent,
};
use uixpose_core::intent::{compute_intent, AxisConstants, StateParams, UIImpactPrior};
use uixpose_core::telemetry::{MeminfoSnapshot, ProcSnapshot};
use uixpose_core::Scalar;

fn component_strategy() -> impl Strategy<Value = UIComponent> {
    (
        0..ComponentKind::ALL.len(),
        0i64..2000,
        0i64..2000,
        1i64..500,
        1i64..500,
        0.0f64..=1.0,
    )
        .prop_map(|(k, x, y, w, h, confidence)| UIComponent {
            kind: ComponentKind::ALL[k],
            bbox: BBox([x, y, x + w, y + h]),
            visible_text: None,
            confidence,
        })
}

fn pack_strategy() -> impl Strategy<Value = EvidencePack> {
    (
        prop::collection::vec(component_strategy(), 0..100),
        any::<bool>(),
        any::<bool>(),
        any::<bool>(),
        0..3usize,
        prop::option::of(0.0f64..=1.0),
    )
        .prop_map(|(components, spinner, error, empty, media, ratio)| {
            let mut pack = EvidencePack {
                components,
                ..Default::default()
            };
            pack.state_indicators.loading_spinner_visible = spinner;
            pack.state_indicators.error_banner_visible = error;
            pack.state_indicators.empty_state_visible = empty;
            pack.state_indicators.media_state =
                [MediaState::Inactive, MediaState::Paused, MediaState::Playing][media];
            pack.state_indicators.progress_determinate_ratio = ratio;
            pack
        })
}

proptest! {
    // Validation is total: any byte soup terminates in a pack or an error
    // list, never a panic.
    #[test]
    fn validation_total_over_arbitrary_text(raw in ".*") {
        let _ = validate_evidence(&raw);
    }

    #[test]
    fn validation_total_over_arbitrary_json(value in proptest::arbitrary::any::<bool>(), n in 0u32..500) {
        let raw = format!("{{\"components\":{value},\"step\":{n},\"unknown\":[{n}]}}");
        let _ = validate_evidence(&raw);
    }

    // Serialising a valid pack and re-validating yields a structurally
    // equal pack.
    #[test]
    fn evidence_round_trip(pack in pack_strategy()) {
        let json = pack.to_json();
        let revalidated = validate_evidence(&json).expect("serialised pack re-validates");
        prop_assert_eq!(pack, revalidated.pack);
    }

    // Output stays in [0,1]^3 for any valid input, however dense the screen,
    // and identical inputs reproduce identical outputs.
    #[test]
    fn intent_bounded_and_deterministic(pack in pack_strategy()) {
        let prior = UIImpactPrior::default();
        let constants = AxisConstants::default();
        let sp = StateParams::default();
        let one = compute_intent(&pack, &prior, &constants, &sp);
        for v in one.intent.as_array() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let two = compute_intent(&pack, &prior, &constants, &sp);
        prop_assert_eq!(one, two);
    }

    // Fused behaviour stays in [0,1]^3 under arbitrary masking.
    #[test]
    fn fusion_bounded(
        s in prop::array::uniform3(prop::array::uniform3(0.0f64..=1.0)),
        masks in prop::array::uniform3(any::<bool>()),
    ) {
        let mk = |i: usize, ch| if masks[i] {
            ChannelEvidence::present(ch, 0, s[i])
        } else {
            ChannelEvidence::masked(ch, 0)
        };
        let b = fuse(
            &mk(0, ChannelId::H),
            &mk(1, ChannelId::M),
            &mk(2, ChannelId::R),
            &FusionConfig::default(),
        );
        for v in b.as_array() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(b.scored, masks.iter().any(|m| *m));
    }

    // Scale sanity: doubling the interval with unchanged counter deltas
    // halves every rate precursor exactly.
    #[test]
    fn rate_halves_when_interval_doubles(
        prev in 0.0f64..1e9,
        delta in 0.0f64..1e9,
        dt in 0.001f64..3600.0,
    ) {
        let curr = prev + delta;
        let fast = growth_rate(curr, prev, dt);
        let slow = growth_rate(curr, prev, 2.0 * dt);
        prop_assert_eq!(slow, fast / 2.0);
    }
}

/// With W = 1, alpha_ewma = 1, and gates off, a step's channel output is a
/// pure function of that step's inputs (plus its immediate predecessor for
/// the finite differences) — history beyond that cannot leak in.
#[test]
fn step_independence_under_stateless_config() {
    let stream = StreamConfig {
        alpha_ewma: 1.0,
        window: 1,
        epsilon: 1e-9,
    };
    let mut m_cfg = MChannelConfig::default();
    m_cfg.tau_mem = 0.0;
    m_cfg.gate_window = 1;
    let mut r_cfg = RChannelConfig::default();
    r_cfg.tau_mem = 0.0;
    r_cfg.gate_window = 1;
    r_cfg.gamma = [0.8, 0.0]; // volatility is rolling-window state by definition

    let snap = |pss: u64, alloc: u64| MeminfoSnapshot {
        pss_total_kb: pss,
        heap_alloc_kb: alloc,
        heap_size_kb: 100_000,
        swap_pss_dirty_kb: 7,
        local_binders: 10,
        proxy_binders: 10,
        parcel_count: 10,
        webviews: 1,
        views: 100,
        view_root_impl: 3,
        timestamp_ms: 0,
    };
    let proc = |cpu: f64, mem: f64| ProcSnapshot {
        cpu_pct: cpu,
        mem_pct: mem,
        res_kb: 100_000,
        virt_kb: 400_000,
        shr_kb: 50_000,
        cores: 4,
        timestamp_ms: 0,
    };

    // the (prev, curr) pair of interest, preceded by different histories
    let histories: [Vec<(u64, u64, f64, f64)>; 3] = [
        vec![],
        vec![(10_000, 5_000, 40.0, 1.0)],
        vec![(900_000, 800_000, 390.0, 9.0), (20_000, 1_000, 5.0, 0.5)],
    ];
    let mut outputs: Vec<([Scalar; 3], [Scalar; 3])> = Vec::new();
    for history in &histories {
        let mut m = MChannel::new(m_cfg, &stream);
        let mut r = RChannel::new(r_cfg, &stream);
        let mut step = 0u64;
        for (pss, alloc, cpu, mem) in history {
            m.step(Some(&snap(*pss, *alloc)), 5.0, step);
            r.step(Some(&proc(*cpu, *mem)), 5.0, step);
            step += 1;
        }
        // the pair under test
        m.step(Some(&snap(50_000, 20_000)), 5.0, step);
        r.step(Some(&proc(120.0, 4.0)), 5.0, step);
        let em = m.step(Some(&snap(60_000, 30_000)), 5.0, step + 1).unwrap();
        let er = r.step(Some(&proc(240.0, 5.0)), 5.0, step + 1);
        outputs.push((em.s, er.s));
    }
    for pair in outputs.windows(2) {
        assert_eq!(pair[0], pair[1], "history leaked into stateless-config output");
    }

    // H channel: no flow state in play (no prev-window dependence used here)
    let mut outputs_h: Vec<[Scalar; 3]> = Vec::new();
    let rec: uixpose_core::telemetry::HttpRecord = serde_json::from_str(
        r#"{"method":"GET","status":200,"body_size":1000,"reputation":0.9}"#,
    )
    .unwrap();
    for warmup in [0usize, 3] {
        let mut h = HChannel::new(HChannelConfig::default(), &stream, Default::default());
        let mut step = 0u64;
        for _ in 0..warmup {
            let noise: uixpose_core::telemetry::HttpRecord = serde_json::from_str(
                r#"{"method":"POST","status":500,"body_size":999999,"reputation":0.0,"tracker_match":true}"#,
            )
            .unwrap();
            h.step(None, std::slice::from_ref(&noise), 5.0, step);
            step += 1;
        }
        let (e, _) = h.step(None, std::slice::from_ref(&rec), 5.0, step);
        outputs_h.push(e.s);
    }
    assert_eq!(outputs_h[0], outputs_h[1]);
}

#[test]
fn h_default_baselines_available() {
    // Default::default() for Baselines is used by the stateless-config test
    let b = uixpose_core::channels::Baselines::default();
    assert!(b.method_rarity("GET") < b.method_rarity("TRACE"));
}
