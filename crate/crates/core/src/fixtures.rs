//! Deterministic synthetic session bundles for testing and demos.
//!
//! Four shapes:
//! - `benign-idle`: idle screens, zero telemetry; everything masked.
//! - `benign-heavy`: media-rich screens whose visible load matches the
//!   recorded network/memory/CPU activity.
//! - `exfil`: visually idle screens over sustained malicious flows and
//!   tracker-bound uploads (network-focused capture; no host snapshots).
//! - `crash-burst`: a modest app with crash clusters where memory/CPU spike
//!   behind error dialogs while meminfo dumps drop out.
//!
//! All randomness flows from the explicit seed; identical seeds reproduce
//! byte-identical bundles.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureKind {
    BenignIdle,
    BenignHeavy,
    Exfil,
    CrashBurst,
}

impl FixtureKind {
    pub const ALL: [FixtureKind; 4] = [
        FixtureKind::BenignIdle,
        FixtureKind::BenignHeavy,
        FixtureKind::Exfil,
        FixtureKind::CrashBurst,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FixtureKind::BenignIdle => "benign-idle",
            FixtureKind::BenignHeavy => "benign-heavy",
            FixtureKind::Exfil => "exfil",
            FixtureKind::CrashBurst => "crash-burst",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for FixtureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("unknown fixture kind {0:?} (expected benign-idle|benign-heavy|exfil|crash-burst)")]
    UnknownKind(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

const DT_MS: u64 = 5000;

struct StepSink<'a> {
    root: &'a Path,
    index: u64,
}

impl StepSink<'_> {
    fn dir(&self) -> std::path::PathBuf {
        self.root.join("steps").join(format!("{:04}", self.index))
    }

    fn write(&self, name: &str, contents: &str) -> std::io::Result<()> {
        std::fs::write(self.dir().join(name), contents)
    }
}

fn evidence_json(
    index: u64,
    components: &[(&str, [i64; 4], Option<&str>, f64)],
    indicators: &str,
    description: &str,
    goal: &str,
    ui_class: &str,
) -> String {
    let comps: Vec<String> = components
        .iter()
        .map(|(kind, bbox, text, conf)| {
            let text = match text {
                Some(t) => format!(",\"visible_text\":{}", serde_json::to_string(t).unwrap()),
                None => String::new(),
            };
            format!(
                r#"{{"kind":"{kind}","bbox":[{},{},{},{}]{text},"confidence":{conf}}}"#,
                bbox[0], bbox[1], bbox[2], bbox[3]
            )
        })
        .collect();
    format!(
        r#"{{"components":[{}],
  "state_indicators":{indicators},
  "screen_summary":{{"description":"{description}","primary_goal":"{goal}","evidence_bullets":["{description}","{goal}"],"ui_class":"{ui_class}"}},
  "step":{index},"timestamp":{}}}"#,
        comps.join(","),
        index * DT_MS
    )
}

fn meminfo_text(
    pss: u64,
    heap_alloc: u64,
    heap_size: u64,
    swap: u64,
    binders: (u64, u64, u64),
    webviews: u64,
    views: (u64, u64),
) -> String {
    format!(
        "Applications Memory Usage (in Kilobytes):\n\
         TOTAL PSS: {pss} TOTAL RSS: {} TOTAL SWAP PSS: {swap}\n\
         \n App Summary\n   Heap Size: {heap_size}\n   Heap Alloc: {heap_alloc}\n\
         \n Objects\n               Views: {}         ViewRootImpl: {}\n\
               Local Binders: {}        Proxy Binders: {}\n\
                Parcel count: {}\n            WebViews: {webviews}\n",
        pss + 20_000,
        views.0,
        views.1,
        binders.0,
        binders.1,
        binders.2,
    )
}

fn top_text(cpu: f64, mem_pct: f64, res: u64, shr: u64) -> String {
    format!(
        "  PID USER         PR  NI    VIRT    RES    SHR S  %CPU %MEM     TIME+ ARGS\n\
          4242 u0_a123      20   0 1400000 {res} {shr} S {cpu:.1} {mem_pct:.1}   0:12.34 com.example.fixture\n"
    )
}

#[allow(clippy::too_many_arguments)] // mirrors the record's field list
fn http_line(
    method: &str,
    status: Option<u16>,
    headers: &[&str],
    body: u64,
    entropy: f64,
    origin: &str,
    third_party: bool,
    tracker: bool,
    reputation: f64,
    in_flight: bool,
    ts: u64,
) -> String {
    let headers: Vec<String> = headers.iter().map(|h| format!("\"{h}\"")).collect();
    let status = match status {
        Some(s) => format!("\"status\":{s},"),
        None => String::new(),
    };
    format!(
        r#"{{"method":"{method}",{status}"headers_present":[{}],"body_size":{body},"body_entropy":{entropy:.2},"registrable_origin":"{origin}","is_third_party":{third_party},"tracker_match":{tracker},"reputation":{reputation:.2},"in_flight":{in_flight},"timestamp":{ts}}}"#,
        headers.join(",")
    )
}

const FULL_HEADERS: [&str; 6] = [
    "host",
    "user-agent",
    "accept",
    "accept-encoding",
    "accept-language",
    "connection",
];

/// Generate a synthetic bundle of the named shape. Identical seeds produce
/// byte-identical directories.
pub fn gen_fixture(
    kind: FixtureKind,
    out_dir: impl AsRef<Path>,
    seed: u64,
    steps: usize,
) -> Result<(), FixtureError> {
    let root = out_dir.as_ref();
    std::fs::create_dir_all(root.join("steps"))?;
    std::fs::write(
        root.join("meta.json"),
        format!(
            r#"{{"format_version":1,"package":"com.example.{}","cores":4,"delta_t_s":5.0}}"#,
            kind.as_str().replace('-', "_")
        ),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for index in 0..steps as u64 {
        let sink = StepSink { root, index };
        std::fs::create_dir_all(sink.dir())?;
        match kind {
            FixtureKind::BenignIdle => write_benign_idle(&sink, &mut rng)?,
            FixtureKind::BenignHeavy => write_benign_heavy(&sink, &mut rng)?,
            FixtureKind::Exfil => write_exfil(&sink, &mut rng)?,
            FixtureKind::CrashBurst => write_crash_burst(&sink, &mut rng, steps as u64)?,
        }
    }
    Ok(())
}

const EVIDENCED_EMPTY: &str = r#"{"empty_state_visible":true,"evidence":{"empty_state_visible":{"text":"Nothing here yet"}}}"#;

fn write_benign_idle(sink: &StepSink, rng: &mut ChaCha8Rng) -> std::io::Result<()> {
    let conf = 0.85 + rng.gen_range(0..10) as f64 / 100.0;
    sink.write(
        "evidence.json",
        &evidence_json(
            sink.index,
            &[("Text", [40, 200, 1040, 260], Some("Nothing here yet"), conf)],
            EVIDENCED_EMPTY,
            "Empty list screen",
            "Wait for content",
            "Idle / empty list",
        ),
    )
    // zero telemetry: every channel masks, steps stay unscored
}

fn write_benign_heavy(sink: &StepSink, rng: &mut ChaCha8Rng) -> std::io::Result<()> {
    let i = sink.index;
    if i == 0 {
        // splash: no telemetry yet
        return sink.write(
            "evidence.json",
            &evidence_json(
                i,
                &[("Text", [400, 900, 680, 960], Some("Starting"), 0.9)],
                EVIDENCED_EMPTY,
                "Splash screen",
                "Launch the app",
                "Splash / startup",
            ),
        );
    }

    // screens ramp with the channel warmup: modest chrome first, media later
    let media_phase = i >= 4;
    let evidence = if media_phase {
        evidence_json(
            i,
            &[
                ("Image", [0, 120, 1080, 1400], None, 0.92),
                ("Toolbar", [0, 0, 1080, 120], Some("Gallery"), 0.90),
                ("TextButton", [60, 1500, 400, 1580], Some("Share"), 0.80),
                ("Text", [60, 1420, 900, 1470], Some("Photo of the day"), 0.85),
            ],
            "{}",
            "Full-bleed photo view",
            "Browse the gallery",
            "Gallery / media view",
        )
    } else {
        evidence_json(
            i,
            &[
                ("Toolbar", [0, 0, 1080, 120], Some("Gallery"), 0.90),
                ("Text", [60, 200, 900, 250], Some("Albums"), 0.90),
                ("Text", [60, 280, 900, 330], Some("Recent"), 0.90),
                ("Icon", [980, 20, 1060, 100], None, 0.85),
            ],
            "{}",
            "Album list",
            "Pick an album",
            "Gallery / album list",
        )
    };
    sink.write("evidence.json", &evidence)?;

    sink.write(
        "meminfo.txt",
        &meminfo_text(
            80_000 + i * 1500,
            40_000 + i * 800,
            100_000,
            0,
            (30 + i * 2, 20 + i, 40 + i * 3),
            1 + i / 10,
            (120 + i * 5, 3),
        ),
    )?;
    let cpu = 140.0 + rng.gen_range(0..30) as f64;
    sink.write(
        "top.txt",
        &top_text(cpu, 4.0 + i as f64 * 0.05, 300_000 + i * 1000, 50_000),
    )?;

    let ts = i * DT_MS;
    let n_http = 2 + (rng.gen_range(0..2) as usize);
    let lines: Vec<String> = (0..n_http)
        .map(|k| {
            let body = 30_000 + rng.gen_range(0..60_000);
            http_line(
                "GET",
                Some(200),
                &FULL_HEADERS,
                body,
                6.8 + rng.gen_range(0..8) as f64 / 10.0,
                "cdn.gallery.example",
                false,
                false,
                1.0,
                false,
                ts + k as u64 * 300,
            )
        })
        .collect();
    sink.write("http.jsonl", &(lines.join("\n") + "\n"))?;

    sink.write(
        "flows.csv",
        &format!(
            "src_ip,dst_ip,src_port,dst_port,cumulative_bytes,malicious\n\
             10.0.2.16,151.101.1.195,50412,443,{},0\n",
            40_000 * i
        ),
    )
}

fn write_exfil(sink: &StepSink, rng: &mut ChaCha8Rng) -> std::io::Result<()> {
    let i = sink.index;
    sink.write(
        "evidence.json",
        &evidence_json(
            i,
            &[
                ("Text", [40, 300, 1040, 360], Some("No new messages"), 0.9),
                ("Text", [40, 400, 1040, 450], Some("Pull to refresh"), 0.85),
            ],
            EVIDENCED_EMPTY,
            "Idle inbox screen",
            "Wait for messages",
            "Inbox / idle",
        ),
    )?;
    if i == 0 {
        // capture starts with the first sampling interval; step 0 is bare
        return Ok(());
    }

    // sustained malicious flow plus tracker-bound uploads; host snapshots
    // (meminfo/top) were not captured in this network-focused recording
    let ts = i * DT_MS;
    let mal_bytes = 200_000 * i + rng.gen_range(0..5_000);
    sink.write(
        "flows.csv",
        &format!(
            "src_ip,dst_ip,src_port,dst_port,cumulative_bytes,malicious\n\
             10.0.2.16,185.220.101.7,50666,8443,{mal_bytes},1\n\
             10.0.2.16,151.101.1.195,50412,443,{},0\n",
            5_000 * i
        ),
    )?;
    let mut lines = vec![
        http_line(
            "POST",
            Some(200),
            &["host"],
            150_000 + rng.gen_range(0..250_000),
            7.9,
            "collect.tracker-net.example",
            true,
            true,
            0.05,
            false,
            ts,
        ),
        http_line(
            "POST",
            Some(200),
            &["host"],
            100_000 + rng.gen_range(0..100_000),
            7.9,
            "beacon.ads-metrics.example",
            true,
            true,
            0.10,
            false,
            ts + 900,
        ),
    ];
    if i.is_multiple_of(3) {
        lines.push(http_line(
            "POST",
            None,
            &["host"],
            80_000,
            7.8,
            "collect.tracker-net.example",
            true,
            true,
            0.05,
            true,
            ts + 1500,
        ));
    }
    sink.write("http.jsonl", &(lines.join("\n") + "\n"))
}

fn write_crash_burst(sink: &StepSink, rng: &mut ChaCha8Rng, total: u64) -> std::io::Result<()> {
    let i = sink.index;
    // two crash clusters, scaled to the session length
    let in_crash = |i: u64| -> bool {
        let a = total / 3;
        let b = 2 * total / 3;
        (a..a + 4).contains(&i) || (b..b + 5).contains(&i)
    };

    if i == 0 {
        return sink.write(
            "evidence.json",
            &evidence_json(
                i,
                &[("Text", [400, 900, 680, 960], Some("Starting"), 0.9)],
                EVIDENCED_EMPTY,
                "Splash screen",
                "Launch the app",
                "Splash / startup",
            ),
        );
    }

    if in_crash(i) {
        sink.write(
            "evidence.json",
            &evidence_json(
                i,
                &[
                    ("Modal", [120, 700, 960, 1100], Some("App keeps stopping"), 0.9),
                    ("Text", [160, 760, 920, 820], Some("App keeps stopping"), 0.9),
                ],
                r#"{"error_banner_visible":true,"evidence":{"error_banner_visible":{"bbox":[120,700,960,1100],"text":"App keeps stopping"}}}"#,
                "Crash dialog",
                "Dismiss the crash dialog",
                "Crash dialog / app info",
            ),
        )?;
        // meminfo dump fails during the crash; top still reports the spike
        let cpu = 360.0 + rng.gen_range(0..30) as f64;
        sink.write(
            "top.txt",
            &top_text(cpu, 8.5, 600_000 + i * 500, 30_000),
        )
    } else {
        sink.write(
            "evidence.json",
            &evidence_json(
                i,
                &[
                    ("Toolbar", [0, 0, 1080, 120], Some("Torch"), 0.90),
                    ("Text", [60, 200, 900, 250], Some("Power"), 0.90),
                    ("Text", [60, 280, 900, 330], Some("Brightness"), 0.90),
                    ("Icon", [980, 20, 1060, 100], None, 0.85),
                ],
                "{}",
                "Main control panel",
                "Toggle the torch",
                "Control panel",
            ),
        )?;
        sink.write(
            "meminfo.txt",
            &meminfo_text(
                70_000 + i * 900,
                35_000 + i * 500,
                100_000,
                0,
                (25 + i, 15 + i, 30 + i * 2),
                0,
                (90 + i * 3, 3),
            ),
        )?;
        let cpu = 120.0 + rng.gen_range(0..25) as f64;
        sink.write(
            "top.txt",
            &top_text(cpu, 4.0 + i as f64 * 0.03, 250_000 + i * 800, 50_000),
        )?;
        let ts = i * DT_MS;
        let lines = [http_line(
            "GET",
            Some(200),
            &FULL_HEADERS,
            8_000 + rng.gen_range(0..4_000),
            6.5,
            "api.torch.example",
            false,
            false,
            1.0,
            false,
            ts,
        )];
        sink.write("http.jsonl", &(lines.join("\n") + "\n"))?;
        sink.write(
            "flows.csv",
            &format!(
                "src_ip,dst_ip,src_port,dst_port,cumulative_bytes,malicious\n\
                 10.0.2.16,151.101.1.195,50412,443,{},0\n",
                9_000 * i
            ),
        )
    }
}
