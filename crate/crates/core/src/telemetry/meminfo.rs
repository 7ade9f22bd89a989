//! `dumpsys meminfo`-style dump parsing.
//!
//! The parser is line-tolerant: it scans for `Label: <number>` pairs anywhere
//! in the text (a line may carry several, as in the Objects section) and maps
//! normalised labels onto the snapshot fields. `PssTotal`, `HeapAlloc`, and
//! `HeapSize` are required; the remaining counters default to 0 with a
//! diagnostic.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use super::{Parsed, TelemetryError};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MeminfoSnapshot {
    pub pss_total_kb: u64,
    pub heap_alloc_kb: u64,
    pub heap_size_kb: u64,
    pub swap_pss_dirty_kb: u64,
    pub local_binders: u64,
    pub proxy_binders: u64,
    pub parcel_count: u64,
    pub webviews: u64,
    pub views: u64,
    pub view_root_impl: u64,
    pub timestamp_ms: u64,
}

impl MeminfoSnapshot {
    /// Heap saturation `HeapAlloc / (HeapSize + eps)`.
    pub fn heap_pressure(&self, eps: Scalar) -> Scalar {
        self.heap_alloc_kb as Scalar / (self.heap_size_kb as Scalar + eps)
    }

    /// Warn when alloc exceeds size beyond the configured slack; dumps can
    /// momentarily disagree.
    pub fn check_heap_slack(&self, slack_kb: u64) -> Option<String> {
        if self.heap_alloc_kb > self.heap_size_kb + slack_kb {
            Some(format!(
                "heap_alloc {} KB exceeds heap_size {} KB by more than slack {} KB",
                self.heap_alloc_kb, self.heap_size_kb, slack_kb
            ))
        } else {
            None
        }
    }
}

fn pair_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"([A-Za-z][A-Za-z /]*?)\s*:\s*(\d+)").expect("valid regex"))
}

fn normalise_label(label: &str) -> String {
    label
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase()
}

/// Parse a meminfo-style dump into a snapshot plus diagnostics for defaulted
/// optional counters.
pub fn parse_meminfo(text: &str) -> Result<Parsed<MeminfoSnapshot>, TelemetryError> {
    let mut snap = MeminfoSnapshot::default();
    let mut seen = [false; 11];

    for caps in pair_regex().captures_iter(text) {
        let label = normalise_label(&caps[1]);
        let value: u64 = match caps[2].parse() {
            Ok(v) => v,
            Err(_) => continue,
        };
        let slot = match label.as_str() {
            "totalpss" | "psstotal" => {
                snap.pss_total_kb = value;
                0
            }
            "heapalloc" => {
                snap.heap_alloc_kb = value;
                1
            }
            "heapsize" => {
                snap.heap_size_kb = value;
                2
            }
            "swappssdirty" | "totalswappss" | "swappss" => {
                snap.swap_pss_dirty_kb = value;
                3
            }
            "localbinders" => {
                snap.local_binders = value;
                4
            }
            "proxybinders" => {
                snap.proxy_binders = value;
                5
            }
            "parcelcount" => {
                snap.parcel_count = value;
                6
            }
            "webviews" => {
                snap.webviews = value;
                7
            }
            "views" => {
                snap.views = value;
                8
            }
            "viewrootimpl" => {
                snap.view_root_impl = value;
                9
            }
            "uptime" => {
                snap.timestamp_ms = value;
                10
            }
            _ => continue,
        };
        seen[slot] = true;
    }

    let required = [(0usize, "PssTotal"), (1, "HeapAlloc"), (2, "HeapSize")];
    let missing: Vec<&str> = required
        .iter()
        .filter(|(i, _)| !seen[*i])
        .map(|(_, name)| *name)
        .collect();
    if !missing.is_empty() {
        return Err(TelemetryError::MeminfoMissing {
            fields: missing.join(", "),
        });
    }

    let optional = [
        (3usize, "SwapPssDirty"),
        (4, "LocalBinders"),
        (5, "ProxyBinders"),
        (6, "ParcelCount"),
        (7, "WebViews"),
        (8, "Views"),
        (9, "ViewRootImpl"),
    ];
    let diagnostics: Vec<String> = optional
        .iter()
        .filter(|(i, _)| !seen[*i])
        .map(|(_, name)| format!("meminfo: {name} absent, defaulted to 0"))
        .collect();

    Ok(Parsed {
        value: snap,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DUMP: &str = "\
Applications Memory Usage (in Kilobytes):
Uptime: 123456 Realtime: 654321

** MEMINFO in pid 4242 [com.example.app] **
TOTAL PSS: 120000 TOTAL RSS: 150000 TOTAL SWAP PSS: 120

 App Summary
   Heap Size: 100000
   Heap Alloc: 50000

 Objects
               Views:      150         ViewRootImpl:        3
       Local Binders:       32        Proxy Binders:       27
        Parcel count:       45
            WebViews:        2
";

    #[test]
    fn parses_all_fields() {
        let out = parse_meminfo(DUMP).unwrap();
        let s = out.value;
        assert_eq!(s.pss_total_kb, 120000);
        assert_eq!(s.heap_alloc_kb, 50000);
        assert_eq!(s.heap_size_kb, 100000);
        assert_eq!(s.swap_pss_dirty_kb, 120);
        assert_eq!(s.views, 150);
        assert_eq!(s.view_root_impl, 3);
        assert_eq!(s.local_binders, 32);
        assert_eq!(s.proxy_binders, 27);
        assert_eq!(s.parcel_count, 45);
        assert_eq!(s.webviews, 2);
        assert_eq!(s.timestamp_ms, 123456);
        assert!(out.diagnostics.is_empty());
        // heap pressure precursor: 50000 / 100000
        assert!((s.heap_pressure(1e-9) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn missing_heap_size_is_error() {
        let text = "TOTAL PSS: 120000\nHeap Alloc: 50000\n";
        let err = parse_meminfo(text).unwrap_err();
        assert!(matches!(err, TelemetryError::MeminfoMissing { ref fields } if fields == "HeapSize"));
    }

    #[test]
    fn optional_counters_default_with_diagnostic() {
        let text = "TOTAL PSS: 1\nHeap Size: 2\nHeap Alloc: 1\n";
        let out = parse_meminfo(text).unwrap();
        assert_eq!(out.value.views, 0);
        assert!(out
            .diagnostics
            .iter()
            .any(|d| d.contains("Views absent")));
    }

    #[test]
    fn heap_slack_check() {
        let snap = MeminfoSnapshot {
            heap_alloc_kb: 10_000,
            heap_size_kb: 4_000,
            ..Default::default()
        };
        assert!(snap.check_heap_slack(1_000).is_some());
        assert!(snap.check_heap_slack(10_000).is_none());
    }

    #[test]
    fn arbitrary_text_never_panics() {
        for text in ["", "garbage", "::::", "Views: notanumber"] {
            let _ = parse_meminfo(text);
        }
    }
}
