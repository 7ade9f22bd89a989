//! `top`-style process row parsing for the target process.
//!
//! Accepts a header-labelled table (columns mapped by name) or, without a
//! header, the canonical Android layout
//! `PID USER PR NI VIRT RES SHR S %CPU %MEM TIME+ ARGS`.
//! Memory columns accept plain KB or `K`/`M`/`G` suffixed values.

use serde::{Deserialize, Serialize};

use super::TelemetryError;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProcSnapshot {
    /// Can exceed 100 on multi-core devices.
    pub cpu_pct: Scalar,
    pub mem_pct: Scalar,
    pub res_kb: u64,
    pub virt_kb: u64,
    pub shr_kb: u64,
    pub cores: u32,
    pub timestamp_ms: u64,
}

impl ProcSnapshot {
    /// CPU normalised by device capacity: `CPU% / (100 * cores)`.
    pub fn cpu_cap_norm(&self) -> Scalar {
        self.cpu_pct / (100.0 * self.cores.max(1) as Scalar)
    }
}

const CANONICAL: [&str; 12] = [
    "PID", "USER", "PR", "NI", "VIRT", "RES", "SHR", "S", "%CPU", "%MEM", "TIME+", "ARGS",
];

fn parse_kb(token: &str, field: &'static str) -> Result<u64, TelemetryError> {
    let t = token.trim();
    let bad = || TelemetryError::ProcField {
        field,
        value: token.to_string(),
    };
    if let Ok(v) = t.parse::<u64>() {
        return Ok(v);
    }
    let (num, mult) = match t.chars().last() {
        Some('K') | Some('k') => (&t[..t.len() - 1], 1.0),
        Some('M') | Some('m') => (&t[..t.len() - 1], 1024.0),
        Some('G') | Some('g') => (&t[..t.len() - 1], 1024.0 * 1024.0),
        _ => return Err(bad()),
    };
    let v: f64 = num.parse().map_err(|_| bad())?;
    if !v.is_finite() || v < 0.0 {
        return Err(bad());
    }
    Ok((v * mult).round() as u64)
}

fn parse_pct(token: &str, field: &'static str) -> Result<Scalar, TelemetryError> {
    let v: Scalar = token.trim().parse().map_err(|_| TelemetryError::ProcField {
        field,
        value: token.to_string(),
    })?;
    if !v.is_finite() || v < 0.0 {
        return Err(TelemetryError::ProcField {
            field,
            value: token.to_string(),
        });
    }
    Ok(v)
}

/// Parse the first process row of a top-style dump pre-filtered to the
/// target process.
pub fn parse_proc(text: &str, cores: u32) -> Result<ProcSnapshot, TelemetryError> {
    let mut columns: Option<Vec<String>> = None;
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.iter().any(|t| t.eq_ignore_ascii_case("%CPU")) {
            columns = Some(tokens.iter().map(|t| t.to_ascii_uppercase()).collect());
            continue;
        }
        if !tokens[0].chars().all(|c| c.is_ascii_digit()) {
            continue; // not a process row
        }
        let cols: Vec<String> = columns
            .clone()
            .unwrap_or_else(|| CANONICAL.iter().map(|c| c.to_string()).collect());
        let find = |name: &str| -> Result<&str, TelemetryError> {
            let idx = cols
                .iter()
                .position(|c| c == name)
                .ok_or(TelemetryError::NoProcessRow)?;
            tokens.get(idx).copied().ok_or(TelemetryError::NoProcessRow)
        };
        return Ok(ProcSnapshot {
            cpu_pct: parse_pct(find("%CPU")?, "%CPU")?,
            mem_pct: parse_pct(find("%MEM")?, "%MEM")?,
            res_kb: parse_kb(find("RES")?, "RES")?,
            virt_kb: parse_kb(find("VIRT")?, "VIRT")?,
            shr_kb: parse_kb(find("SHR")?, "SHR")?,
            cores: cores.max(1),
            timestamp_ms: 0,
        });
    }
    Err(TelemetryError::NoProcessRow)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOP: &str = "\
Tasks: 1 total
  PID USER         PR  NI    VIRT    RES    SHR S  %CPU %MEM     TIME+ ARGS
 4242 u0_a123      20   0 1234567 123456  12345 S 250.0  5.0   0:12.34 com.example.app
";

    #[test]
    fn parses_header_labelled_row() {
        let s = parse_proc(TOP, 4).unwrap();
        assert_eq!(s.cpu_pct, 250.0);
        assert_eq!(s.mem_pct, 5.0);
        assert_eq!(s.res_kb, 123456);
        assert_eq!(s.virt_kb, 1234567);
        assert_eq!(s.shr_kb, 12345);
        assert_eq!(s.cores, 4);
        // 250 / (100 * 4)
        assert!((s.cpu_cap_norm() - 0.625).abs() < 1e-12);
    }

    #[test]
    fn idle_row_parses_zero_cpu() {
        let text = " 1 root 20 0 100 200 50 S 0.0 1.0 0:00.00 init\n";
        let s = parse_proc(text, 2).unwrap();
        assert_eq!(s.cpu_pct, 0.0);
    }

    #[test]
    fn suffixed_memory_values() {
        let text = " 7 u0_a1 20 0 1.5G 300M 512K S 12.0 3.0 0:01.00 app\n";
        let s = parse_proc(text, 1).unwrap();
        assert_eq!(s.virt_kb, (1.5 * 1024.0 * 1024.0) as u64);
        assert_eq!(s.res_kb, 300 * 1024);
        assert_eq!(s.shr_kb, 512);
    }

    #[test]
    fn malformed_numeric_is_error() {
        let text = " 7 u0_a1 20 0 100 200 50 S abc 3.0 0:01.00 app\n";
        assert!(matches!(
            parse_proc(text, 1),
            Err(TelemetryError::ProcField { field: "%CPU", .. })
        ));
    }

    #[test]
    fn no_row_is_error() {
        assert!(matches!(
            parse_proc("Tasks: 0 total\n", 1),
            Err(TelemetryError::NoProcessRow)
        ));
        assert!(matches!(parse_proc("", 1), Err(TelemetryError::NoProcessRow)));
    }
}
