//! `uixpose`: analyse recorded app sessions for intention-behaviour
//! misalignment.
//!
//! Exit codes: 0 success, 1 operational error, 2 success with at least one
//! Anomaly verdict (so CI can gate on anomalies).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use uixpose_core::calibration::{
    calibrate_h, calibrate_m, calibrate_r, emit_config_fragment, CalibrationOptions, ColumnRoles,
    PairedDeltaTable,
};
use uixpose_core::config::{EngineConfig, ProviderMode, ENV_CONFIG};
use uixpose_core::evidence;
use uixpose_core::fixtures::{gen_fixture, FixtureKind};
use uixpose_core::intent::{accumulate_sums, estimate_axis_constants};
use uixpose_core::pipeline::run_session;
use uixpose_core::providers::ProviderChain;
use uixpose_core::telemetry::{load_session, load_tracker_list, LoadOptions};

#[derive(Parser)]
#[command(name = "uixpose", version, about = "Session-replay intention-behaviour alignment analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate an EVIDENCE JSON file against the schema and ontology.
    Validate {
        /// Path to the evidence file.
        path: PathBuf,
    },
    /// Analyse one or more session bundles and write reports.
    Analyze(AnalyzeArgs),
    /// Derive channel weights from a paired-delta table.
    Calibrate {
        /// CSV table with a header row.
        #[arg(long)]
        table: PathBuf,
        /// JSON sidecar mapping columns to roles.
        #[arg(long)]
        roles: PathBuf,
        /// Output path for the TOML config fragment (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Benjamini-Hochberg false-discovery level.
        #[arg(long, default_value_t = 0.05)]
        q: f64,
    },
    /// Estimate per-axis caps and sigmoid scales from an evidence corpus.
    Constants {
        /// Directory of EVIDENCE JSON files.
        #[arg(long)]
        corpus: PathBuf,
        /// Engine config supplying the prior (defaults when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output path for the TOML constants fragment (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic session bundle.
    #[command(name = "gen-fixture")]
    GenFixture {
        /// benign-idle | benign-heavy | exfil | crash-burst
        kind: String,
        #[arg(long)]
        out: PathBuf,
        /// RNG seed; unseeded invocations log the seed they drew.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 60)]
        steps: usize,
    },
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Session directory; repeat for multiple sessions.
    #[arg(long, required = true)]
    session: Vec<PathBuf>,
    /// Engine config file (falls back to $UIXPOSE_CONFIG, then defaults).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Judge/evidence provider backend.
    #[arg(long, value_parser = ["builtin", "remote", "replay"])]
    provider: Option<String>,
    /// RBF sensitivity override.
    #[arg(long)]
    gamma: Option<f64>,
    /// Misalignment threshold override.
    #[arg(long)]
    theta: Option<f64>,
    /// Parallel sessions.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Accepted for interface symmetry; analysis itself is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<EngineConfig> {
    let mut cfg = match path {
        Some(p) => EngineConfig::from_file(p)
            .with_context(|| format!("loading config {}", p.display()))?,
        None => match std::env::var(ENV_CONFIG) {
            Ok(p) if !p.is_empty() => EngineConfig::from_file(&p)
                .with_context(|| format!("loading config from ${ENV_CONFIG}={p}"))?,
            _ => EngineConfig::default(),
        },
    };
    cfg.apply_env();
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { path } => cmd_validate(&path),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Calibrate {
            table,
            roles,
            out,
            q,
        } => cmd_calibrate(&table, &roles, out.as_deref(), q),
        Command::Constants {
            corpus,
            config,
            out,
        } => cmd_constants(&corpus, &config, out.as_deref()),
        Command::GenFixture {
            kind,
            out,
            seed,
            steps,
        } => cmd_gen_fixture(&kind, &out, seed, steps),
    }
}

fn cmd_validate(path: &Path) -> Result<ExitCode> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    match evidence::validate_evidence(&raw) {
        Ok(validated) => {
            for w in &validated.warnings {
                println!("warning: {w}");
            }
            println!(
                "valid: {} components, step {}",
                validated.pack.components.len(),
                validated.pack.step
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(errors) => {
            for e in &errors.0 {
                println!("violation: {e}");
            }
            Ok(ExitCode::from(1))
        }
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<ExitCode> {
    let mut cfg = load_config(&args.config)?;
    if let Some(mode) = &args.provider {
        cfg.provider.mode = match mode.as_str() {
            "remote" => ProviderMode::Remote,
            "replay" => ProviderMode::Replay,
            _ => ProviderMode::Builtin,
        };
    }
    if let Some(gamma) = args.gamma {
        if gamma <= 0.0 {
            bail!("config key fusion.gamma: must be positive");
        }
        cfg.fusion.gamma = gamma;
    }
    if let Some(theta) = args.theta {
        if !(0.0..=1.0).contains(&theta) {
            bail!("config key fusion.theta: must be in [0, 1]");
        }
        cfg.fusion.theta = theta;
    }

    let mut load_opts = LoadOptions {
        delta_t_override: cfg.telemetry.delta_t_s,
        tracker_list: None,
        heap_slack_kb: cfg.telemetry.heap_slack_kb,
        low_confidence: cfg.validation.low_confidence,
    };
    if let Some(list) = &cfg.telemetry.tracker_list {
        load_opts.tracker_list = Some(
            load_tracker_list(list)
                .with_context(|| format!("config key telemetry.tracker_list: {}", list.display()))?,
        );
    }

    let multi = args.session.len() > 1;
    let analyze_one = |session: &PathBuf| -> Result<bool> {
        let bundle = load_session(session, &load_opts)
            .with_context(|| format!("loading session {}", session.display()))?;
        let chain = ProviderChain::from_config(&cfg.provider, &bundle.root);
        let report = run_session(&bundle, &cfg, &chain);
        let out_dir = if multi {
            let name = session
                .file_name()
                .map(|n| n.to_string_lossy().to_string())
                .unwrap_or_else(|| "session".to_string());
            args.out.join(name)
        } else {
            args.out.clone()
        };
        report
            .write_files(&out_dir)
            .with_context(|| format!("writing reports to {}", out_dir.display()))?;
        println!(
            "{}: {} steps, {} authorised / {} anomaly / {} uncertain -> {}",
            session.display(),
            report.totals.steps,
            report.totals.authorised,
            report.totals.anomaly,
            report.totals.uncertain,
            out_dir.display()
        );
        Ok(report.has_anomaly())
    };

    let anomalies: Vec<bool> = if args.jobs > 1 && multi {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .context("building thread pool")?;
        pool.install(|| {
            args.session
                .par_iter()
                .map(&analyze_one)
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        args.session
            .iter()
            .map(analyze_one)
            .collect::<Result<Vec<_>>>()?
    };

    if anomalies.iter().any(|a| *a) {
        Ok(ExitCode::from(2))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn cmd_calibrate(table: &Path, roles: &Path, out: Option<&Path>, q: f64) -> Result<ExitCode> {
    let table_text = std::fs::read_to_string(table)
        .with_context(|| format!("reading {}", table.display()))?;
    let roles_text = std::fs::read_to_string(roles)
        .with_context(|| format!("reading {}", roles.display()))?;
    let table = PairedDeltaTable::from_csv(&table_text).context("parsing table")?;
    let roles = ColumnRoles::from_json(&roles_text).context("parsing roles")?;
    let opts = CalibrationOptions {
        q,
        ..CalibrationOptions::default()
    };

    let h = (!roles.h_surrogates.is_empty())
        .then(|| calibrate_h(&table, &roles, &opts))
        .transpose()
        .context("H-channel calibration")?;
    let m = (!roles.m_rates.is_empty()
        || !roles.m_levels.is_empty()
        || !roles.m_handshakes.is_empty())
    .then(|| calibrate_m(&table, &roles, &opts))
    .transpose()
    .context("M-channel calibration")?;
    let r = (!roles.r_components.is_empty())
        .then(|| calibrate_r(&table, &roles, &opts))
        .transpose()
        .context("R-channel calibration")?;

    if let Some(h) = &h {
        if h.uniform_fallback {
            eprintln!("WARNING: every H surrogate failed significance; emitted uniform weights");
        }
    }

    let fragment = emit_config_fragment(h.as_ref(), m.as_ref(), r.as_ref());
    match out {
        Some(path) => {
            std::fs::write(path, &fragment)
                .with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => print!("{fragment}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_constants(corpus: &Path, config: &Option<PathBuf>, out: Option<&Path>) -> Result<ExitCode> {
    let cfg = load_config(config)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(corpus)
        .with_context(|| format!("reading corpus dir {}", corpus.display()))?
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().map(|e| e == "json").unwrap_or(false))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("corpus {} contains no .json evidence files", corpus.display());
    }

    let mut net = Vec::with_capacity(files.len());
    let mut mem = Vec::with_capacity(files.len());
    let mut res = Vec::with_capacity(files.len());
    let mut rejected = 0usize;
    for file in &files {
        match evidence::load_evidence_file(file) {
            Ok(validated) => {
                let (sums, _) = accumulate_sums(&validated.pack, &cfg.prior);
                net.push(sums[0]);
                mem.push(sums[1]);
                res.push(sums[2]);
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", file.display());
                rejected += 1;
            }
        }
    }
    let constants = estimate_axis_constants(&net, &mem, &res)
        .context("estimating axis constants")?;

    let fragment = format!(
        "[constants.net]\nkappa = {}\ntau = {}\n\n[constants.mem]\nkappa = {}\ntau = {}\n\n[constants.res]\nkappa = {}\ntau = {}\n",
        constants.net.kappa,
        constants.net.tau,
        constants.mem.kappa,
        constants.mem.tau,
        constants.res.kappa,
        constants.res.tau,
    );
    eprintln!(
        "estimated from {} packs ({rejected} rejected)",
        files.len() - rejected
    );
    match out {
        Some(path) => {
            std::fs::write(path, &fragment)
                .with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => print!("{fragment}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen_fixture(
    kind: &str,
    out: &Path,
    seed: Option<u64>,
    steps: usize,
) -> Result<ExitCode> {
    let Some(kind) = FixtureKind::parse(kind) else {
        eprintln!("error: unknown fixture kind {kind:?} (expected benign-idle|benign-heavy|exfil|crash-burst)");
        return Ok(ExitCode::from(1));
    };
    let seed = seed.unwrap_or_else(|| {
        let drawn = rand::random::<u64>();
        eprintln!("no --seed given; using generated seed {drawn}");
        drawn
    });
    gen_fixture(kind, out, seed, steps)
        .with_context(|| format!("generating {kind} fixture"))?;
    println!("wrote {kind} bundle ({steps} steps, seed {seed}) to {}", out.display());
    Ok(ExitCode::SUCCESS)
}
