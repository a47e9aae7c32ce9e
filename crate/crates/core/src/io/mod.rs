//! Configuration, run orchestration and on-disk formats.

mod config;
mod store;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    apply_env, apply_overrides, load_config, parse_config, to_toml, validate_config, AuditSection, BlowupSection, Diagnostic,
    FlowSection, GridSection, MonitorSection, Overrides, RunConfig, Scenario, ENV_PREFIX,
};
pub use store::{
    plot_data, read_jsonl, read_snapshot, read_snapshots, write_json, write_snapshot, JsonlWriter, SnapshotMeta, StreamLine,
    TerminationLine, CONFIG_FILE, CSV_DIR, RECORD_FILE, SNAPSHOT_DIR, STREAM_FILE,
};

use crate::audit::{audit_run, AuditReport};
use crate::error::{FlowError, IoError};
use crate::flow::{run_observed, Flow, FlowState, RunRecord, Termination};
use crate::monitor::{assemble, calibrate, measure, summarize, GronwallSummary, MonitorConfig, MonitorReport};

pub const AUDIT_FILE: &str = "audit.jsonl";
pub const MONITOR_FILE: &str = "monitor.jsonl";
pub const CALIBRATION_FILE: &str = "calibration.json";

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("invalid configuration:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<Diagnostic>),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

impl CommandError {
    /// 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Contents of `record.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub record: RunRecord,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrated_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitor: Option<GronwallSummary>,
    pub audits: usize,
    /// Analyses that could not run, with the reason.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Monitor output for a stored or fresh run.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorOutcome {
    pub c: f64,
    pub reports: Vec<MonitorReport>,
    pub summary: GronwallSummary,
}

/// Measure, optionally calibrate, and assemble the monitor series.
pub fn monitor_snapshots(flow: &Flow, snapshots: &[FlowState], config: &MonitorConfig, fit: bool) -> Result<MonitorOutcome, String> {
    let m = measure(flow, snapshots, config).map_err(|e| format!("monitor: {e}"))?;
    let c = if fit {
        calibrate(&m).map_err(|e| format!("calibration: {e}"))?
    } else {
        config.c_universal
    };
    let reports = assemble(&m, c);
    let summary = summarize(&m, c, &reports);
    Ok(MonitorOutcome { c, reports, summary })
}

fn prepare(config: &RunConfig) -> Result<RunConfig, CommandError> {
    validate_config(config).map_err(CommandError::Config)
}

fn create_dir(dir: &Path) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))
}

/// Run a validated configuration into its output directory: normalized
/// `config.toml`, snapshots, `stream.jsonl`, and `record.json`.
pub fn execute(config: &RunConfig) -> Result<RunSummary, CommandError> {
    let cfg = prepare(config)?;
    let dir = cfg.out_dir();
    create_dir(&dir)?;
    let old = dir.join(SNAPSHOT_DIR);
    if old.exists() {
        fs::remove_dir_all(&old).map_err(|e| IoError::io(&old, e))?;
    }
    let cfg_path = dir.join(CONFIG_FILE);
    fs::write(&cfg_path, to_toml(&cfg)).map_err(|e| IoError::io(&cfg_path, e))?;

    let (flow, initial) = cfg.build()?;
    let spec = flow.grid().spec().clone();
    let mut stream = JsonlWriter::create(&dir.join(STREAM_FILE))?;
    let mut failure: Option<IoError> = None;
    let mut index = 0;
    let out = run_observed(&flow, initial, &cfg.settings(), |sample, state| {
        if failure.is_some() {
            return;
        }
        let r = stream
            .write(&StreamLine::Sample(sample))
            .and_then(|_| write_snapshot(&dir, index, state, &spec));
        index += 1;
        if let Err(e) = r {
            failure = Some(e);
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }

    let mut notes = Vec::new();
    let mut summary = RunSummary {
        record: out.record.clone(),
        exit_code: out.record.termination.exit_code(),
        calibrated_c: None,
        monitor: None,
        audits: 0,
        notes: Vec::new(),
    };
    if cfg.monitor.enabled {
        match monitor_snapshots(&flow, &out.snapshots, &cfg.monitor.config(), cfg.calibrate) {
            Ok(m) => {
                for r in &m.reports {
                    stream.write(&StreamLine::Monitor(r))?;
                }
                if cfg.calibrate {
                    summary.calibrated_c = Some(m.c);
                }
                summary.monitor = Some(m.summary);
            }
            Err(e) => notes.push(e),
        }
    }
    if cfg.audit.enabled {
        match audit_run(&flow, &out.snapshots, cfg.audit.stride) {
            Ok(reports) => {
                for r in &reports {
                    stream.write(&StreamLine::Audit(r))?;
                }
                summary.audits = reports.len();
            }
            Err(e) => notes.push(format!("audit: {e}")),
        }
    }
    for n in &notes {
        stream.write(&StreamLine::Note { message: n })?;
    }
    stream.write(&StreamLine::Termination(&TerminationLine::from_record(&out.record)))?;
    summary.notes = notes;
    write_json(&dir.join(RECORD_FILE), &summary)?;
    Ok(summary)
}

/// Configuration and snapshots of a stored run.
pub fn load_run(dir: &Path) -> Result<(RunConfig, Flow, Vec<FlowState>), CommandError> {
    let cfg_path = dir.join(CONFIG_FILE);
    if !cfg_path.exists() {
        return Err(IoError::MissingRun(dir.display().to_string()).into());
    }
    let cfg = load_config(Some(&cfg_path), Vec::new(), &Overrides::default())?;
    let cfg = prepare(&cfg)?;
    let (flow, _) = cfg.build()?;
    let snapshots = read_snapshots(dir)?;
    Ok((cfg, flow, snapshots))
}

/// Re-audit stored snapshots into `audit.jsonl`.
pub fn reaudit(dir: &Path, stride: Option<usize>) -> Result<Vec<AuditReport>, CommandError> {
    let (cfg, flow, snapshots) = load_run(dir)?;
    let mut w = JsonlWriter::create(&dir.join(AUDIT_FILE))?;
    match audit_run(&flow, &snapshots, stride.unwrap_or(cfg.audit.stride)) {
        Ok(reports) => {
            for r in &reports {
                w.write(&StreamLine::Audit(r))?;
            }
            Ok(reports)
        }
        Err(e) => {
            w.write(&StreamLine::Note {
                message: &format!("audit: {e}"),
            })?;
            Ok(Vec::new())
        }
    }
}

/// Re-monitor stored snapshots into `monitor.jsonl`, optionally with new
/// monitor settings.
pub fn remonitor(dir: &Path, monitor: Option<MonitorSection>, fit: bool) -> Result<MonitorOutcome, CommandError> {
    let (cfg, flow, snapshots) = load_run(dir)?;
    let section = monitor.unwrap_or(cfg.monitor);
    let issues = section.config().issues();
    if !issues.is_empty() {
        return Err(CommandError::Config(
            issues
                .into_iter()
                .map(|m| Diagnostic {
                    field: "monitor".into(),
                    message: m,
                })
                .collect(),
        ));
    }
    let outcome = monitor_snapshots(&flow, &snapshots, &section.config(), fit).map_err(|message| IoError::Malformed {
        what: "monitor input".into(),
        message,
    })?;
    let mut w = JsonlWriter::create(&dir.join(MONITOR_FILE))?;
    for r in &outcome.reports {
        w.write(&StreamLine::Monitor(r))?;
    }
    Ok(outcome)
}

/// Contents of `calibration.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub c_universal: f64,
    pub termination: Termination,
    pub summary: GronwallSummary,
}

/// Run with calibration on and report the fitted constant.
pub fn calibrate_config(config: &RunConfig) -> Result<Calibration, CommandError> {
    let mut cfg = config.clone();
    cfg.calibrate = true;
    cfg.monitor.enabled = true;
    let s = execute(&cfg)?;
    let (Some(c), Some(summary)) = (s.calibrated_c, s.monitor) else {
        return Err(IoError::Malformed {
            what: "calibration run".into(),
            message: s.notes.join("; "),
        }
        .into());
    };
    let cal = Calibration {
        c_universal: c,
        termination: s.record.termination,
        summary,
    };
    write_json(&cfg.out_dir().join(CALIBRATION_FILE), &cal)?;
    Ok(cal)
}
