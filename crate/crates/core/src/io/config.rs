use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{FlowError, IoError};
use crate::flow::{build, Flow, FlowParams, FlowState, Formulation, InitialData, Integrator, RunSettings};
use crate::grid::{Grid, GridSpec};
use crate::monitor::MonitorConfig;

/// Prefix of environment overrides: `KLYZ_T_END`, `KLYZ_FLOW__KAPPA`, ...
pub const ENV_PREFIX: &str = "KLYZ_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    PotentialTorusN1,
    PotentialTorusN2,
    FormLevelN1,
}

impl Scenario {
    pub fn n_complex(self) -> usize {
        match self {
            Scenario::PotentialTorusN2 => 2,
            _ => 1,
        }
    }

    pub fn formulation(self) -> Formulation {
        match self {
            Scenario::FormLevelN1 => Formulation::FormLevelN1,
            _ => Formulation::Potential,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default = "minus_one")]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default)]
    pub generalized_kappa: bool,
    #[serde(default)]
    pub freeze_metric: bool,
}

impl Default for FlowSection {
    fn default() -> Self {
        FlowSection {
            kappa: 1.0,
            lambda: -1.0,
            a: None,
            b: None,
            generalized_kappa: false,
            freeze_metric: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "two_pi")]
    pub period: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            points: default_points(),
            period: two_pi(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSection {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_p")]
    pub p: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<usize>>,
    #[serde(default = "one")]
    pub rho: f64,
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default = "two")]
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default = "one")]
    pub c_universal: f64,
}

impl Default for MonitorSection {
    fn default() -> Self {
        let c = MonitorConfig::default();
        MonitorSection {
            enabled: true,
            p: c.p,
            x0: None,
            rho: c.rho,
            theta: c.theta,
            tau: c.tau,
            k: None,
            l: None,
            c_universal: c.c_universal,
        }
    }
}

impl MonitorSection {
    pub fn config(&self) -> MonitorConfig {
        MonitorConfig {
            p: self.p,
            x0: self.x0.clone(),
            rho: self.rho,
            theta: self.theta,
            tau: self.tau,
            k: self.k,
            l: self.l,
            c_universal: self.c_universal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSection {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Audit spacing in samples.
    #[serde(default = "one_usize")]
    pub stride: usize,
}

impl Default for AuditSection {
    fn default() -> Self {
        AuditSection { enabled: true, stride: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ceiling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub seed: u64,
    pub t_end: f64,
    pub dt: f64,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "default_cfl")]
    pub c_cfl: f64,
    /// Spacing of recorded samples; defaults to `t_end / 50`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_interval: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Fit the universal constant on this run before monitoring.
    #[serde(default)]
    pub calibrate: bool,
    /// Check the cohomology condition for form-level runs too.
    #[serde(default)]
    pub check_cohomology: bool,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default = "default_initial")]
    pub initial: InitialData,
    #[serde(default)]
    pub monitor: MonitorSection,
    #[serde(default)]
    pub audit: AuditSection,
    #[serde(default)]
    pub blowup: BlowupSection,
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn minus_one() -> f64 {
    -1.0
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn two_pi() -> f64 {
    2.0 * PI
}
fn default_points() -> usize {
    32
}
fn default_p() -> u32 {
    3
}
fn default_cfl() -> f64 {
    0.2
}
fn default_initial() -> InitialData {
    InitialData::FlatFixedPoint
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn diag(field: &str, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        field: field.into(),
        message: message.into(),
    }
}

impl RunConfig {
    pub fn minimal(scenario: Scenario, t_end: f64, dt: f64) -> Self {
        RunConfig {
            scenario,
            seed: 0,
            t_end,
            dt,
            integrator: Integrator::Rk4,
            c_cfl: default_cfl(),
            sample_interval: None,
            out_dir: None,
            calibrate: false,
            check_cohomology: false,
            flow: FlowSection::default(),
            grid: GridSection::default(),
            initial: default_initial(),
            monitor: MonitorSection::default(),
            audit: AuditSection::default(),
            blowup: BlowupSection::default(),
        }
    }

    pub fn params(&self) -> FlowParams {
        FlowParams {
            kappa: self.flow.kappa,
            lambda: self.flow.lambda,
            a: self.flow.a,
            b: self.flow.b,
            formulation: self.scenario.formulation(),
            generalized_kappa: self.flow.generalized_kappa,
            freeze_metric: self.flow.freeze_metric,
        }
    }

    pub fn grid_spec(&self) -> GridSpec {
        let n = self.scenario.n_complex();
        GridSpec {
            n_complex: n,
            points: vec![self.grid.points; 2 * n],
            periods: vec![self.grid.period; 2 * n],
        }
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            t_end: self.t_end,
            dt: self.dt,
            integrator: self.integrator,
            c_cfl: self.c_cfl,
            sample_interval: self.sample_interval.unwrap_or(self.t_end / 50.0),
            ceiling: self.blowup.ceiling,
            dt_min: self.blowup.dt_min,
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("klyz-run"))
    }

    /// Grid, flow and initial state.
    pub fn build(&self) -> Result<(Flow, FlowState), FlowError> {
        let grid = Grid::from_spec(self.grid_spec())?;
        build(&grid, &self.params(), &self.initial, self.seed)
    }
}

/// Check every invariant and return the normalized configuration, or all
/// diagnostics at once.
pub fn validate_config(config: &RunConfig) -> Result<RunConfig, Vec<Diagnostic>> {
    let mut out = Vec::new();
    let n = config.scenario.n_complex();
    let mut cfg = config.clone();
    if matches!(cfg.initial, InitialData::FrozenHeat { .. }) {
        cfg.flow.freeze_metric = true;
    }
    let params = cfg.params();
    out.extend(params.issues(n).into_iter().map(|m| diag("flow", m)));
    out.extend(cfg.initial.issues(params.formulation).into_iter().map(|m| diag("initial", m)));
    if cfg.sample_interval.is_none() {
        cfg.sample_interval = Some(cfg.t_end / 50.0);
    }
    out.extend(cfg.settings().issues().into_iter().map(|m| diag("run", m)));
    if let Some(v) = cfg.blowup.dt_min {
        if !(v > 0.0) {
            out.push(diag("blowup", format!("dt_min must be positive, got {v}")));
        }
    }
    let grid = Grid::from_spec(cfg.grid_spec());
    if let Err(e) = &grid {
        out.push(diag("grid", e.to_string()));
    }
    out.extend(cfg.monitor.config().issues().into_iter().map(|m| diag("monitor", m)));
    if cfg.audit.stride == 0 {
        out.push(diag("audit", "stride must be at least 1"));
    }
    // dictionary resolved from (kappa, lambda)
    cfg.flow.a = Some(params.real_a());
    cfg.flow.b = Some(params.real_b());

    if out.is_empty() {
        let grid = grid.expect("checked above");
        match build(&grid, &params, &cfg.initial, cfg.seed) {
            Ok((flow, state)) => {
                if params.formulation == Formulation::FormLevelN1 && cfg.check_cohomology {
                    // on the torus: mean(alpha) = -lambda mean(g)
                    let (mg, ma) = (grid.mean(&state.u[0]), grid.mean(&state.u[1]));
                    if (ma + params.lambda * mg).abs() > 1e-10 * (1.0 + ma.abs()) {
                        out.push(diag(
                            "initial",
                            FlowError::CohomologyMismatch(format!("mean alpha {ma} differs from -lambda mean g = {}", -params.lambda * mg))
                                .to_string(),
                        ));
                    }
                }
                let _ = flow;
            }
            Err(e) => out.push(diag("initial", e.to_string())),
        }
    }
    if out.is_empty() {
        Ok(cfg)
    } else {
        Err(out)
    }
}

/// Values applied on top of the file: environment first, then flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub until: Option<f64>,
    pub dt: Option<f64>,
    pub ceiling: Option<f64>,
    pub out: Option<PathBuf>,
}

fn parse_scalar(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

fn set_path(table: &mut Table, path: &[String], value: Value) {
    if path.len() == 1 {
        table.insert(path[0].clone(), value);
        return;
    }
    let entry = table.entry(path[0].clone()).or_insert_with(|| Value::Table(Table::new()));
    if !entry.is_table() {
        *entry = Value::Table(Table::new());
    }
    if let Value::Table(t) = entry {
        set_path(t, &path[1..], value);
    }
}

/// Apply `KLYZ_KEY=value` and `KLYZ_SECTION__KEY=value` pairs. Values are
/// parsed as TOML scalars, falling back to strings.
pub fn apply_env(table: &mut Table, vars: impl IntoIterator<Item = (String, String)>) {
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(|s| s.to_ascii_lowercase()).collect();
        if path.iter().any(|s| s.is_empty()) {
            continue;
        }
        set_path(table, &path, parse_scalar(&raw));
    }
}

pub fn apply_overrides(table: &mut Table, o: &Overrides) -> Result<(), IoError> {
    if let Some(s) = o.seed {
        table.insert("seed".into(), Value::Integer(s as i64));
    }
    if let Some(t) = o.until {
        table.insert("t_end".into(), Value::Float(t));
    }
    if let Some(d) = o.dt {
        table.insert("dt".into(), Value::Float(d));
    }
    if let Some(c) = o.ceiling {
        set_path(table, &["blowup".into(), "ceiling".into()], Value::Float(c));
    }
    if let Some(dir) = &o.out {
        table.insert("out_dir".into(), Value::String(dir.display().to_string()));
    }
    if let Some(name) = &o.preset {
        let init = InitialData::from_name(name).ok_or_else(|| IoError::Malformed {
            what: "preset".into(),
            message: format!("unknown preset {name:?}"),
        })?;
        let value = Value::try_from(&init).map_err(|e| IoError::Malformed {
            what: "preset".into(),
            message: e.to_string(),
        })?;
        table.insert("initial".into(), value);
    }
    Ok(())
}

pub fn parse_config(table: Table) -> Result<RunConfig, IoError> {
    RunConfig::deserialize(Value::Table(table)).map_err(|e| IoError::Malformed {
        what: "config".into(),
        message: e.to_string(),
    })
}

/// Read a config file, layering environment and flag overrides on top.
pub fn load_config(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>, o: &Overrides) -> Result<RunConfig, IoError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| IoError::io(p, e))?;
            text.parse::<Table>().map_err(|e| IoError::Malformed {
                what: format!("config {}", p.display()),
                message: e.to_string(),
            })?
        }
        None => Table::new(),
    };
    apply_env(&mut table, env);
    apply_overrides(&mut table, o)?;
    parse_config(table)
}

pub fn to_toml(config: &RunConfig) -> String {
    toml::to_string(config).expect("config serializes")
}
