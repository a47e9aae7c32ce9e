use serde::{Deserialize, Serialize};

use super::{cfl_limit, step, Flow, FlowState, Integrator, StepFailure};
use crate::error::FlowError;
use crate::geometry::{pointwise_norms, CurvatureBundle};

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedT,
    PositivityLost,
    BlowupThreshold,
    NanDetected,
}

impl Termination {
    /// Process exit status for the command line.
    pub fn exit_code(self) -> i32 {
        match self {
            Termination::ReachedT => 0,
            Termination::PositivityLost => 3,
            Termination::BlowupThreshold => 4,
            Termination::NanDetected => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub t_end: f64,
    pub dt: f64,
    #[serde(default)]
    pub integrator: Integrator,
    pub c_cfl: f64,
    /// Spacing of recorded samples; the integrator lands on each sample time.
    pub sample_interval: f64,
    /// Ceiling on `sup |Rm|`; default `1e6 (sup |Rm|(0) + 1)`.
    pub ceiling: Option<f64>,
    /// Smallest step tried after repeated halving; default `dt / 1024`.
    pub dt_min: Option<f64>,
}

impl RunSettings {
    pub fn new(t_end: f64, dt: f64, sample_interval: f64) -> Self {
        RunSettings {
            t_end,
            dt,
            integrator: Integrator::Rk4,
            c_cfl: 0.2,
            sample_interval,
            ceiling: None,
            dt_min: None,
        }
    }

    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            out.push(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            out.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.c_cfl > 0.0) {
            out.push(format!("c_cfl must be positive, got {}", self.c_cfl));
        }
        if !(self.sample_interval > 0.0) {
            out.push(format!("sample interval must be positive, got {}", self.sample_interval));
        }
        if let Some(c) = self.ceiling {
            if !(c > 0.0) {
                out.push(format!("ceiling must be positive, got {c}"));
            }
        }
        out
    }

    /// Sample times `0, s, 2s, ...` ending exactly at `t_end`.
    pub fn sample_times(&self) -> Vec<f64> {
        let count = (self.t_end / self.sample_interval - 1e-9).ceil().max(1.0) as usize;
        let mut times: Vec<f64> = (0..count).map(|k| k as f64 * self.sample_interval).collect();
        times.push(self.t_end);
        times
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub t: f64,
    pub sup_rm: f64,
    pub sup_ric: f64,
    pub sup_alpha: f64,
    pub sup_scalar: f64,
    /// `int det g dx`.
    pub area: f64,
    pub min_metric_eigenvalue: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub samples: Vec<SampleRecord>,
    pub termination: Termination,
    pub t_final: f64,
    pub ceiling: f64,
    pub steps: usize,
    pub halvings: usize,
    pub message: Option<String>,
}

/// Record plus the state at every sample time.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub snapshots: Vec<FlowState>,
}

fn sample(flow: &Flow, state: &FlowState, steps: usize) -> Result<SampleRecord, FlowError> {
    let g = flow.metric(state)?;
    let bundle = CurvatureBundle::new(flow.grid(), &g)?;
    let norms = pointwise_norms(&bundle, &flow.alpha(state));
    let min_eig = (0..g.len())
        .map(|p| g.at(p).hermitian_eigenvalues()[0])
        .fold(f64::INFINITY, f64::min);
    Ok(SampleRecord {
        t: state.t,
        sup_rm: norms.sup_rm,
        sup_ric: norms.sup_ric,
        sup_alpha: norms.sup_alpha,
        sup_scalar: bundle.scalar.iter().map(|v| v.abs()).fold(0.0, f64::max),
        area: flow.grid().integrate(&bundle.volume_density),
        min_metric_eigenvalue: min_eig,
        steps,
    })
}

/// Integrate to `t_end`, sampling at `settings.sample_times()`.
pub fn run(flow: &Flow, initial: FlowState, settings: &RunSettings) -> Result<RunOutput, FlowError> {
    run_observed(flow, initial, settings, |_, _| {})
}

/// As [`run`], calling `observe` on every sample as soon as it is taken.
pub fn run_observed(
    flow: &Flow,
    initial: FlowState,
    settings: &RunSettings,
    mut observe: impl FnMut(&SampleRecord, &FlowState),
) -> Result<RunOutput, FlowError> {
    if let Some(msg) = settings.issues().into_iter().next() {
        return Err(FlowError::InvalidParams(msg));
    }
    let times = settings.sample_times();
    let first = sample(flow, &initial, 0)?;
    let ceiling = settings.ceiling.unwrap_or(1e6 * (first.sup_rm + 1.0));
    let dt_min = settings.dt_min.unwrap_or(settings.dt / 1024.0);
    let mut state = initial;
    let mut record = RunRecord {
        samples: Vec::new(),
        termination: Termination::ReachedT,
        t_final: state.t,
        ceiling,
        steps: 0,
        halvings: 0,
        message: None,
    };
    let tripped = first.sup_rm > ceiling;
    observe(&first, &state);
    record.samples.push(first);
    let mut snapshots = vec![state.clone()];
    if tripped {
        record.termination = Termination::BlowupThreshold;
        return Ok(RunOutput { record, snapshots });
    }

    'outer: for &target in &times[1..] {
        while state.t < target {
            let limit = match cfl_limit(flow, &state, settings.c_cfl) {
                Ok(v) => v,
                Err(e) => {
                    record.termination = Termination::PositivityLost;
                    record.message = Some(e.to_string());
                    break 'outer;
                }
            };
            if limit < dt_min {
                // sup |g^{-1}| is exploding: the metric is degenerating.
                record.termination = Termination::PositivityLost;
                record.message = Some(format!("t = {}: stability limit {limit:e} fell below dt_min", state.t));
                break 'outer;
            }
            let mut dt = settings.dt.min(limit);
            let mut failure = None;
            loop {
                let remaining = target - state.t;
                let landing = remaining <= dt * (1.0 + 1e-9);
                let h = if landing { remaining } else { dt };
                match step(flow, &state, h, settings.integrator) {
                    Ok(mut next) => {
                        if landing {
                            next.t = target;
                        }
                        state = next;
                        record.steps += 1;
                        break;
                    }
                    Err(f) => {
                        dt *= 0.5;
                        record.halvings += 1;
                        if dt < dt_min {
                            failure = Some(f);
                            break;
                        }
                    }
                }
            }
            if let Some(f) = failure {
                let (cause, msg) = match f {
                    StepFailure::Positivity(e) => (Termination::PositivityLost, e.to_string()),
                    StepFailure::NotFinite => (Termination::NanDetected, "non-finite value in step".to_string()),
                };
                record.termination = cause;
                record.message = Some(format!("t = {}: {msg}", state.t));
                break 'outer;
            }
        }
        let s = sample(flow, &state, record.steps)?;
        let over = s.sup_rm > ceiling || !s.sup_rm.is_finite();
        observe(&s, &state);
        record.samples.push(s);
        snapshots.push(state.clone());
        if over {
            record.termination = Termination::BlowupThreshold;
            break;
        }
    }
    record.t_final = state.t;
    Ok(RunOutput { record, snapshots })
}
