use serde::{Deserialize, Serialize};

use super::{
    compute_u, compute_u_reversed, cutoff_field, embedding_bound, gronwall_constants, integrate, log_sum_exp, Cutoff,
    GronwallConstants, Integrals, MonitorConfig, Path, Pointwise, UWeights, BOUND_FLOOR,
};
use crate::error::MonitorError;
use crate::field::{CMat, MetricField};
use crate::flow::{Flow, FlowState, REAL_TIME_SCALE};
use crate::geometry::{pointwise_norms, CurvatureBundle};

/// Relative slack on the metric-equivalence bounds.
const EQUIVALENCE_SLACK: f64 = 1e-6;

/// Everything the monitor needs from one snapshot, independent of `C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeasure {
    pub t: f64,
    pub direct: Integrals,
    pub dual: Integrals,
    /// Extreme eigenvalues of `g(t)` relative to `g(0)` over the grid.
    pub eig_min: f64,
    pub eig_max: f64,
    pub sup_rm: f64,
    pub sup_ric: f64,
    pub sup_alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub config: MonitorConfig,
    pub k: f64,
    pub l: f64,
    pub measured_k: f64,
    pub measured_l: f64,
    /// Complex dimension.
    pub n: usize,
    pub a: f64,
    pub b: f64,
    /// Real-time horizon `T`.
    pub horizon: f64,
    pub radius: f64,
    pub embedding_bound: f64,
    pub samples: Vec<SampleMeasure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub t: f64,
    /// Real time since the first sample.
    pub tau: f64,
    #[serde(rename = "A")]
    pub good: [f64; 4],
    #[serde(rename = "B")]
    pub bad: [f64; 5],
    #[serde(rename = "U")]
    pub u: f64,
    /// `U` from the compensated path.
    pub u_dual: f64,
    /// Largest relative gap between the two quadrature paths.
    pub quadrature_gap: f64,
    #[serde(flatten)]
    pub constants: GronwallConstants,
    pub vol_ball: f64,
    #[serde(rename = "dU_dt_measured")]
    pub du_dtau: Option<f64>,
    pub gronwall_margin: Option<f64>,
    pub integral_margin: f64,
    pub metric_equiv_ok: bool,
    pub lp_ball_integral: f64,
    pub lp_rhs: f64,
    pub ln_lp_rhs: f64,
    pub lp_ok: bool,
    /// `(lp_ball_integral / Vol_{g(0)}(inner ball))^{1/p}`.
    pub lp_normalized: f64,
    pub trace_bound_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallSummary {
    pub c_universal: f64,
    pub k: f64,
    pub l: f64,
    pub differential_checked: usize,
    pub differential_ok: usize,
    pub integral_ok: bool,
    pub lp_ok: bool,
    pub metric_equiv_ok: bool,
    pub trace_bound_ok: bool,
    pub max_quadrature_gap: f64,
}

impl GronwallSummary {
    pub fn differential_fraction(&self) -> f64 {
        if self.differential_checked == 0 {
            1.0
        } else {
            self.differential_ok as f64 / self.differential_checked as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSeries {
    pub measured: Measured,
    pub reports: Vec<MonitorReport>,
    pub summary: GronwallSummary,
}

/// Eigenvalues of `g0^{-1} g`, smallest first.
fn relative_eigenvalues(g0_inv: &CMat, g: &CMat) -> [f64; 2] {
    let m = g0_inv.mul(g);
    if m.n == 1 {
        let v = m.get(0, 0).re;
        return [v, v];
    }
    let tr = m.trace().re;
    let det = m.det().re;
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    [0.5 * (tr - disc), 0.5 * (tr + disc)]
}

fn sup(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max)
}

/// Curvature integrals and metric comparisons along a run.
///
/// Measured `K` is raised, if necessary, to the smallest value for which the
/// ball `B(x0, rho/sqrt K)` embeds in the torus; any larger `K` is still a
/// valid bound on `|Ric|`.
pub fn measure(flow: &Flow, snapshots: &[FlowState], config: &MonitorConfig) -> Result<Measured, MonitorError> {
    config.check()?;
    if snapshots.is_empty() {
        return Err(MonitorError::InsufficientSamples { needed: 1, found: 0 });
    }
    let grid = flow.grid();
    let mut metrics = Vec::with_capacity(snapshots.len());
    let (mut mk, mut ml) = (0.0f64, 0.0f64);
    for s in snapshots {
        let g = flow.metric(s)?;
        let bundle = CurvatureBundle::new(grid, &g)?;
        let norms = pointwise_norms(&bundle, &flow.alpha(s));
        mk = mk.max(norms.sup_ric);
        ml = ml.max(norms.sup_alpha);
        metrics.push(g);
    }
    let g0: &MetricField = &metrics[0];
    let embed = embedding_bound(grid, g0)?;
    let k = config.k.unwrap_or_else(|| mk.max(BOUND_FLOOR).max((config.rho / embed).powi(2)));
    let l = config.l.unwrap_or_else(|| ml.max(BOUND_FLOOR));
    let cutoff: Cutoff = cutoff_field(config, grid, g0, k)?;
    let g0_inv = g0.field().mean().inverse();

    let mut samples = Vec::with_capacity(snapshots.len());
    for (s, g) in snapshots.iter().zip(&metrics) {
        let bundle = CurvatureBundle::new(grid, g)?;
        let alpha = flow.alpha(s);
        let w = Pointwise::new(&bundle, &alpha, &cutoff);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for p in 0..g.len() {
            let e = relative_eigenvalues(&g0_inv, &g.at(p));
            lo = lo.min(e[0]);
            hi = hi.max(e[1]);
        }
        samples.push(SampleMeasure {
            t: s.t,
            direct: integrate(&w, &cutoff, config, k, Path::Direct),
            dual: integrate(&w, &cutoff, config, k, Path::Compensated),
            eig_min: lo,
            eig_max: hi,
            sup_rm: sup(&w.rm),
            sup_ric: sup(&w.ric),
            sup_alpha: sup(&w.alpha),
        });
    }
    let params = flow.params();
    Ok(Measured {
        config: config.clone(),
        k,
        l,
        measured_k: mk,
        measured_l: ml,
        n: grid.n_complex(),
        a: params.real_a(),
        b: params.real_b(),
        horizon: REAL_TIME_SCALE * (snapshots[snapshots.len() - 1].t - snapshots[0].t),
        radius: cutoff.radius,
        embedding_bound: embed,
        samples,
    })
}

/// Monitor reports for universal constant `c`.
pub fn assemble(m: &Measured, c: f64) -> Vec<MonitorReport> {
    let cfg = &m.config;
    let (p, pf) = (cfg.p, cfg.p as f64);
    let consts = gronwall_constants(p, m.k, m.l, cfg.theta, cfg.rho, m.horizon, m.a, m.b, c);
    let weights = UWeights::new(p, m.k, m.l, c);
    let t0 = m.samples[0].t;
    let taus: Vec<f64> = m.samples.iter().map(|s| REAL_TIME_SCALE * (s.t - t0)).collect();
    let us: Vec<f64> = m.samples.iter().map(|s| compute_u(&s.direct, &weights)).collect();
    let a_c = consts.a_const;
    let ln_a = a_c.ln();
    let b_vol = |vol: f64| (consts.ln_b + vol.ln()).exp();

    // local L^p right side, in logs
    let s = m.k * m.k + m.l * m.l;
    let first = &m.samples[0].direct;
    let last = &m.samples[m.samples.len() - 1].direct;
    let ln_theta2p = 2.0 * pf * cfg.theta.ln();
    let ln_z = 0.5 * (pf + 3.0) * c.ln() + 2.0 * pf * pf.ln() + s.ln() - ln_theta2p - m.k.ln();
    let ln_x = c.ln() + 6.0 * pf.ln() - ln_theta2p + (1.0 + s / m.k).ln() + consts.a1.ln() + first.lp_outer.ln();
    let real_dim = (2 * m.n) as f64;
    let ln_y = log_sum_exp(&[consts.ln_b - ln_a, ln_z]) + 4.0 * real_dim * consts.k_prime * m.horizon + last.vol_ball.ln();
    let ln_lp_rhs = 2.0 * pf * (cfg.tau * cfg.theta / (cfg.tau - 1.0)).ln() + a_c * m.horizon + log_sum_exp(&[ln_x, ln_y]);
    let vol_inner0 = first.vol_inner;

    let mut integral = 0.0;
    let mut out = Vec::with_capacity(m.samples.len());
    for (i, smp) in m.samples.iter().enumerate() {
        let q = &smp.direct;
        if i > 0 {
            let (ta, tb) = (taus[i - 1], taus[i]);
            let vol = m.samples[i - 1].direct.vol_ball.min(q.vol_ball);
            let ln_int = consts.ln_b + vol.ln() - a_c * ta + (-(-a_c * (tb - ta)).exp_m1()).ln() - ln_a;
            integral += ln_int.exp();
        }
        let du = if i > 0 && i + 1 < m.samples.len() {
            let (d0, d1) = (taus[i] - taus[i - 1], taus[i + 1] - taus[i]);
            ((d1 - d0).abs() <= 1e-9 * d0).then(|| (us[i + 1] - us[i - 1]) / (d0 + d1))
        } else {
            None
        };
        let margin = du.map(|d| a_c * us[i] + b_vol(q.vol_ball) - d);
        let lhs = (-a_c * taus[i]).exp() * us[i];
        let bound = (2.0 * consts.k_prime * taus[i]).exp();
        let metric_ok = smp.eig_min >= (1.0 - EQUIVALENCE_SLACK) / bound && smp.eig_max <= (1.0 + EQUIVALENCE_SLACK) * bound;
        let u_dual = compute_u_reversed(&smp.dual, &weights);
        let u_gap = if us[i] == 0.0 && u_dual == 0.0 { 0.0 } else { (us[i] - u_dual).abs() / us[i].abs().max(u_dual.abs()) };
        out.push(MonitorReport {
            t: smp.t,
            tau: taus[i],
            good: q.a,
            bad: q.b,
            u: us[i],
            u_dual,
            quadrature_gap: q.max_rel_diff(&smp.dual).max(u_gap),
            constants: consts,
            vol_ball: q.vol_ball,
            du_dtau: du,
            gronwall_margin: margin,
            integral_margin: us[0] + integral - lhs,
            metric_equiv_ok: metric_ok,
            lp_ball_integral: q.lp_inner,
            lp_rhs: ln_lp_rhs.exp(),
            ln_lp_rhs,
            lp_ok: q.lp_inner.ln() <= ln_lp_rhs,
            lp_normalized: (q.lp_inner / vol_inner0).powf(1.0 / pf),
            trace_bound_ok: q.b[3] <= m.n as f64 * q.b[2] * (1.0 + 1e-10) + 1e-300,
        });
    }
    out
}

/// Pass/fail counts over a report series.
pub fn summarize(m: &Measured, c: f64, reports: &[MonitorReport]) -> GronwallSummary {
    let checked: Vec<f64> = reports.iter().filter_map(|r| r.gronwall_margin).collect();
    GronwallSummary {
        c_universal: c,
        k: m.k,
        l: m.l,
        differential_checked: checked.len(),
        differential_ok: checked.iter().filter(|v| **v >= 0.0).count(),
        integral_ok: reports.iter().all(|r| r.integral_margin >= 0.0),
        lp_ok: reports.iter().all(|r| r.lp_ok),
        metric_equiv_ok: reports.iter().all(|r| r.metric_equiv_ok),
        trace_bound_ok: reports.iter().all(|r| r.trace_bound_ok),
        max_quadrature_gap: reports.iter().map(|r| r.quadrature_gap).fold(0.0, f64::max),
    }
}

/// Grönwall check over a series; needs three samples for a centered derivative.
pub fn check_gronwall(m: &Measured, c: f64) -> Result<GronwallSummary, MonitorError> {
    if m.samples.len() < 3 {
        return Err(MonitorError::InsufficientSamples {
            needed: 3,
            found: m.samples.len(),
        });
    }
    Ok(summarize(m, c, &assemble(m, c)))
}

pub fn monitor_run(flow: &Flow, snapshots: &[FlowState], config: &MonitorConfig) -> Result<MonitorSeries, MonitorError> {
    let measured = measure(flow, snapshots, config)?;
    let c = config.c_universal;
    let reports = assemble(&measured, c);
    let summary = summarize(&measured, c, &reports);
    Ok(MonitorSeries {
        measured,
        reports,
        summary,
    })
}

/// Smallest power of two `C >= 1` for which every differential margin is
/// nonnegative.
pub fn calibrate(m: &Measured) -> Result<f64, MonitorError> {
    let summary = check_gronwall(m, 1.0)?;
    if summary.differential_checked == 0 {
        return Err(MonitorError::InsufficientSamples {
            needed: 3,
            found: m.samples.len(),
        });
    }
    for e in 0..=64 {
        let c = 2f64.powi(e);
        let s = summarize(m, c, &assemble(m, c));
        if s.differential_ok == s.differential_checked {
            return Ok(c);
        }
    }
    Err(MonitorError::InvalidConfig("no power of two up to 2^64 satisfies the differential inequality".into()))
}
