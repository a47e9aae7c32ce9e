//! Numerical checks of the evolution identities along a run.
//!
//! Form-level runs are translated into the real system on the underlying
//! surface: `h = 2 g (dx^2 + dy^2)`, `alpha_real = 2 a (dx^2 + dy^2)`, real
//! time `tau = t / 2`, with `(a, b)` and the form diffusivity taken from
//! [`FlowParams`]. Time derivatives are centered differences over three
//! snapshots, so exact identities hold to second order in the snapshot
//! spacing. Schematic inequalities are reported as fitted constants.

pub mod real2d;

use serde::{Deserialize, Serialize};

use crate::error::AuditError;
use crate::flow::{Flow, FlowParams, FlowState, Formulation, REAL_TIME_SCALE};
use crate::grid::Grid;
use real2d::{contract, flat2, flat3, flat4, tensor_norm_sqr, Mat2, Surface, Tensor4};

/// Constants of the real system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    pub a: f64,
    pub b: f64,
    /// Diffusivity of the form in real time.
    pub nu: f64,
    /// `d tau / d t`.
    pub time_scale: f64,
}

impl Dictionary {
    pub fn from_params(p: &FlowParams) -> Self {
        Dictionary {
            a: p.real_a(),
            b: p.real_b(),
            nu: p.alpha_diffusivity(),
            time_scale: REAL_TIME_SCALE,
        }
    }
}

/// Three snapshots at `t - dt, t, t + dt`.
#[derive(Debug, Clone, Copy)]
pub struct AuditSample<'a> {
    pub states: [&'a FlowState; 3],
    pub dt: f64,
}

impl<'a> AuditSample<'a> {
    pub fn new(states: [&'a FlowState; 3]) -> Result<Self, AuditError> {
        let ts = [states[0].t, states[1].t, states[2].t];
        let (d0, d1) = (ts[1] - ts[0], ts[2] - ts[1]);
        if !(d0 > 0.0 && (d1 - d0).abs() <= 1e-9 * d0) {
            return Err(AuditError::NonUniform(ts));
        }
        let f = states[0].formulation;
        let len = states[0].u[0].len();
        if states.iter().any(|s| s.formulation != f || s.u[0].len() != len) {
            return Err(AuditError::Mismatch);
        }
        Ok(AuditSample { states, dt: 0.5 * (ts[2] - ts[0]) })
    }

    pub fn t(&self) -> f64 {
        self.states[1].t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub name: String,
    pub linf: f64,
    /// Root mean square over the grid.
    pub l2: f64,
}

impl Residual {
    fn from_field(name: &str, r: &[f64]) -> Self {
        let linf = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let l2 = (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt();
        Residual {
            name: name.into(),
            linf,
            l2,
        }
    }
}

/// Smallest `C` with `D <= C M` (or `|D| <= C M`) where the majorant is not negligible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundFit {
    pub name: String,
    pub constant: f64,
    pub max_lhs: f64,
    pub max_majorant: f64,
    pub one_sided: bool,
}

impl BoundFit {
    pub fn fit(name: &str, lhs: &[f64], majorant: &[f64], one_sided: bool) -> Self {
        let max_majorant = majorant.iter().cloned().fold(0.0, f64::max);
        let floor = 1e-6 * max_majorant;
        let mut constant: f64 = 0.0;
        for (d, m) in lhs.iter().zip(majorant) {
            if *m > floor && *m > 0.0 {
                let d = if one_sided { d.max(0.0) } else { d.abs() };
                constant = constant.max(d / m);
            }
        }
        BoundFit {
            name: name.into(),
            constant,
            max_lhs: lhs.iter().map(|v| v.abs()).fold(0.0, f64::max),
            max_majorant,
            one_sided,
        }
    }
}

/// Observed order of one residual across a ladder of snapshot spacings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    pub name: String,
    pub orders: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub t: f64,
    pub dt: f64,
    /// Grid spacing.
    pub h: f64,
    pub residuals: Vec<Residual>,
    pub bounds: Vec<BoundFit>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub orders: Vec<OrderEstimate>,
}

impl AuditReport {
    pub fn residual(&self, name: &str) -> Option<&Residual> {
        self.residuals.iter().find(|r| r.name == name)
    }

    pub fn bound(&self, name: &str) -> Option<&BoundFit> {
        self.bounds.iter().find(|b| b.name == name)
    }
}

/// Run-wide sups `K >= |Ric|`, `L >= |alpha|` used by the local bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunBounds {
    pub k: f64,
    pub l: f64,
}

struct Level {
    surf: Surface,
    alpha: Vec<Mat2>,
    rm2: Vec<f64>,
    ric2: Vec<f64>,
    alpha2: Vec<f64>,
}

fn level(grid: &Grid, state: &FlowState) -> Result<Level, AuditError> {
    if state.formulation != Formulation::FormLevelN1 {
        return Err(AuditError::NotFormLevel);
    }
    grid.check_len(state.u[0].len())?;
    let diag = |v: f64| [[2.0 * v, 0.0], [0.0, 2.0 * v]];
    let surf = Surface::new(grid, state.u[0].iter().map(|&g| diag(g)).collect());
    let alpha: Vec<Mat2> = state.u[1].iter().map(|&a| diag(a)).collect();
    let len = surf.len();
    let rm2 = (0..len).map(|p| surf.rm_norm_sqr(p)).collect();
    let ric2 = (0..len).map(|p| surf.ricci_norm_sqr(p)).collect();
    let alpha2 = (0..len).map(|p| tensor_norm_sqr(&surf.hinv[p], &flat2(&alpha[p]))).collect();
    Ok(Level {
        surf,
        alpha,
        rm2,
        ric2,
        alpha2,
    })
}

/// Measured sups of `|Ric|` and `|alpha|` over a set of form-level snapshots,
/// floored at `1e-6`.
pub fn run_bounds(grid: &Grid, snapshots: &[FlowState]) -> Result<RunBounds, AuditError> {
    let mut b = RunBounds { k: 1e-6, l: 1e-6 };
    for s in snapshots {
        let lv = level(grid, s)?;
        b.k = lv.ric2.iter().fold(b.k, |m, v| m.max(v.sqrt()));
        b.l = lv.alpha2.iter().fold(b.l, |m, v| m.max(v.sqrt()));
    }
    Ok(b)
}

/// All pointwise quantities of one audit sample.
pub struct Evaluation {
    dict: Dictionary,
    dtau: f64,
    levels: [Level; 3],
    ricci_d2: Vec<Tensor4>,
    alpha_d1: Vec<[f64; 8]>,
    alpha_d2: Vec<Tensor4>,
    trace_alpha: Vec<f64>,
    trace_hessian: Vec<Mat2>,
}

impl Evaluation {
    pub fn new(grid: &Grid, dict: Dictionary, sample: &AuditSample) -> Result<Self, AuditError> {
        let levels = [
            level(grid, sample.states[0])?,
            level(grid, sample.states[1])?,
            level(grid, sample.states[2])?,
        ];
        let c = &levels[1];
        let ricci_d2 = c.surf.covariant2(&c.surf.ricci);
        let alpha_d1 = c.surf.covariant(&c.alpha).iter().map(flat3).collect();
        let alpha_d2 = c.surf.covariant2(&c.alpha);
        let trace_alpha: Vec<f64> = (0..c.surf.len()).map(|p| contract(&c.surf.hinv[p], &c.alpha[p])).collect();
        let trace_hessian = c.surf.hessian(&trace_alpha);
        Ok(Evaluation {
            dict,
            dtau: dict.time_scale * sample.dt,
            levels,
            ricci_d2,
            alpha_d1,
            alpha_d2,
            trace_alpha,
            trace_hessian,
        })
    }

    fn center(&self) -> &Level {
        &self.levels[1]
    }

    fn surf(&self) -> &Surface {
        &self.levels[1].surf
    }

    fn len(&self) -> usize {
        self.surf().len()
    }

    /// Centered real-time derivative of a per-level scalar.
    fn rate(&self, f: impl Fn(&Level, usize) -> f64) -> Vec<f64> {
        let (lo, hi) = (&self.levels[0], &self.levels[2]);
        (0..self.len()).map(|p| (f(hi, p) - f(lo, p)) / (2.0 * self.dtau)).collect()
    }

    fn heat(&self, f: impl Fn(&Level, usize) -> f64, diffusivity: f64) -> Vec<f64> {
        let now: Vec<f64> = (0..self.len()).map(|p| f(self.center(), p)).collect();
        let lap = self.surf().laplacian(&now);
        self.rate(f).iter().zip(&lap).map(|(d, l)| d - diffusivity * l).collect()
    }

    fn raise2(&self, p: usize, t: &Mat2) -> Mat2 {
        let hi = &self.surf().hinv[p];
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        out[i][j] += hi[i][a] * hi[j][b] * t[a][b];
                    }
                }
            }
        }
        out
    }

    /// `nabla^i nabla^j alpha_ji`.
    fn div_div_alpha(&self, p: usize) -> f64 {
        let hi = &self.surf().hinv[p];
        let d = &self.alpha_d2[p];
        let mut s = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        s += hi[i][a] * hi[j][b] * d[a][b][j][i];
                    }
                }
            }
        }
        s
    }

    /// `-Delta alpha_ij + nabla^k nabla_i alpha_jk + nabla^k nabla_j alpha_ik - nabla_i nabla_j tr alpha`.
    fn alpha_block(&self, p: usize) -> Mat2 {
        let hi = &self.surf().hinv[p];
        let d = &self.alpha_d2[p];
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut v = -self.trace_hessian[p][i][j];
                for k in 0..2 {
                    for l in 0..2 {
                        v += hi[k][l] * (-d[k][l][i][j] + d[l][i][j][k] + d[l][j][i][k]);
                    }
                }
                out[i][j] = v;
            }
        }
        out
    }

    /// `d_tau dV - (-R + a + (b/2) tr alpha) dV`.
    pub fn volume_residual(&self) -> Vec<f64> {
        let rate = self.rate(|l, p| l.surf.volume[p]);
        let s = self.surf();
        let Dictionary { a, b, .. } = self.dict;
        (0..self.len())
            .map(|p| rate[p] - (-s.scalar[p] + a + 0.5 * b * self.trace_alpha[p]) * s.volume[p])
            .collect()
    }

    /// `(d_tau - Delta) R` against `2|Ric|^2 - b Delta tr alpha - a R - b R_ij alpha^ij + b nabla^i nabla^j alpha_ji`.
    pub fn scalar_curvature_residual(&self) -> Vec<f64> {
        let heat = self.heat(|l, p| l.surf.scalar[p], 1.0);
        let lap_tr = self.surf().laplacian(&self.trace_alpha);
        let Dictionary { a, b, .. } = self.dict;
        let c = self.center();
        (0..self.len())
            .map(|p| {
                let up = self.raise2(p, &c.alpha[p]);
                let r_alpha: f64 = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| c.surf.ricci[p][i][j] * up[i][j]).sum();
                let rhs = 2.0 * c.ric2[p] - b * lap_tr[p] - a * c.surf.scalar[p] - b * r_alpha + b * self.div_div_alpha(p);
                heat[p] - rhs
            })
            .collect()
    }

    /// Norm of `(d_tau - Delta) R_ij` minus its full right side.
    pub fn ricci_residual(&self) -> Vec<f64> {
        let s = self.surf();
        let lap = s.rough_laplacian(&self.ricci_d2);
        let b = self.dict.b;
        let (lo, hi) = (&self.levels[0].surf.ricci, &self.levels[2].surf.ricci);
        (0..self.len())
            .map(|p| {
                let ric = &s.ricci[p];
                let up = self.raise2(p, ric);
                let rm = s.riemann_at(p);
                let block = self.alpha_block(p);
                let mut r = [[0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        let mut rhs = 0.5 * b * block[i][j];
                        for k in 0..2 {
                            for l in 0..2 {
                                rhs -= 2.0 * ric[i][k] * s.hinv[p][k][l] * ric[l][j];
                                rhs += 2.0 * rm[k][i][j][l] * up[k][l];
                            }
                        }
                        let rate = (hi[p][i][j] - lo[p][i][j]) / (2.0 * self.dtau);
                        r[i][j] = rate - lap[p][i][j] - rhs;
                    }
                }
                tensor_norm_sqr(&s.hinv[p], &flat2(&r)).sqrt()
            })
            .collect()
    }

    fn alpha_grad2(&self) -> Vec<f64> {
        (0..self.len()).map(|p| tensor_norm_sqr(&self.surf().hinv[p], &self.alpha_d1[p])).collect()
    }

    /// `(d_tau - nu Delta)|alpha|^2 + 2 nu |nabla alpha|^2 + 2a|alpha|^2`.
    pub fn alpha_norm_defect(&self) -> Vec<f64> {
        let nu = self.dict.nu;
        let heat = self.heat(|l, p| l.alpha2[p], nu);
        let g2 = self.alpha_grad2();
        let c = self.center();
        (0..self.len())
            .map(|p| heat[p] + 2.0 * nu * g2[p] + 2.0 * self.dict.a * c.alpha2[p])
            .collect()
    }

    pub fn alpha_norm_bound(&self) -> BoundFit {
        let c = self.center();
        let m: Vec<f64> = (0..self.len())
            .map(|p| {
                let al = c.alpha2[p].sqrt();
                (c.rm2[p].sqrt() + c.ric2[p].sqrt() + al) * c.alpha2[p]
            })
            .collect();
        BoundFit::fit("alpha_norm", &self.alpha_norm_defect(), &m, false)
    }

    /// Every schematic inequality with its fitted constant.
    pub fn schematic_bounds(&self, run: RunBounds) -> Vec<BoundFit> {
        let s = self.surf();
        let c = self.center();
        let len = self.len();
        let Dictionary { a, b, nu, .. } = self.dict;
        let (k, l) = (run.k, run.l);

        let rm: Vec<f64> = c.rm2.iter().map(|v| v.sqrt()).collect();
        let ric: Vec<f64> = c.ric2.iter().map(|v| v.sqrt()).collect();
        let al: Vec<f64> = c.alpha2.iter().map(|v| v.sqrt()).collect();
        let d2a: Vec<f64> = (0..len).map(|p| tensor_norm_sqr(&s.hinv[p], &flat4(&self.alpha_d2[p])).sqrt()).collect();
        let d2ric: Vec<f64> = (0..len).map(|p| tensor_norm_sqr(&s.hinv[p], &flat4(&self.ricci_d2[p])).sqrt()).collect();
        let d2tr: Vec<f64> = (0..len).map(|p| tensor_norm_sqr(&s.hinv[p], &flat2(&self.trace_hessian[p])).sqrt()).collect();
        let ricci_d1 = s.covariant(&s.ricci);
        let grad_ric2: Vec<f64> = (0..len).map(|p| tensor_norm_sqr(&s.hinv[p], &flat3(&ricci_d1[p]))).collect();
        // nabla Rm = nabla K (h h - h h) in two dimensions, and |h h - h h|^2 = 4
        let grad_rm2: Vec<f64> = s.gradient_norm_sqr(&s.gauss).iter().map(|v| 4.0 * v).collect();
        let grad_a2 = self.alpha_grad2();

        let rm_rate = self.rate(|l, p| l.rm2[p]);
        let rm_heat = self.heat(|l, p| l.rm2[p], 1.0);
        let ric_heat = self.heat(|l, p| l.ric2[p], 1.0);
        let alpha_heat = self.heat(|l, p| l.alpha2[p], nu);
        let vol_rate = self.rate(|l, p| l.surf.volume[p]);

        let mut out = Vec::new();
        let fit = |name: &str, one_sided: bool, d: &dyn Fn(usize) -> f64, m: &dyn Fn(usize) -> f64| {
            let d: Vec<f64> = (0..len).map(d).collect();
            let m: Vec<f64> = (0..len).map(m).collect();
            BoundFit::fit(name, &d, &m, one_sided)
        };

        out.push(fit(
            "rm_norm_rate",
            false,
            &|p| rm_rate[p],
            &|p| d2ric[p] * rm[p] + ric[p] * rm[p] * rm[p] + rm[p] * rm[p] + rm[p] * d2a[p] + rm[p] * rm[p] * al[p],
        ));
        out.push(fit(
            "ric_gradient",
            true,
            &|p| {
                let block = self.alpha_block(p);
                let up = self.raise2(p, &s.ricci[p]);
                let pair: f64 = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| up[i][j] * block[i][j]).sum();
                grad_ric2[p] + 0.5 * ric_heat[p] + a * c.ric2[p] - 0.5 * b * pair
            },
            &|p| c.ric2[p] * rm[p] + b.abs() * c.ric2[p] * al[p],
        ));
        out.push(fit(
            "rm_gradient",
            true,
            &|p| grad_rm2[p] + 0.5 * rm_heat[p],
            &|p| rm[p].powi(3) + rm[p] * rm[p] + rm[p] * rm[p] * al[p] + rm[p] * d2a[p],
        ));
        out.push(self.alpha_norm_bound());
        out.push(fit(
            "ric_gradient_local",
            true,
            &|p| grad_ric2[p] + 0.5 * ric_heat[p],
            &|p| k * k * rm[p] + k * k * l + ric[p] * d2a[p] + ric[p] * d2tr[p],
        ));
        out.push(fit(
            "rm_gradient_local",
            true,
            &|p| grad_rm2[p] + 0.5 * rm_heat[p],
            &|p| rm[p].powi(3) + rm[p] * rm[p] + l * rm[p] * rm[p] + rm[p] * d2a[p],
        ));
        out.push(fit(
            "alpha_gradient_local",
            true,
            &|p| nu * grad_a2[p] + 0.5 * alpha_heat[p],
            &|p| l * l * rm[p] + l * l * (1.0 + k + l),
        ));
        out.push(fit("volume_rate", true, &|p| vol_rate[p] / s.volume[p], &|_| 1.0 + k + l));
        out.push(fit(
            "u_f",
            true,
            &|p| rm_heat[p] + alpha_heat[p],
            &|p| (1.0 + l + l * l + rm[p]) * (c.rm2[p] + c.alpha2[p]),
        ));
        out
    }
}

/// Exact residuals and fitted bounds for one form-level sample.
pub fn audit_form_level(grid: &Grid, dict: Dictionary, run: RunBounds, sample: &AuditSample) -> Result<AuditReport, AuditError> {
    let ev = Evaluation::new(grid, dict, sample)?;
    Ok(AuditReport {
        t: sample.t(),
        dt: sample.dt,
        h: grid.min_spacing(),
        residuals: vec![
            Residual::from_field("volume", &ev.volume_residual()),
            Residual::from_field("scalar_curvature", &ev.scalar_curvature_residual()),
            Residual::from_field("ricci", &ev.ricci_residual()),
        ],
        bounds: ev.schematic_bounds(run),
        orders: Vec::new(),
    })
}

/// Centered difference of `(phi, f)` against the recomputed right side.
pub fn audit_potential(flow: &Flow, sample: &AuditSample) -> Result<AuditReport, AuditError> {
    let [lo, mid, hi] = sample.states;
    if mid.formulation != Formulation::Potential {
        return Err(AuditError::Mismatch);
    }
    let rhs = flow.rhs(mid)?;
    let names = ["potential_phi", "potential_f"];
    let residuals = (0..2)
        .map(|c| {
            let r: Vec<f64> = (0..rhs[c].len())
                .map(|p| (hi.u[c][p] - lo.u[c][p]) / (2.0 * sample.dt) - rhs[c][p])
                .collect();
            Residual::from_field(names[c], &r)
        })
        .collect();
    Ok(AuditReport {
        t: sample.t(),
        dt: sample.dt,
        h: flow.grid().min_spacing(),
        residuals,
        bounds: Vec::new(),
        orders: Vec::new(),
    })
}

/// Audit one sample with the identities that apply to the flow's formulation.
pub fn audit_sample(flow: &Flow, run: RunBounds, sample: &AuditSample) -> Result<AuditReport, AuditError> {
    match flow.formulation() {
        Formulation::FormLevelN1 => audit_form_level(flow.grid(), Dictionary::from_params(flow.params()), run, sample),
        Formulation::Potential => audit_potential(flow, sample),
    }
}

/// Audit every interior snapshot whose neighbours `stride` samples away are
/// uniformly spaced.
pub fn audit_run(flow: &Flow, snapshots: &[FlowState], stride: usize) -> Result<Vec<AuditReport>, AuditError> {
    let stride = stride.max(1);
    let run = match flow.formulation() {
        Formulation::FormLevelN1 => run_bounds(flow.grid(), snapshots)?,
        Formulation::Potential => RunBounds { k: 0.0, l: 0.0 },
    };
    let mut out = Vec::new();
    let mut i = stride;
    while i + stride < snapshots.len() {
        if let Ok(sample) = AuditSample::new([&snapshots[i - stride], &snapshots[i], &snapshots[i + stride]]) {
            out.push(audit_sample(flow, run, &sample)?);
        }
        i += stride;
    }
    Ok(out)
}

/// `log(e_i / e_{i+1}) / log(dt_i / dt_{i+1})` for consecutive rungs; `None`
/// with fewer than three rungs.
pub fn observed_orders(dts: &[f64], errors: &[f64]) -> Option<Vec<f64>> {
    if dts.len() < 3 || dts.len() != errors.len() {
        return None;
    }
    Some(
        (0..dts.len() - 1)
            .map(|i| (errors[i] / errors[i + 1]).ln() / (dts[i] / dts[i + 1]).ln())
            .collect(),
    )
}

/// Audit the same center at several spacings (`strides` in snapshot units,
/// coarsest first) and attach the observed order of every residual to the
/// finest report.
pub fn audit_ladder(flow: &Flow, snapshots: &[FlowState], center: usize, strides: &[usize]) -> Result<Vec<AuditReport>, AuditError> {
    let run = match flow.formulation() {
        Formulation::FormLevelN1 => run_bounds(flow.grid(), snapshots)?,
        Formulation::Potential => RunBounds { k: 0.0, l: 0.0 },
    };
    let mut reports = Vec::new();
    for &s in strides {
        if s == 0 || s > center || center + s >= snapshots.len() {
            return Err(AuditError::Mismatch);
        }
        let sample = AuditSample::new([&snapshots[center - s], &snapshots[center], &snapshots[center + s]])?;
        reports.push(audit_sample(flow, run, &sample)?);
    }
    let dts: Vec<f64> = reports.iter().map(|r| r.dt).collect();
    let orders: Vec<OrderEstimate> = reports[0]
        .residuals
        .iter()
        .filter_map(|r| {
            let errs: Vec<f64> = reports.iter().map(|x| x.residual(&r.name).map_or(f64::NAN, |v| v.linf)).collect();
            observed_orders(&dts, &errs).map(|orders| OrderEstimate {
                name: r.name.clone(),
                orders,
            })
        })
        .collect();
    if let Some(last) = reports.last_mut() {
        last.orders = orders;
    }
    Ok(reports)
}

#[cfg(test)]
mod tests;
