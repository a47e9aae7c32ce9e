//! Time integration of the kappa-LYZ flow.
//!
//! Two formulations are offered:
//!
//! * `Potential` (n = 1, 2): `omega_t = omega + i d dbar phi`,
//!   `alpha_t = alpha + i d dbar f`, evolving the scalar pair `(phi, f)`.
//! * `FormLevelN1`: the coefficients `(g, a)` of `omega_t = g dz^dzbar` and
//!   `alpha_t = a dz^dzbar` on a complex curve.

mod integrate;
mod presets;
mod run;

pub use integrate::{cfl_limit, step, Integrator, StepFailure};
pub use presets::{build, InitialData};
pub use run::{run, run_observed, RunOutput, RunRecord, RunSettings, SampleRecord, Termination};

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, GeometryError};
use crate::field::{CMat, HermField, MetricField};
use crate::geometry::{ddbar, laplacian, metric_from_potential, trace_form};
use crate::grid::Grid;
use crate::spectral::{sym_anti, sym_holo, sym_laplacian, C64};

/// Ratio between real-system time and flow time used by the real dictionary.
pub const REAL_TIME_SCALE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Potential,
    FormLevelN1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub kappa: f64,
    pub lambda: f64,
    /// Real-system override for `a`; defaults to `2 lambda`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// Real-system override for `b`; defaults to `2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    pub formulation: Formulation,
    /// Opt-in `df/dt = kappa (Delta f + tr alpha)` reduction for `kappa != 1`.
    #[serde(default)]
    pub generalized_kappa: bool,
    /// Hold the metric fixed and evolve only the form.
    #[serde(default)]
    pub freeze_metric: bool,
}

impl FlowParams {
    pub fn new(kappa: f64, lambda: f64, formulation: Formulation) -> Self {
        FlowParams {
            kappa,
            lambda,
            a: None,
            b: None,
            formulation,
            generalized_kappa: false,
            freeze_metric: false,
        }
    }

    /// The original flow, `(kappa, lambda) = (1, -1)`.
    pub fn lyz(formulation: Formulation) -> Self {
        Self::new(1.0, -1.0, formulation)
    }

    /// Real-system `a`: `2 lambda`, or 0 when the metric is frozen.
    pub fn real_a(&self) -> f64 {
        self.a
            .unwrap_or(if self.freeze_metric { 0.0 } else { 2.0 * self.lambda })
    }

    /// Real-system `b`: 2, or 0 when the metric is frozen.
    pub fn real_b(&self) -> f64 {
        self.b.unwrap_or(if self.freeze_metric { 0.0 } else { 2.0 })
    }

    /// Diffusivity of the form in real-system time.
    pub fn alpha_diffusivity(&self) -> f64 {
        4.0 * self.kappa
    }

    /// Every violated invariant, for a run on complex dimension `n`.
    pub fn issues(&self, n: usize) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            out.push(format!("kappa must be positive, got {}", self.kappa));
        }
        if !self.lambda.is_finite() {
            out.push(format!("lambda must be finite, got {}", self.lambda));
        }
        match self.formulation {
            Formulation::Potential => {
                if !self.generalized_kappa && (self.kappa != 1.0 || self.lambda != -1.0) {
                    out.push(format!(
                        "potential formulation requires (kappa, lambda) = (1, -1) unless generalized_kappa is set, got ({}, {})",
                        self.kappa, self.lambda
                    ));
                }
            }
            Formulation::FormLevelN1 => {
                if n != 1 {
                    out.push(format!("form-level formulation needs complex dimension 1, got {n}"));
                }
            }
        }
        out
    }

    pub fn check(&self, n: usize) -> Result<(), FlowError> {
        match self.issues(n).into_iter().next() {
            Some(msg) => Err(FlowError::InvalidParams(msg)),
            None => Ok(()),
        }
    }
}

/// Time plus the two evolved scalar fields: `(phi, f)` or `(g, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub t: f64,
    pub formulation: Formulation,
    pub u: [Vec<f64>; 2],
}

impl FlowState {
    pub fn field_names(&self) -> [&'static str; 2] {
        field_names(self.formulation)
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    /// Largest pointwise difference over both fields.
    pub fn sup_diff(&self, other: &FlowState) -> f64 {
        self.u
            .iter()
            .zip(&other.u)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

pub fn field_names(formulation: Formulation) -> [&'static str; 2] {
    match formulation {
        Formulation::Potential => ["phi", "f"],
        Formulation::FormLevelN1 => ["g", "alpha"],
    }
}

/// Background data of the potential formulation.
#[derive(Debug, Clone)]
pub struct Background {
    pub omega: MetricField,
    pub alpha: HermField,
    /// `log Omega` relative to `det omega`, mean zero.
    pub log_omega: Vec<f64>,
    /// Mean of `tr_omega alpha`, subtracted from `df/dt` so the fixed point is stationary.
    pub trace_shift: f64,
    log_det_omega: Vec<f64>,
}

/// Solve `d dbar psi = -(lambda omega + alpha)` for mean-zero `psi = log Omega`.
///
/// At `lambda = -1` the right side is `omega - alpha`.
pub fn solve_background_volume(
    grid: &Grid,
    omega: &MetricField,
    alpha: &HermField,
    lambda: f64,
) -> Result<Vec<f64>, FlowError> {
    grid.check_len(omega.len())?;
    grid.check_len(alpha.len())?;
    let n = grid.n_complex();
    let source = omega.field().zip_map(alpha, |w, a| -(lambda * w + a));
    let scale = 1.0 + source.sup_abs_diff(&HermField::zeros(n, grid.len()));
    let mean = source.mean();
    let worst = mean.a[..n * n].iter().map(|v| v.norm()).fold(0.0, f64::max);
    if worst > 1e-10 * scale {
        return Err(FlowError::CohomologyMismatch(format!(
            "mean of lambda*omega + alpha is {worst:e}, expected 0"
        )));
    }
    // Trace equation: (1/4) Laplacian psi = sum_i S_{i ibar}.
    let trace: Vec<f64> = (0..grid.len())
        .map(|p| {
            let m = source.at(p);
            (0..n).map(|i| m.get(i, i).re).sum()
        })
        .collect();
    let s = grid.spectral();
    let spec = s.forward_real(&trace);
    let psi = s.apply_real(&spec, |k| {
        let l = 0.25 * sym_laplacian(k, 2 * n).re;
        if l == 0.0 {
            C64::default()
        } else {
            C64::new(1.0 / l, 0.0)
        }
    });
    let residual = ddbar(grid, &psi).sup_abs_diff(&source);
    if residual > 1e-8 * scale {
        return Err(FlowError::CohomologyMismatch(format!(
            "lambda*omega + alpha is not d dbar-exact (residual {residual:e})"
        )));
    }
    Ok(psi)
}

/// A flow problem: grid, parameters and (for potentials) background data.
#[derive(Debug, Clone)]
pub struct Flow {
    grid: Grid,
    params: FlowParams,
    background: Option<Background>,
}

impl Flow {
    pub fn form_level(grid: Grid, params: FlowParams) -> Result<Self, FlowError> {
        if params.formulation != Formulation::FormLevelN1 {
            return Err(FlowError::InvalidParams("expected form-level parameters".into()));
        }
        params.check(grid.n_complex())?;
        Ok(Flow {
            grid,
            params,
            background: None,
        })
    }

    pub fn potential(
        grid: Grid,
        params: FlowParams,
        omega: MetricField,
        alpha: HermField,
    ) -> Result<Self, FlowError> {
        if params.formulation != Formulation::Potential {
            return Err(FlowError::InvalidParams("expected potential parameters".into()));
        }
        params.check(grid.n_complex())?;
        let log_omega = solve_background_volume(&grid, &omega, &alpha, params.lambda)?;
        let trace = trace_form(&omega, &alpha);
        let trace_shift = grid.mean(&trace);
        let log_det_omega = omega.det().iter().map(|d| d.ln()).collect();
        Ok(Flow {
            grid,
            params,
            background: Some(Background {
                omega,
                alpha,
                log_omega,
                trace_shift,
                log_det_omega,
            }),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &FlowParams {
        &self.params
    }

    pub fn background(&self) -> Option<&Background> {
        self.background.as_ref()
    }

    pub fn formulation(&self) -> Formulation {
        self.params.formulation
    }

    /// Metric `omega_t` of a state.
    pub fn metric(&self, state: &FlowState) -> Result<MetricField, GeometryError> {
        match &self.background {
            Some(bg) => metric_from_potential(&self.grid, &bg.omega, &state.u[0]),
            None => MetricField::new(HermField::from_scalar(&state.u[0])),
        }
    }

    /// Form `alpha_t` of a state.
    pub fn alpha(&self, state: &FlowState) -> HermField {
        match &self.background {
            Some(bg) => bg.alpha.zip_map(&ddbar(&self.grid, &state.u[1]), |a, b| a + b),
            None => HermField::from_scalar(&state.u[1]),
        }
    }

    /// Right-hand side of the evolution.
    pub fn rhs(&self, state: &FlowState) -> Result<[Vec<f64>; 2], GeometryError> {
        match &self.background {
            Some(bg) => self.rhs_potential(bg, state),
            None => self.rhs_form_level(state),
        }
    }

    fn rhs_potential(&self, bg: &Background, state: &FlowState) -> Result<[Vec<f64>; 2], GeometryError> {
        let p = &self.params;
        let [phi, f] = &state.u;
        let g = metric_from_potential(&self.grid, &bg.omega, phi)?;
        let dphi = if p.freeze_metric {
            vec![0.0; phi.len()]
        } else {
            let det = g.det();
            (0..phi.len())
                .map(|i| det[i].ln() - bg.log_det_omega[i] - bg.log_omega[i] + p.lambda * phi[i] + f[i])
                .collect()
        };
        let lap = laplacian(&self.grid, &g, f);
        let tr = trace_form(&g, &bg.alpha);
        let df = (0..f.len())
            .map(|i| p.kappa * (lap[i] + tr[i] - bg.trace_shift))
            .collect();
        Ok([dphi, df])
    }

    fn rhs_form_level(&self, state: &FlowState) -> Result<[Vec<f64>; 2], GeometryError> {
        let p = &self.params;
        let [g, a] = &state.u;
        MetricField::new(HermField::from_scalar(g))?;
        let s = self.grid.spectral();
        let dg = if p.freeze_metric {
            vec![0.0; g.len()]
        } else {
            let logg: Vec<f64> = g.iter().map(|v| v.ln()).collect();
            let ric = s.apply_real(&s.forward_real(&logg), |k| sym_holo(k, 0) * sym_anti(k, 0));
            (0..g.len()).map(|i| ric[i] + p.lambda * g[i] + a[i]).collect()
        };
        let ratio: Vec<f64> = a.iter().zip(g).map(|(x, y)| x / y).collect();
        let da = s
            .apply_real(&s.forward_real(&ratio), |k| sym_laplacian(k, 2))
            .into_iter()
            .map(|v| p.kappa * v)
            .collect();
        Ok([dg, da])
    }

    /// Constant-coefficient symbols of the stiff linear parts, frozen at `state`.
    pub(crate) fn linear_symbols(&self, state: &FlowState) -> Result<[LinearSymbol; 2], GeometryError> {
        let p = &self.params;
        match &self.background {
            Some(bg) => {
                let g = metric_from_potential(&self.grid, &bg.omega, &state.u[0])?;
                let h = g.field().mean().inverse();
                let phi = if p.freeze_metric {
                    LinearSymbol::zero()
                } else {
                    LinearSymbol::Complex { h, scale: 1.0 }
                };
                Ok([phi, LinearSymbol::Complex { h, scale: p.kappa }])
            }
            None => {
                let gbar = self.grid.mean(&state.u[0]);
                let g = if p.freeze_metric {
                    LinearSymbol::zero()
                } else {
                    LinearSymbol::Coordinate(0.25 / gbar)
                };
                Ok([g, LinearSymbol::Coordinate(p.kappa / gbar)])
            }
        }
    }
}

/// Linear diffusion operator with constant coefficients.
#[derive(Debug, Clone, Copy)]
pub(crate) enum LinearSymbol {
    /// `nu * coordinate Laplacian`.
    Coordinate(f64),
    /// `scale * h^{i jbar} d_i d_{jbar}` with a constant inverse metric.
    Complex { h: CMat, scale: f64 },
}

impl LinearSymbol {
    fn zero() -> Self {
        LinearSymbol::Coordinate(0.0)
    }

    pub(crate) fn eval(&self, k: &[f64; 4], dims: usize) -> f64 {
        match self {
            LinearSymbol::Coordinate(nu) => nu * sym_laplacian(k, dims).re,
            LinearSymbol::Complex { h, scale } => {
                let n = h.n;
                let mut s = C64::default();
                for i in 0..n {
                    for j in 0..n {
                        s += h.get(j, i) * sym_holo(k, i) * sym_anti(k, j);
                    }
                }
                scale * s.re
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit_form_level(pts: usize) -> Grid {
        Grid::uniform(1, pts, 1.0).unwrap()
    }

    #[test]
    fn params_dictionary_and_validation() {
        let p = FlowParams::lyz(Formulation::Potential);
        assert_eq!((p.real_a(), p.real_b()), (-2.0, 2.0));
        assert!(p.issues(2).is_empty());
        let mut q = FlowParams::new(2.0, -1.0, Formulation::Potential);
        assert_eq!(q.issues(1).len(), 1);
        q.generalized_kappa = true;
        assert!(q.issues(1).is_empty());
        let r = FlowParams::new(-1.0, 0.0, Formulation::FormLevelN1);
        assert_eq!(r.issues(2).len(), 2);
        let mut frozen = FlowParams::new(1.0, 0.5, Formulation::FormLevelN1);
        frozen.freeze_metric = true;
        assert_eq!((frozen.real_a(), frozen.real_b()), (0.0, 0.0));
    }

    #[test]
    fn background_volume_examples() {
        let grid = unit_form_level(16);
        let omega = MetricField::identity(&grid);
        let psi = solve_background_volume(&grid, &omega, omega.field(), -1.0).unwrap();
        assert!(psi.iter().all(|v| v.abs() < 1e-15));

        let eps = 0.05;
        let sinus = |x: &[f64; 4]| (2.0 * PI * x[0]).sin() + 0.5 * (2.0 * PI * (x[0] - 2.0 * x[1])).cos();
        let alpha = HermField::from_scalar(&grid.sample(|x| 1.0 + eps * sinus(x)));
        let psi = solve_background_volume(&grid, &omega, &alpha, -1.0).unwrap();
        // (1/4) Laplacian psi = -eps * sinus, inverted mode by mode
        let expect = grid.sample(|x| {
            let l1 = PI * PI;
            let l2 = 5.0 * PI * PI;
            eps * ((2.0 * PI * x[0]).sin() / l1 + 0.5 * (2.0 * PI * (x[0] - 2.0 * x[1])).cos() / l2)
        });
        for (a, b) in psi.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }

        let shifted = HermField::from_scalar(&vec![1.1; grid.len()]);
        assert!(matches!(
            solve_background_volume(&grid, &omega, &shifted, -1.0),
            Err(FlowError::CohomologyMismatch(_))
        ));
    }

    #[test]
    fn non_closed_form_is_rejected_in_n2() {
        let grid = Grid::uniform(2, 8, 1.0).unwrap();
        let omega = MetricField::identity(&grid);
        let wiggle = grid.sample(|x| 0.1 * (2.0 * PI * x[2]).sin());
        let alpha = HermField::from_fn(2, grid.len(), |p| {
            let mut m = CMat::identity(2);
            m.set(0, 0, C64::new(1.0 + wiggle[p], 0.0));
            m
        });
        assert!(matches!(
            solve_background_volume(&grid, &omega, &alpha, -1.0),
            Err(FlowError::CohomologyMismatch(_))
        ));
    }

    #[test]
    fn form_level_rhs_examples() {
        let grid = unit_form_level(16);
        let len = grid.len();
        let flow = Flow::form_level(grid.clone(), FlowParams::lyz(Formulation::FormLevelN1)).unwrap();
        let st = FlowState {
            t: 0.0,
            formulation: Formulation::FormLevelN1,
            u: [vec![1.0; len], vec![1.0; len]],
        };
        let [dg, da] = flow.rhs(&st).unwrap();
        assert!(dg.iter().chain(&da).all(|v| v.abs() < 1e-15));

        let flow = Flow::form_level(grid.clone(), FlowParams::new(1.0, 0.5, Formulation::FormLevelN1)).unwrap();
        let st = FlowState {
            t: 0.0,
            formulation: Formulation::FormLevelN1,
            u: [vec![1.0; len], vec![0.0; len]],
        };
        let [dg, _] = flow.rhs(&st).unwrap();
        assert!(dg.iter().all(|v| (v - 0.5).abs() < 1e-15));

        for kappa in [0.5, 2.0] {
            let mut p = FlowParams::new(kappa, -1.0, Formulation::FormLevelN1);
            p.freeze_metric = true;
            let flow = Flow::form_level(grid.clone(), p).unwrap();
            let a = grid.sample(|x| (2.0 * PI * x[0]).cos());
            let st = FlowState {
                t: 0.0,
                formulation: Formulation::FormLevelN1,
                u: [vec![1.0; len], a.clone()],
            };
            let [dg, da] = flow.rhs(&st).unwrap();
            assert!(dg.iter().all(|v| *v == 0.0));
            for (d, v) in da.iter().zip(&a) {
                assert!((d + 4.0 * PI * PI * kappa * v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn harmonic_form_is_stationary_on_curved_metric() {
        let grid = unit_form_level(16);
        let flow = Flow::form_level(grid.clone(), FlowParams::lyz(Formulation::FormLevelN1)).unwrap();
        let g = grid.sample(|x| 1.0 + 0.2 * (2.0 * PI * x[1]).sin());
        let a: Vec<f64> = g.iter().map(|v| 0.7 * v).collect();
        let st = FlowState {
            t: 0.0,
            formulation: Formulation::FormLevelN1,
            u: [g, a],
        };
        let [_, da] = flow.rhs(&st).unwrap();
        assert!(da.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn potential_rhs_examples() {
        for n in [1usize, 2] {
            let grid = Grid::uniform(n, 8, 1.0).unwrap();
            let omega = MetricField::identity(&grid);
            let alpha = omega.field().clone();
            let flow = Flow::potential(grid.clone(), FlowParams::lyz(Formulation::Potential), omega, alpha).unwrap();
            let len = grid.len();
            let st = FlowState {
                t: 0.0,
                formulation: Formulation::Potential,
                u: [vec![0.0; len], vec![0.0; len]],
            };
            let [dphi, df] = flow.rhs(&st).unwrap();
            assert!(dphi.iter().chain(&df).all(|v| v.abs() < 1e-15));
            let st = FlowState {
                t: 0.0,
                formulation: Formulation::Potential,
                u: [vec![0.0; len], vec![0.3; len]],
            };
            let [dphi, _] = flow.rhs(&st).unwrap();
            assert!(dphi.iter().all(|v| (v - 0.3).abs() < 1e-15));
        }
    }

    /// Finite-difference oracle for the Monge-Ampere determinant in n = 1:
    /// `det(1 + d dbar phi) = 1 + (phi_xx + phi_yy) / 4`, with eighth-order
    /// centered differences of the closed-form potential at spacing 1/512.
    #[test]
    fn potential_rhs_matches_finite_difference_determinant() {
        use rand::{Rng, SeedableRng};
        let n = 32;
        let grid = Grid::uniform(1, n, 1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let terms: Vec<(f64, f64, f64)> = (0..4)
            .map(|_| {
                (
                    rng.gen_range(1..=3) as f64,
                    rng.gen_range(-2..=2) as f64,
                    rng.gen_range(-1.0..1.0) * 2e-3,
                )
            })
            .collect();
        let phi_fn = |x: f64, y: f64| {
            terms
                .iter()
                .map(|(kx, ky, c)| c * (2.0 * PI * (kx * x + ky * y)).cos())
                .sum::<f64>()
        };
        let phi = grid.sample(|x| phi_fn(x[0], x[1]));
        let omega = MetricField::identity(&grid);
        let flow = Flow::potential(grid.clone(), FlowParams::lyz(Formulation::Potential), omega.clone(), omega.field().clone())
            .unwrap();
        let st = FlowState {
            t: 0.0,
            formulation: Formulation::Potential,
            u: [phi.clone(), vec![0.0; grid.len()]],
        };
        let [dphi, _] = flow.rhs(&st).unwrap();
        let h = 1.0 / 512.0;
        let w = [-1.0 / 560.0, 8.0 / 315.0, -1.0 / 5.0, 8.0 / 5.0, -205.0 / 72.0];
        let d2 = |f: &dyn Fn(f64) -> f64, x: f64| {
            let mut s = w[4] * f(x);
            for m in 1..=4 {
                s += w[4 - m] * (f(x + m as f64 * h) + f(x - m as f64 * h));
            }
            s / (h * h)
        };
        for p in 0..grid.len() {
            let [x, y, ..] = grid.coords(p);
            let lap = d2(&|s| phi_fn(s, y), x) + d2(&|s| phi_fn(x, s), y);
            let expect = (1.0 + 0.25 * lap).ln() - phi[p];
            assert!((dphi[p] - expect).abs() < 1e-8, "{p}: {} {}", dphi[p], expect);
        }
    }
}
