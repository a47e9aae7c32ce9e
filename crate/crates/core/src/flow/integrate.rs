use serde::{Deserialize, Serialize};

use super::{Flow, FlowState};
use crate::error::GeometryError;
use crate::spectral::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Classical four-stage Runge-Kutta.
    #[default]
    Rk4,
    /// First-order IMEX Euler, implicit in the frozen-coefficient diffusion.
    ImexEuler,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepFailure {
    Positivity(GeometryError),
    NotFinite,
}

/// Explicit stability limit `c_cfl h^2 / (4 max(1, kappa) sup|g^{-1}|)`.
pub fn cfl_limit(flow: &Flow, state: &FlowState, c_cfl: f64) -> Result<f64, GeometryError> {
    let g = flow.metric(state)?;
    let sup_inv = (0..g.len())
        .map(|p| 1.0 / g.at(p).hermitian_eigenvalues()[0])
        .fold(0.0, f64::max);
    let h = flow.grid().min_spacing();
    Ok(c_cfl * h * h / (4.0 * flow.params().kappa.max(1.0) * sup_inv))
}

fn axpy(base: &[Vec<f64>; 2], k: &[Vec<f64>; 2], c: f64) -> [Vec<f64>; 2] {
    [0, 1].map(|i| base[i].iter().zip(&k[i]).map(|(u, d)| u + c * d).collect())
}

fn staged(state: &FlowState, u: [Vec<f64>; 2]) -> FlowState {
    FlowState {
        t: state.t,
        formulation: state.formulation,
        u,
    }
}

fn eval(flow: &Flow, st: &FlowState) -> Result<[Vec<f64>; 2], StepFailure> {
    if !st.is_finite() {
        return Err(StepFailure::NotFinite);
    }
    let k = flow.rhs(st).map_err(StepFailure::Positivity)?;
    if k.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(StepFailure::NotFinite);
    }
    Ok(k)
}

/// Advance one step of size `dt`. The returned state is finite and its metric
/// is positive definite.
pub fn step(flow: &Flow, state: &FlowState, dt: f64, integrator: Integrator) -> Result<FlowState, StepFailure> {
    let u = match integrator {
        Integrator::Rk4 => {
            let k1 = eval(flow, state)?;
            let k2 = eval(flow, &staged(state, axpy(&state.u, &k1, 0.5 * dt)))?;
            let k3 = eval(flow, &staged(state, axpy(&state.u, &k2, 0.5 * dt)))?;
            let k4 = eval(flow, &staged(state, axpy(&state.u, &k3, dt)))?;
            [0, 1].map(|c| {
                (0..state.u[c].len())
                    .map(|i| state.u[c][i] + dt / 6.0 * (k1[c][i] + 2.0 * k2[c][i] + 2.0 * k3[c][i] + k4[c][i]))
                    .collect()
            })
        }
        Integrator::ImexEuler => {
            let k = eval(flow, state)?;
            let symbols = flow.linear_symbols(state).map_err(StepFailure::Positivity)?;
            let s = flow.grid().spectral();
            let dims = flow.grid().real_dim();
            [0, 1].map(|c| {
                // (1 - dt L) u1 = u0 + dt (F(u0) - L u0)
                let su = s.forward_real(&state.u[c]);
                let sk = s.forward_real(&k[c]);
                let mut out = vec![C64::default(); su.len()];
                s.for_each_mode(|i, w| {
                    let l = symbols[c].eval(w, dims);
                    out[i] = (su[i] + dt * (sk[i] - l * su[i])) / (1.0 - dt * l);
                });
                s.inverse(out).into_iter().map(|v| v.re).collect()
            })
        }
    };
    let next = FlowState {
        t: state.t + dt,
        formulation: state.formulation,
        u,
    };
    if !next.is_finite() {
        return Err(StepFailure::NotFinite);
    }
    flow.metric(&next).map_err(StepFailure::Positivity)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{FlowParams, Formulation};
    use crate::grid::Grid;
    use std::f64::consts::PI;

    fn exponential_flow(lambda: f64) -> (Flow, FlowState) {
        let grid = Grid::uniform(1, 8, 1.0).unwrap();
        let len = grid.len();
        let flow = Flow::form_level(grid, FlowParams::new(1.0, lambda, Formulation::FormLevelN1)).unwrap();
        let st = FlowState {
            t: 0.0,
            formulation: Formulation::FormLevelN1,
            u: [vec![1.0; len], vec![0.0; len]],
        };
        (flow, st)
    }

    #[test]
    fn rk4_is_fourth_order_on_exponential() {
        let (flow, st0) = exponential_flow(0.5);
        let errs: Vec<f64> = [0.2f64, 0.1, 0.05]
            .iter()
            .map(|&dt| {
                let mut st = st0.clone();
                for _ in 0..(1.0 / dt).round() as usize {
                    st = step(&flow, &st, dt, Integrator::Rk4).unwrap();
                }
                (st.u[0][0] - 0.5f64.exp()).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 4.0).abs() < 0.1, "{errs:?}");
        }
    }

    #[test]
    fn imex_is_first_order_and_unconditionally_stable_for_heat() {
        let (flow, st0) = exponential_flow(0.5);
        let errs: Vec<f64> = [0.1f64, 0.05]
            .iter()
            .map(|&dt| {
                let mut st = st0.clone();
                for _ in 0..(1.0 / dt).round() as usize {
                    st = step(&flow, &st, dt, Integrator::ImexEuler).unwrap();
                }
                (st.u[0][0] - 0.5f64.exp()).abs()
            })
            .collect();
        assert!(((errs[0] / errs[1]).log2() - 1.0).abs() < 0.1, "{errs:?}");

        let grid = Grid::uniform(1, 32, 1.0).unwrap();
        let mut p = FlowParams::new(1.0, -1.0, Formulation::FormLevelN1);
        p.freeze_metric = true;
        let flow = Flow::form_level(grid.clone(), p).unwrap();
        let mut st = FlowState {
            t: 0.0,
            formulation: Formulation::FormLevelN1,
            u: [vec![1.0; grid.len()], grid.sample(|x| 1.0 + (2.0 * PI * 15.0 * x[0]).cos())],
        };
        let dt = 100.0 * cfl_limit(&flow, &st, 0.2).unwrap();
        for _ in 0..10 {
            st = step(&flow, &st, dt, Integrator::ImexEuler).unwrap();
        }
        assert!(st.u[1].iter().all(|v| (v - 1.0).abs() < 1.0));
    }

    #[test]
    fn positivity_loss_is_reported() {
        let (flow, mut st) = exponential_flow(-50.0);
        st.u[1] = vec![-1.0; st.u[0].len()];
        assert!(matches!(
            step(&flow, &st, 0.1, Integrator::Rk4),
            Err(StepFailure::Positivity(_))
        ));
    }

    #[test]
    fn cfl_scales_with_kappa_and_metric() {
        let (flow, st) = exponential_flow(0.5);
        let h = flow.grid().min_spacing();
        assert!((cfl_limit(&flow, &st, 0.2).unwrap() - 0.05 * h * h).abs() < 1e-15);
        let mut wide = st.clone();
        wide.u[0] = vec![2.0; st.u[0].len()];
        assert!((cfl_limit(&flow, &wide, 0.2).unwrap() - 0.1 * h * h).abs() < 1e-15);
    }
}
