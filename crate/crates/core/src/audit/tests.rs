use std::f64::consts::PI;

use super::*;
use crate::flow::{build, run, InitialData, RunSettings};

fn form_level_run(points: usize, period: f64, init: InitialData, t_end: f64, every: f64, dt: f64) -> (Flow, Vec<FlowState>) {
    let grid = Grid::uniform(1, points, period).unwrap();
    let (flow, st) = build(&grid, &FlowParams::lyz(Formulation::FormLevelN1), &init, 5).unwrap();
    let out = run(&flow, st, &RunSettings::new(t_end, dt, every)).unwrap();
    (flow, out.snapshots)
}

#[test]
fn fixed_point_residuals_vanish() {
    let (flow, snaps) = form_level_run(16, 2.0 * PI, InitialData::FlatFixedPoint, 0.02, 0.01, 0.005);
    let reports = audit_run(&flow, &snaps, 1).unwrap();
    assert_eq!(reports.len(), 1);
    for r in &reports[0].residuals {
        assert!(r.linf <= 1e-10, "{r:?}");
    }
    // alpha = -lambda h is not small, so only the form-norm defect survives: 2a|alpha|^2 = -8
    for b in &reports[0].bounds {
        let expected = if b.name == "alpha_norm" { 8.0 } else { 0.0 };
        assert!((b.max_lhs - expected).abs() <= 1e-10, "{b:?}");
    }
}

#[test]
fn exponential_volume_residual_is_the_centered_difference_error() {
    let (flow, snaps) = form_level_run(8, 1.0, InitialData::Exponential, 0.2, 0.1, 0.01);
    let grid = flow.grid();
    let params = FlowParams::new(1.0, 0.5, Formulation::FormLevelN1);
    let dict = Dictionary::from_params(&params);
    // same data at lambda = 0.5: g = e^{t/2}, alpha = 0
    let states: Vec<FlowState> = snaps
        .iter()
        .map(|s| FlowState {
            t: s.t,
            formulation: s.formulation,
            u: [vec![(0.5 * s.t).exp(); grid.len()], vec![0.0; grid.len()]],
        })
        .collect();
    let sample = AuditSample::new([&states[0], &states[1], &states[2]]).unwrap();
    let ev = Evaluation::new(grid, dict, &sample).unwrap();
    let dtau = 0.5 * 0.1;
    let a = dict.a;
    let expected = 2.0 * (0.5f64 * 0.1).exp() * ((a * dtau).sinh() / dtau - a);
    for r in ev.volume_residual() {
        assert!((r - expected).abs() < 1e-12, "{r} vs {expected}");
    }
    for r in ev.scalar_curvature_residual().iter().chain(&ev.ricci_residual()) {
        assert!(r.abs() < 1e-12);
    }
}

#[test]
fn frozen_heat_alpha_identity_and_sign() {
    let grid = Grid::uniform(1, 32, 2.0 * PI).unwrap();
    let init = InitialData::FrozenHeat { amplitude: 0.5 };
    let (flow, st) = build(&grid, &FlowParams::lyz(Formulation::FormLevelN1), &init, 0).unwrap();
    assert_eq!(Dictionary::from_params(flow.params()).a, 0.0);
    let defect = |delta: f64| {
        let out = run(&flow, st.clone(), &RunSettings::new(2.0 * delta, 1e-3, delta)).unwrap();
        let reports = audit_run(&flow, &out.snapshots, 1).unwrap();
        let r = reports[0].clone();
        let ab = r.bound("alpha_norm").unwrap().max_lhs;
        let uf = r.bound("u_f").unwrap().clone();
        (ab, uf)
    };
    let (d1, uf) = defect(0.02);
    let (d2, _) = defect(0.01);
    // flat metric: D = 0 up to the centered-difference error, which is second order
    let order = (d1 / d2).log2();
    assert!(order > 1.9 && order < 2.1, "order {order}, {d1:e} {d2:e}");
    // (d - Delta) u = -2 nu |nabla alpha|^2 <= 0
    assert_eq!(uf.constant, 0.0);
}

#[test]
fn perturbed_run_exact_identities_converge_at_second_order() {
    let init = InitialData::Perturbed {
        seed: Some(1),
        amplitude: 1e-2,
        modes: 2,
    };
    let (flow, snaps) = form_level_run(32, 2.0 * PI, init, 0.04, 0.005, 1e-3);
    let reports = audit_ladder(&flow, &snaps, 4, &[4, 2, 1]).unwrap();
    let last = reports.last().unwrap();
    assert_eq!(last.orders.len(), 3);
    for o in &last.orders {
        for v in &o.orders {
            assert!(*v >= 1.9, "{o:?} {:?}", reports.iter().map(|r| r.residual(&o.name).unwrap().linf).collect::<Vec<_>>());
        }
    }
    // generic data: every fitted constant is finite
    for b in &last.bounds {
        assert!(b.constant.is_finite(), "{b:?}");
    }
    assert!(last.bound("alpha_norm").unwrap().constant > 0.0);
}

#[test]
fn observed_orders_need_three_rungs() {
    assert_eq!(observed_orders(&[0.2, 0.1], &[4.0, 1.0]), None);
    let o = observed_orders(&[0.2, 0.1, 0.05], &[16.0, 4.0, 1.0]).unwrap();
    assert_eq!(o, vec![2.0, 2.0]);
}

#[test]
fn bound_fit_ignores_negligible_majorant() {
    let f = BoundFit::fit("x", &[1.0, -3.0, 5.0], &[1.0, 1.0, 1e-9], false);
    assert_eq!(f.constant, 3.0);
    let g = BoundFit::fit("x", &[1.0, -3.0, 5.0], &[1.0, 1.0, 1e-9], true);
    assert_eq!(g.constant, 1.0);
    assert_eq!(g.max_lhs, 5.0);
}

#[test]
fn samples_must_be_uniform() {
    let s = |t: f64| FlowState {
        t,
        formulation: Formulation::FormLevelN1,
        u: [vec![1.0; 4], vec![0.0; 4]],
    };
    let (a, b, c) = (s(0.0), s(0.1), s(0.3));
    assert!(matches!(AuditSample::new([&a, &b, &c]), Err(AuditError::NonUniform(_))));
}

#[test]
fn potential_fixed_point_residual_vanishes() {
    let grid = Grid::uniform(2, 8, 2.0 * PI).unwrap();
    let (flow, st) = build(&grid, &FlowParams::lyz(Formulation::Potential), &InitialData::FlatFixedPoint, 0).unwrap();
    let out = run(&flow, st, &RunSettings::new(0.02, 0.005, 0.01)).unwrap();
    let r = audit_run(&flow, &out.snapshots, 1).unwrap();
    assert!(r[0].residuals.iter().all(|x| x.linf < 1e-12));
}
