use std::f64::consts::PI;

use super::*;
use crate::flow::{build, run, Flow, FlowParams, FlowState, Formulation, InitialData, RunSettings};

fn flat_grid(points: usize) -> (Grid, MetricField) {
    let grid = Grid::uniform(1, points, 2.0 * PI).unwrap();
    let g0 = MetricField::identity(&grid);
    (grid, g0)
}

fn config(k: f64) -> MonitorConfig {
    MonitorConfig {
        k: Some(k),
        l: Some(1.0),
        ..MonitorConfig::default()
    }
}

#[test]
fn cutoff_profile_examples() {
    let (grid, g0) = flat_grid(32);
    let c = cutoff_field(&config(1.0), &grid, &g0, 1.0).unwrap();
    assert_eq!(c.phi[c.center], 1.0);
    // h = 2 dx^2: four cells along x sit at distance sqrt2 * pi / 4
    let idx = grid.multi_index(c.center);
    let p = grid.flat_index(&[idx[0] + 4, idx[1]]);
    let d = 2f64.sqrt() * PI / 4.0;
    assert!((c.dist[p] - d).abs() < 1e-15);
    let half = MonitorConfig {
        rho: 2.0 * d,
        ..config(1.0)
    };
    let c = cutoff_field(&half, &grid, &g0, 1.0).unwrap();
    assert!((c.phi[p] - 0.5).abs() < 1e-15);
    assert!(c.dist.iter().zip(&c.phi).all(|(d, f)| *d < c.radius || *f == 0.0));
    let wide = MonitorConfig { theta: 2.0, ..config(1.0) };
    assert_eq!(cutoff_field(&wide, &grid, &g0, 1.0).unwrap().phi[c.center], 0.5);
}

#[test]
fn ball_must_embed() {
    let (grid, g0) = flat_grid(16);
    // shortest period vector has length sqrt2 * 2 pi
    let bound = embedding_bound(&grid, &g0).unwrap();
    assert!((bound - 2f64.sqrt() * PI).abs() < 1e-14);
    let big = MonitorConfig { rho: 5.0, ..config(1.0) };
    assert!(matches!(cutoff_field(&big, &grid, &g0, 1.0), Err(MonitorError::BallTooLarge { .. })));
}

#[test]
fn cutoff_is_lipschitz_with_unit_gradient_distance() {
    let (grid, g0) = flat_grid(32);
    let cfg = MonitorConfig { rho: 2.0, ..config(1.0) };
    let c = cutoff_field(&cfg, &grid, &g0, 1.0).unwrap();
    let n = grid.points()[0];
    let mut worst: f64 = 0.0;
    for p in 0..grid.len() {
        let [i, j, ..] = grid.multi_index(p);
        for q in [grid.flat_index(&[(i + 1) % n, j]), grid.flat_index(&[i, (j + 1) % n])] {
            let d = 2f64.sqrt() * grid.spacing(0);
            worst = worst.max((c.phi[p] - c.phi[q]).abs() / d);
        }
    }
    assert!(worst <= c.slope * 1.01, "{worst} vs {}", c.slope);
    let g = c.gradient_norm_sqr(&g0);
    for p in 0..grid.len() {
        if c.phi[p] > 0.0 && p != c.center {
            assert!((g[p] - c.slope * c.slope).abs() < 1e-12);
        }
    }
    assert_eq!(g[c.center], 0.0);
}

fn pointwise_from(rm: Vec<f64>, alpha: f64, dv: f64) -> Pointwise {
    let len = rm.len();
    Pointwise {
        ric: rm.clone(),
        rm,
        alpha: vec![alpha; len],
        grad_ric2: vec![0.5; len],
        grad_rm2: vec![0.25; len],
        grad_alpha2: vec![0.125; len],
        grad_trace2: vec![0.0625; len],
        grad_phi2: vec![0.3; len],
        dv: vec![dv; len],
    }
}

#[test]
fn single_bump_matches_brute_force() {
    let (grid, g0) = flat_grid(16);
    let cfg = MonitorConfig { rho: 3.0, ..config(1.0) };
    let c = cutoff_field(&cfg, &grid, &g0, 1.0).unwrap();
    let x0 = grid.coords(c.center);
    let rm = grid.sample(|x| (-((x[0] - x0[0]).powi(2) + (x[1] - x0[1]).powi(2))).exp());
    let w = pointwise_from(rm.clone(), 0.7, grid.cell_volume() * 2.0);
    let q = integrate(&w, &c, &cfg, 1.0, Path::Direct);
    let mut a1 = 0.0;
    let mut b2 = 0.0;
    for p in 0..grid.len() {
        a1 += rm[p].powi(3) * c.phi[p].powi(6) * w.dv[p];
        b2 += 0.25 * c.phi[p].powi(6) * w.dv[p];
    }
    assert!((q.a[0] - a1).abs() <= 1e-12 * a1);
    assert!((q.b[1] - b2).abs() <= 1e-12 * b2);
    let dual = integrate(&w, &c, &cfg, 1.0, Path::Compensated);
    assert!(q.max_rel_diff(&dual) < 1e-12);
    // monotone under pointwise majorization of |Rm|
    let doubled = pointwise_from(rm.iter().map(|v| 2.0 * v).collect(), 0.7, w.dv[0]);
    let q2 = integrate(&doubled, &c, &cfg, 1.0, Path::Direct);
    for (lo, hi) in q.a.iter().chain(&q.b).zip(q2.a.iter().chain(&q2.b)) {
        assert!(hi >= lo);
    }
    // phi <= 1/theta gives A2 <= A4
    assert!(q.a[1] <= q.a[3]);
}

#[test]
fn flat_state_keeps_only_the_form_term() {
    let (grid, g0) = flat_grid(16);
    let cfg = MonitorConfig { l: Some(2.0), ..config(1.0) };
    let c = cutoff_field(&cfg, &grid, &g0, 1.0).unwrap();
    let bundle = CurvatureBundle::new(&grid, &g0).unwrap();
    let alpha = HermField::from_scalar(&vec![1.0; grid.len()]);
    let w = Pointwise::new(&bundle, &alpha, &c);
    let q = integrate(&w, &c, &cfg, 1.0, Path::Direct);
    assert!(q.a.iter().chain(&q.b).all(|v| *v == 0.0));
    let weights = UWeights::new(3, 1.0, 2.0, 1.0);
    // |alpha|^2 = 1 for alpha = g
    let expected = weights.alpha * q.phi_mass;
    assert!((compute_u(&q, &weights) - expected).abs() <= 1e-14 * expected);
    assert!((weights.alpha - 729.0 * 5.0 / 4.0).abs() < 1e-12);
}

#[test]
fn constant_examples() {
    let c = gronwall_constants(3, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0);
    assert!((c.a1 - (3.0 + 1.0 / 81.0)).abs() < 1e-15);
    assert_eq!(c.a2, 1.0);
    assert_eq!(c.k_prime, 1.0);
    let c = gronwall_constants(3, 1.0, 2.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0);
    assert_eq!(c.a2, 4.0);
    assert_eq!(c.k_prime, 3.0);
    // B at T = 0, K = L = 1, p = 3: 3^6 * 2 * (a1 + 1 + a3) with a3 = 3
    let c = gronwall_constants(3, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0);
    let expected = 729.0 * 2.0 * (c.a1 + 1.0 + 3.0);
    assert!((c.b_const - expected).abs() < 1e-10 * expected);
    assert!((c.a_const - 729.0 * 3.0 * c.a1).abs() < 1e-10);
}

fn form_run(init: InitialData, lambda: f64, t_end: f64, every: f64) -> (Flow, Vec<FlowState>) {
    let grid = Grid::uniform(1, 16, 2.0 * PI).unwrap();
    let params = FlowParams::new(1.0, lambda, Formulation::FormLevelN1);
    let (flow, st) = build(&grid, &params, &init, 3).unwrap();
    let out = run(&flow, st, &RunSettings::new(t_end, 0.01, every)).unwrap();
    (flow, out.snapshots)
}

#[test]
fn fixed_point_series_is_stationary() {
    let (flow, snaps) = form_run(InitialData::FlatFixedPoint, -1.0, 0.2, 0.05);
    let s = monitor_run(&flow, &snaps, &MonitorConfig::default()).unwrap();
    for r in &s.reports {
        assert!(r.good.iter().chain(&r.bad).all(|v| *v == 0.0));
        assert!(r.metric_equiv_ok && r.lp_ok && r.integral_margin >= 0.0);
    }
    let interior: Vec<_> = s.reports.iter().filter_map(|r| r.du_dtau).collect();
    assert_eq!(interior.len(), 3);
    assert!(interior.iter().all(|d| d.abs() < 1e-9));
    assert_eq!(s.summary.differential_ok, 3);
    // measured K is zero, so the ball-fitting floor applies
    assert!((s.measured.radius - s.measured.embedding_bound).abs() < 1e-12);
}

#[test]
fn exponential_metric_equivalence() {
    let (flow, snaps) = form_run(InitialData::Exponential, 0.5, 1.0, 0.25);
    let s = monitor_run(&flow, &snaps, &MonitorConfig::default()).unwrap();
    assert_eq!(s.measured.a, 1.0);
    for (r, m) in s.reports.iter().zip(&s.measured.samples) {
        assert!(r.metric_equiv_ok);
        // g(t) = e^{t/2} = e^{a tau}
        assert!((m.eig_max - (r.tau * s.measured.a).exp()).abs() < 1e-7);
        assert_eq!(r.u, 0.0);
        assert!(r.integral_margin >= 0.0);
    }
}

#[test]
fn perturbed_series_dual_paths_agree_and_calibrate() {
    let init = InitialData::Perturbed {
        seed: Some(2),
        amplitude: 0.05,
        modes: 2,
    };
    let (flow, snaps) = form_run(init, -1.0, 0.2, 0.02);
    let m = measure(&flow, &snaps, &MonitorConfig::default()).unwrap();
    let c = calibrate(&m).unwrap();
    assert_eq!(c.log2().fract(), 0.0);
    let reports = assemble(&m, c);
    let s = summarize(&m, c, &reports);
    assert!(s.max_quadrature_gap < 1e-12, "{}", s.max_quadrature_gap);
    assert_eq!(s.differential_ok, s.differential_checked);
    assert!(s.integral_ok && s.lp_ok && s.metric_equiv_ok && s.trace_bound_ok);
    assert!(reports[3].good[0] > 0.0);
}

#[test]
fn margins_invariant_under_axis_swap() {
    let init = InitialData::Perturbed {
        seed: Some(4),
        amplitude: 0.05,
        modes: 1,
    };
    let (flow, snaps) = form_run(init, -1.0, 0.06, 0.02);
    let n = flow.grid().points()[0];
    let swap = |v: &Vec<f64>| (0..v.len()).map(|p| v[(p % n) * n + p / n]).collect::<Vec<f64>>();
    let swapped: Vec<FlowState> = snaps
        .iter()
        .map(|s| FlowState {
            t: s.t,
            formulation: s.formulation,
            u: [swap(&s.u[0]), swap(&s.u[1])],
        })
        .collect();
    let a = monitor_run(&flow, &snaps, &MonitorConfig::default()).unwrap();
    let b = monitor_run(&flow, &swapped, &MonitorConfig::default()).unwrap();
    for (x, y) in a.reports.iter().zip(&b.reports) {
        assert!((x.u - y.u).abs() <= 1e-10 * x.u.abs());
        match (x.gronwall_margin, y.gronwall_margin) {
            (Some(p), Some(q)) => assert!((p - q).abs() <= 1e-10 * p.abs()),
            (None, None) => {}
            _ => panic!("margin presence differs"),
        }
    }
}

#[test]
fn potential_n2_trace_bound_and_quadrature() {
    let grid = Grid::uniform(2, 8, 2.0 * PI).unwrap();
    let init = InitialData::Perturbed {
        seed: Some(1),
        amplitude: 0.05,
        modes: 1,
    };
    let (flow, st) = build(&grid, &FlowParams::lyz(Formulation::Potential), &init, 0).unwrap();
    let out = run(&flow, st, &RunSettings::new(0.02, 0.01, 0.01)).unwrap();
    let s = monitor_run(&flow, &out.snapshots, &MonitorConfig::default()).unwrap();
    assert!(s.summary.trace_bound_ok);
    assert!(s.summary.max_quadrature_gap < 1e-12, "{}", s.summary.max_quadrature_gap);
    assert!(s.summary.metric_equiv_ok);
}

#[test]
fn config_issues_are_collected() {
    let bad = MonitorConfig {
        p: 2,
        theta: 0.5,
        tau: 1.0,
        ..MonitorConfig::default()
    };
    assert_eq!(bad.issues().len(), 3);
    let parsed: MonitorConfig = toml::from_str("p = 4\ntheta = 2.0").unwrap();
    assert_eq!(parsed.p, 4);
    assert_eq!(parsed.tau, 2.0);
}
