//! Localized curvature integrals and the inequalities built on them.
//!
//! Norms are those of the geometry module. Volumes and distances use the
//! Riemannian metric `h = 2 Re g`, and time is real-system time
//! `tau = t / 2`, matching the `(a, b)` dictionary of the flow parameters.

mod series;

pub use series::{
    assemble, calibrate, check_gronwall, measure, monitor_run, summarize, GronwallSummary, Measured, MonitorReport, MonitorSeries,
    SampleMeasure,
};

use serde::{Deserialize, Serialize};

use crate::error::MonitorError;
use crate::field::{HermField, MetricField};
use crate::geometry::{covariant_derivative_norms, gradient_norm_sqr, pointwise_norms, CurvatureBundle};
use crate::grid::Grid;
use crate::spectral::C64;

/// Floor applied to measured `K` and `L`.
pub const BOUND_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    #[serde(default = "default_p")]
    pub p: u32,
    /// Ball center as a grid multi-index; defaults to the grid center.
    #[serde(default)]
    pub x0: Option<Vec<usize>>,
    #[serde(default = "one")]
    pub rho: f64,
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default = "two")]
    pub tau: f64,
    /// Bound on `|Ric|`; measured over the run when absent.
    #[serde(default)]
    pub k: Option<f64>,
    /// Bound on `|alpha|`; measured over the run when absent.
    #[serde(default)]
    pub l: Option<f64>,
    #[serde(default = "one")]
    pub c_universal: f64,
}

fn default_p() -> u32 {
    3
}
fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            p: 3,
            x0: None,
            rho: 1.0,
            theta: 1.0,
            tau: 2.0,
            k: None,
            l: None,
            c_universal: 1.0,
        }
    }
}

impl MonitorConfig {
    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.p < 3 {
            out.push(format!("p must be at least 3, got {}", self.p));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            out.push(format!("rho must be positive, got {}", self.rho));
        }
        if !(self.theta >= 1.0 && self.theta.is_finite()) {
            out.push(format!("theta must be at least 1, got {}", self.theta));
        }
        if !(self.tau > 1.0 && self.tau.is_finite()) {
            out.push(format!("tau must exceed 1, got {}", self.tau));
        }
        for (name, v) in [("K", self.k), ("L", self.l)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    out.push(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if !(self.c_universal > 0.0 && self.c_universal.is_finite()) {
            out.push(format!("c_universal must be positive, got {}", self.c_universal));
        }
        out
    }

    pub fn check(&self) -> Result<(), MonitorError> {
        match self.issues().into_iter().next() {
            Some(m) => Err(MonitorError::InvalidConfig(m)),
            None => Ok(()),
        }
    }

    pub fn center(&self, grid: &Grid) -> Result<usize, MonitorError> {
        let dims = grid.real_dim();
        let idx: Vec<usize> = match &self.x0 {
            Some(v) => v.clone(),
            None => grid.points().iter().map(|n| n / 2).collect(),
        };
        if idx.len() != dims || idx.iter().zip(grid.points()).any(|(i, n)| i >= n) {
            return Err(MonitorError::InvalidConfig(format!("x0 {idx:?} is not a grid point")));
        }
        Ok(grid.flat_index(&idx))
    }
}

/// Real metric `h = 2 Re g` of a constant Hermitian matrix, on `R^{2n}`.
fn real_metric(g: &crate::field::CMat) -> [[f64; 4]; 4] {
    let n = g.n;
    let q = |u: &[f64; 4]| {
        let mut s = C64::default();
        for i in 0..n {
            for j in 0..n {
                let ui = C64::new(u[2 * i], u[2 * i + 1]);
                let uj = C64::new(u[2 * j], u[2 * j + 1]);
                s += g.get(i, j) * ui * uj.conj();
            }
        }
        2.0 * s.re
    };
    let dims = 2 * n;
    let mut h = [[0.0; 4]; 4];
    for a in 0..dims {
        for b in 0..dims {
            let mut ea = [0.0; 4];
            ea[a] = 1.0;
            let mut eb = [0.0; 4];
            eb[b] = 1.0;
            let mut s = ea;
            for k in 0..4 {
                s[k] += eb[k];
            }
            h[a][b] = 0.5 * (q(&s) - q(&ea) - q(&eb));
        }
    }
    h
}

fn quad(h: &[[f64; 4]; 4], v: &[f64; 4], dims: usize) -> f64 {
    let mut s = 0.0;
    for a in 0..dims {
        for b in 0..dims {
            s += h[a][b] * v[a] * v[b];
        }
    }
    s
}

/// Flat-torus geometry of the initial metric around `x0`.
#[derive(Debug, Clone)]
pub struct Cutoff {
    pub phi: Vec<f64>,
    /// `d_{g(0)}(x0, .)`.
    pub dist: Vec<f64>,
    /// Differential of the distance, zero at `x0`.
    pub dist_gradient: Vec<[f64; 4]>,
    /// `rho / sqrt K`.
    pub radius: f64,
    /// `sqrt K / (theta rho)`, the Lipschitz constant of `phi`.
    pub slope: f64,
    /// Half the shortest lattice vector.
    pub embedding_bound: f64,
    pub center: usize,
}

/// Half the length of the shortest nonzero period vector in the metric of `g0`.
pub fn embedding_bound(grid: &Grid, g0: &MetricField) -> Result<f64, MonitorError> {
    let h = real_metric(&flat_metric(grid, g0)?);
    let dims = grid.real_dim();
    let mut best = f64::INFINITY;
    for m in lattice_shifts(dims) {
        if m.iter().all(|&v| v == 0) {
            continue;
        }
        let mut v = [0.0; 4];
        for a in 0..dims {
            v[a] = m[a] as f64 * grid.periods()[a];
        }
        best = best.min(quad(&h, &v, dims).sqrt());
    }
    Ok(0.5 * best)
}

fn lattice_shifts(dims: usize) -> Vec<[i32; 4]> {
    (0..3usize.pow(dims as u32))
        .map(|mut r| {
            let mut m = [0i32; 4];
            for item in m.iter_mut().take(dims) {
                *item = (r % 3) as i32 - 1;
                r /= 3;
            }
            m
        })
        .collect()
}

/// The constant value of a flat metric.
fn flat_metric(grid: &Grid, g0: &MetricField) -> Result<crate::field::CMat, MonitorError> {
    grid.check_len(g0.len())?;
    let mean = g0.field().mean();
    let worst = (0..g0.len())
        .flat_map(|p| {
            let m = g0.at(p);
            (0..4).map(move |k| (m.a[k] - mean.a[k]).norm())
        })
        .fold(0.0, f64::max);
    if worst > 1e-10 * (1.0 + mean.a[0].norm()) {
        return Err(MonitorError::InvalidConfig(format!(
            "initial metric must be constant for the closed-form distance (variation {worst:e})"
        )));
    }
    Ok(mean)
}

/// `phi = max(0, (rho/sqrt K - d) / (theta rho / sqrt K))`.
pub fn cutoff_field(config: &MonitorConfig, grid: &Grid, g0: &MetricField, k: f64) -> Result<Cutoff, MonitorError> {
    config.check()?;
    let h = real_metric(&flat_metric(grid, g0)?);
    let dims = grid.real_dim();
    let radius = config.rho / k.sqrt();
    let bound = embedding_bound(grid, g0)?;
    if radius > bound {
        return Err(MonitorError::BallTooLarge { radius, bound });
    }
    let center = config.center(grid)?;
    let x0 = grid.coords(center);
    let shifts = lattice_shifts(dims);
    let periods = grid.periods().to_vec();
    let mut dist = Vec::with_capacity(grid.len());
    let mut dist_gradient = Vec::with_capacity(grid.len());
    for p in 0..grid.len() {
        let x = grid.coords(p);
        let mut base = [0.0; 4];
        for a in 0..dims {
            let d = x[a] - x0[a];
            base[a] = d - periods[a] * (d / periods[a]).round();
        }
        let mut best = (f64::INFINITY, [0.0; 4]);
        for m in &shifts {
            let mut v = base;
            for a in 0..dims {
                v[a] += m[a] as f64 * periods[a];
            }
            let q = quad(&h, &v, dims);
            if q < best.0 {
                best = (q, v);
            }
        }
        let d = best.0.sqrt();
        let mut grad = [0.0; 4];
        if d > 0.0 {
            for a in 0..dims {
                grad[a] = (0..dims).map(|b| h[a][b] * best.1[b]).sum::<f64>() / d;
            }
        }
        dist.push(d);
        dist_gradient.push(grad);
    }
    let slope = k.sqrt() / (config.theta * config.rho);
    let phi = dist.iter().map(|d| ((radius - d) * slope).max(0.0)).collect();
    Ok(Cutoff {
        phi,
        dist,
        dist_gradient,
        radius,
        slope,
        embedding_bound: bound,
        center,
    })
}

impl Cutoff {
    /// `|nabla phi|^2` in the metric `g`.
    pub fn gradient_norm_sqr(&self, g: &MetricField) -> Vec<f64> {
        let n = g.n();
        (0..g.len())
            .map(|p| {
                if self.phi[p] <= 0.0 {
                    return 0.0;
                }
                let c = &self.dist_gradient[p];
                let du: Vec<C64> = (0..n).map(|i| 0.5 * C64::new(c[2 * i], -c[2 * i + 1])).collect();
                self.slope * self.slope * gradient_norm_sqr(&g.at(p).inverse(), &du)
            })
            .collect()
    }
}

/// Pointwise ingredients of the monitored integrals.
#[derive(Debug, Clone)]
pub struct Pointwise {
    pub rm: Vec<f64>,
    pub ric: Vec<f64>,
    pub alpha: Vec<f64>,
    pub grad_ric2: Vec<f64>,
    pub grad_rm2: Vec<f64>,
    pub grad_alpha2: Vec<f64>,
    pub grad_trace2: Vec<f64>,
    pub grad_phi2: Vec<f64>,
    /// Riemannian volume weight of each cell, `2^n det g dx`.
    pub dv: Vec<f64>,
}

impl Pointwise {
    pub fn new(bundle: &CurvatureBundle, alpha: &HermField, cutoff: &Cutoff) -> Self {
        let norms = pointwise_norms(bundle, alpha);
        let d = covariant_derivative_norms(bundle, alpha);
        let scale = 2f64.powi(bundle.n() as i32) * bundle.grid().cell_volume();
        Pointwise {
            rm: norms.rm,
            ric: norms.ric,
            alpha: norms.alpha,
            grad_ric2: d.grad_ric,
            grad_rm2: d.grad_rm,
            grad_alpha2: d.grad_alpha,
            grad_trace2: d.grad_trace_alpha,
            grad_phi2: cutoff.gradient_norm_sqr(&bundle.metric),
            dv: bundle.volume_density.iter().map(|v| v * scale).collect(),
        }
    }
}

/// Raw integrals over one snapshot. `a` and `b` are the good and bad terms;
/// the `j_*` integrals are the remaining pieces of `U`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Integrals {
    pub a: [f64; 4],
    pub b: [f64; 5],
    /// `int |Ric|^2 |Rm|^{p-1} phi^{2p}`.
    pub j_ric: f64,
    /// `int |alpha|^2 |Rm|^{p-1} phi^{2p}`.
    pub j_alpha_rm: f64,
    /// `int |alpha|^2 phi^{2p}`.
    pub j_alpha: f64,
    /// `int phi^{2p}`.
    pub phi_mass: f64,
    /// Volume of the outer ball.
    pub vol_ball: f64,
    /// `int |Rm|^p` over the outer ball.
    pub lp_outer: f64,
    /// `int |Rm|^p` over the inner ball.
    pub lp_inner: f64,
    /// Volume of the inner ball.
    pub vol_inner: f64,
}

const SLOTS: usize = 17;

impl Integrals {
    fn from_slots(s: &[f64; SLOTS], k: f64) -> Self {
        Integrals {
            a: [s[0], s[1], s[2], s[3]],
            b: [s[4] / k, s[5], s[6] / k, s[7] / k, s[8]],
            j_ric: s[9],
            j_alpha_rm: s[10],
            j_alpha: s[11],
            phi_mass: s[12],
            vol_ball: s[13],
            lp_outer: s[14],
            lp_inner: s[15],
            vol_inner: s[16],
        }
    }

    pub fn values(&self) -> Vec<f64> {
        let mut v = self.a.to_vec();
        v.extend_from_slice(&self.b);
        v.extend_from_slice(&[
            self.j_ric,
            self.j_alpha_rm,
            self.j_alpha,
            self.phi_mass,
            self.vol_ball,
            self.lp_outer,
            self.lp_inner,
            self.vol_inner,
        ]);
        v
    }

    /// Largest relative disagreement with another evaluation.
    pub fn max_rel_diff(&self, other: &Integrals) -> f64 {
        self.values()
            .iter()
            .zip(other.values())
            .map(|(x, y)| {
                let scale = x.abs().max(y.abs());
                if scale == 0.0 {
                    0.0
                } else {
                    (x - y).abs() / scale
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Summation path for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Path {
    /// Grid order, plain sums, integer powers of the norms.
    Direct,
    /// Reverse order, compensated sums, powers taken from squared norms.
    Compensated,
}

/// Neumaier compensated sum.
#[derive(Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    c: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

fn direct_terms(w: &Pointwise, cut: &Cutoff, p: i32, i: usize, inner: f64) -> [f64; SLOTS] {
    let (rm, phi, dv) = (w.rm[i], cut.phi[i], w.dv[i]);
    let rm_p = rm.powi(p);
    let rm_p1 = rm.powi(p - 1);
    let rm_p3 = rm.powi(p - 3);
    let ph2p = phi.powi(2 * p);
    let in_ball = cut.dist[i] < cut.radius;
    let in_inner = cut.dist[i] < inner;
    let al2 = w.alpha[i] * w.alpha[i];
    [
        rm_p * ph2p * dv,
        rm_p1 * w.grad_phi2[i] * phi.powi(2 * p - 1) * dv,
        rm_p1 * ph2p * dv,
        rm_p1 * w.grad_phi2[i] * phi.powi(2 * p - 2) * dv,
        w.grad_ric2[i] * rm_p1 * ph2p * dv,
        w.grad_rm2[i] * rm_p3 * ph2p * dv,
        w.grad_alpha2[i] * rm_p1 * ph2p * dv,
        w.grad_trace2[i] * rm_p1 * ph2p * dv,
        w.grad_alpha2[i] * rm_p3 * ph2p * dv,
        w.ric[i] * w.ric[i] * rm_p1 * ph2p * dv,
        al2 * rm_p1 * ph2p * dv,
        al2 * ph2p * dv,
        ph2p * dv,
        if in_ball { dv } else { 0.0 },
        if in_ball { rm_p * dv } else { 0.0 },
        if in_inner { rm_p * dv } else { 0.0 },
        if in_inner { dv } else { 0.0 },
    ]
}

fn compensated_terms(w: &Pointwise, cut: &Cutoff, p: i32, i: usize, inner: f64) -> [f64; SLOTS] {
    let pf = p as f64;
    let rm2 = w.rm[i] * w.rm[i];
    let pw = |e: f64| if e == 0.0 { 1.0 } else { rm2.powf(0.5 * e) };
    let phi = cut.phi[i];
    let dv = w.dv[i];
    let weight = |e: f64| if phi == 0.0 { 0.0 } else { (e * phi.ln()).exp() * dv };
    let (wp, wp1, wp2) = (weight(2.0 * pf), weight(2.0 * pf - 1.0), weight(2.0 * pf - 2.0));
    let (rp, rp1, rp3) = (pw(pf), pw(pf - 1.0), pw(pf - 3.0));
    let al2 = w.alpha[i].powi(2);
    let in_ball = !(cut.dist[i] >= cut.radius);
    let in_inner = !(cut.dist[i] >= inner);
    [
        wp * rp,
        wp1 * w.grad_phi2[i] * rp1,
        wp * rp1,
        wp2 * w.grad_phi2[i] * rp1,
        wp * rp1 * w.grad_ric2[i],
        wp * rp3 * w.grad_rm2[i],
        wp * rp1 * w.grad_alpha2[i],
        wp * rp1 * w.grad_trace2[i],
        wp * rp3 * w.grad_alpha2[i],
        wp * rp1 * w.ric[i].powi(2),
        wp * rp1 * al2,
        wp * al2,
        wp,
        if in_ball { dv } else { 0.0 },
        if in_ball { dv * rp } else { 0.0 },
        if in_inner { dv * rp } else { 0.0 },
        if in_inner { dv } else { 0.0 },
    ]
}

/// All monitored integrals of one snapshot. `k` divides the `B1`, `B3`, `B4` terms.
pub fn integrate(w: &Pointwise, cut: &Cutoff, config: &MonitorConfig, k: f64, path: Path) -> Integrals {
    let p = config.p as i32;
    let inner = cut.radius / config.tau;
    let len = cut.phi.len();
    let mut slots = [0.0; SLOTS];
    match path {
        Path::Direct => {
            for i in 0..len {
                let t = direct_terms(w, cut, p, i, inner);
                for (s, v) in slots.iter_mut().zip(t) {
                    *s += v;
                }
            }
        }
        Path::Compensated => {
            let mut acc = [Neumaier::default(); SLOTS];
            for i in (0..len).rev() {
                let t = compensated_terms(w, cut, p, i, inner);
                for (s, v) in acc.iter_mut().zip(t) {
                    s.add(v);
                }
            }
            for (s, a) in slots.iter_mut().zip(acc) {
                *s = a.value();
            }
        }
    }
    Integrals::from_slots(&slots, k)
}

/// Weights of the four non-leading terms of `U`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UWeights {
    pub ric: f64,
    pub rm: f64,
    pub alpha_rm: f64,
    pub alpha: f64,
}

impl UWeights {
    pub fn new(p: u32, k: f64, l: f64, c: f64) -> Self {
        let pf = p as f64;
        let s = k * k + l * l;
        UWeights {
            ric: 1.0 / (2.0 * k),
            rm: c * pf.powi(6) * s / (k * (pf - 1.0)),
            alpha_rm: c * pf * pf * s / (k * l * l),
            alpha: c.powf(0.5 * (pf + 3.0)) * pf.powi(2 * p as i32) * s / (k * l * l),
        }
    }
}

/// `U = A1 + sum of the weighted localized integrals`.
pub fn compute_u(q: &Integrals, w: &UWeights) -> f64 {
    q.a[0] + w.ric * q.j_ric + w.rm * q.a[2] + w.alpha_rm * q.j_alpha_rm + w.alpha * q.j_alpha
}

/// The same sum assembled in the opposite order from the other path.
pub fn compute_u_reversed(q: &Integrals, w: &UWeights) -> f64 {
    let mut acc = Neumaier::default();
    for v in [q.j_alpha * w.alpha, q.j_alpha_rm * w.alpha_rm, q.a[2] * w.rm, q.j_ric * w.ric, q.a[0]] {
        acc.add(v);
    }
    acc.value()
}

/// Constants of the Gronwall chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallConstants {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub k_prime: f64,
    pub a_const: f64,
    pub b_const: f64,
    /// `ln B`, finite even when `B` overflows.
    pub ln_b: f64,
}

/// `log(sum exp(x_i))`.
fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Constants for exponent `p`, bounds `K, L`, cutoff `theta, rho`, horizon `T`
/// (real time), real-system `a, b` and universal constant `c`.
#[allow(clippy::too_many_arguments)]
pub fn gronwall_constants(p: u32, k: f64, l: f64, theta: f64, rho: f64, t: f64, a: f64, b: f64, c: f64) -> GronwallConstants {
    let pf = p as f64;
    let s = k * k + l * l;
    let a1 = 1.0 + k + l + k / (pf.powi(4) * l * l);
    let a2 = l.powf(pf - 1.0) / k.powf(0.5 * (pf - 3.0));
    let e = 1.0 / (pf - 2.0);
    let a3 = (1.0 + k + l) * l.max(1.0).powf(pf + 2.0 + e) / k.min(1.0).powf(0.5 * (pf - 2.0 + e));
    let k_prime = k + a.abs() + b.abs() * l;
    let a_const = c * pf.powi(6) * (1.0 + s / k) * a1;
    let ln_prefactor = 0.5 * (pf + 3.0) * c.ln() + 2.0 * pf * pf.ln() + s.ln() - 2.0 * pf * theta.ln() - k.ln();
    let ln_bracket = log_sum_exp(&[
        a1.ln() + pf * k_prime.ln() - 2.0 * pf * rho.ln() + 2.0 * k_prime * pf * t,
        2.0 * a2.max(1.0).ln(),
        a3.ln(),
    ]);
    let ln_b = ln_prefactor + ln_bracket;
    GronwallConstants {
        a1,
        a2,
        a3,
        k_prime,
        a_const,
        b_const: ln_b.exp(),
        ln_b,
    }
}

#[cfg(test)]
mod tests;
