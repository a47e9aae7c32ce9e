//! Discrete Kaehler geometry on flat periodic lattices.
//!
//! Complex derivatives are `d_i = (d/dx_{2i} - i d/dx_{2i+1}) / 2` and
//! `d_{jbar} = (d/dx_{2i} + i d/dx_{2i+1}) / 2`, evaluated spectrally. The
//! inverse metric entry `g^{i jbar}` is stored as `H[j][i]` with `H = G^{-1}`.
//!
//! Norm convention: `|T|^2` contracts every index of `T` against its conjugate
//! with `g` / `g^{-1}`. Covariant-derivative norms count both the holomorphic
//! and antiholomorphic derivative directions, which makes `|du|^2` agree with
//! the Riemannian gradient norm of the metric `g_R(X, Y) = 2 Re g(X, Ybar)`.
//! In complex dimension one this gives `|Rm| = |Ric| = |R|` (the constants
//! `c(1)` and `c'(1)` both equal 1).

mod curvature;

pub use curvature::{
    covariant_derivative_norms, pointwise_norms, riemann_tensor, ricci_form, CurvatureBundle,
    scalar_gradient_norm_sqr, DerivativeNorms, PointwiseNorms, Riemann, Tensor4,
};

use crate::error::GeometryError;
use crate::field::{CMat, HermField, MetricField};
use crate::grid::Grid;
use crate::spectral::{sym_anti, sym_holo, C64};

/// `d_i d_{jbar} u` for a real scalar field, as a Hermitian matrix field.
pub fn ddbar(grid: &Grid, u: &[f64]) -> HermField {
    let s = grid.spectral();
    let n = grid.n_complex();
    let spec = s.forward_real(u);
    let mut out = HermField::zeros(n, grid.len());
    for i in 0..n {
        for j in i..n {
            let c = s.apply(&spec, |k| sym_holo(k, i) * sym_anti(k, j));
            if i == j {
                let real: Vec<C64> = c.iter().map(|v| C64::new(v.re, 0.0)).collect();
                out.set_component(i, i, &real);
            } else {
                out.set_component(i, j, &c);
                let conj: Vec<C64> = c.iter().map(|v| v.conj()).collect();
                out.set_component(j, i, &conj);
            }
        }
    }
    out
}

/// Metric `g = background + i d dbar phi`.
pub fn metric_from_potential(
    grid: &Grid,
    background: &MetricField,
    phi: &[f64],
) -> Result<MetricField, GeometryError> {
    grid.check_len(phi.len())?;
    let hess = ddbar(grid, phi);
    MetricField::new(background.field().zip_map(&hess, |a, b| a + b))
}

/// Complex Laplacian `g^{i jbar} d_i d_{jbar} u`.
pub fn laplacian(grid: &Grid, metric: &MetricField, u: &[f64]) -> Vec<f64> {
    let hess = ddbar(grid, u);
    (0..grid.len())
        .map(|p| {
            let h = metric.at(p).inverse();
            let d = hess.at(p);
            contract_trace(&h, &d)
        })
        .collect()
}

/// `tr_g alpha = g^{i jbar} alpha_{i jbar}`.
pub fn trace_form(metric: &MetricField, form: &HermField) -> Vec<f64> {
    (0..metric.len())
        .map(|p| contract_trace(&metric.at(p).inverse(), &form.at(p)))
        .collect()
}

/// `sum_{ij} H[j][i] A[i][j]`, real part.
#[inline]
pub(crate) fn contract_trace(h: &CMat, a: &CMat) -> f64 {
    let n = h.n;
    let mut s = C64::default();
    for i in 0..n {
        for j in 0..n {
            s += h.get(j, i) * a.get(i, j);
        }
    }
    s.re
}

/// `|A|^2 = tr(A H A^dagger H)` for a two-index tensor.
#[inline]
pub(crate) fn form_norm_sqr(h: &CMat, a: &CMat) -> f64 {
    pair_inner(h, a, a).re
}

/// `tr(A H B^dagger H)`.
#[inline]
pub(crate) fn pair_inner(h: &CMat, a: &CMat, b: &CMat) -> C64 {
    let n = h.n;
    let mut s = C64::default();
    for i in 0..n {
        for j in 0..n {
            for bb in 0..n {
                for aa in 0..n {
                    s += a.get(i, j) * h.get(j, bb) * b.get(aa, bb).conj() * h.get(aa, i);
                }
            }
        }
    }
    s
}

/// Squared norm of a real function's differential, `2 g^{i jbar} d_i u conj(d_j u)`.
pub(crate) fn gradient_norm_sqr(h: &CMat, du: &[C64]) -> f64 {
    let n = h.n;
    let mut s = C64::default();
    for i in 0..n {
        for j in 0..n {
            s += h.get(j, i) * du[i] * du[j].conj();
        }
    }
    2.0 * s.re
}
