use crate::error::GeometryError;
use crate::field::{CMat, HermField, MetricField};
use crate::grid::Grid;
use crate::spectral::{sym_anti, sym_holo, C64};

use super::{form_norm_sqr, gradient_norm_sqr, pair_inner};

/// Pointwise value of a four-index tensor `T_{i jbar k lbar}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tensor4 {
    pub n: usize,
    pub a: [C64; 16],
}

impl Tensor4 {
    pub fn zeros(n: usize) -> Self {
        Tensor4 {
            n,
            a: [C64::default(); 16],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> C64 {
        let n = self.n;
        self.a[((i * n + j) * n + k) * n + l]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: C64) {
        let n = self.n;
        self.a[((i * n + j) * n + k) * n + l] = v;
    }

    /// `sum A_{i jbar k lbar} conj(B_{a bbar c dbar}) g^{i abar} g^{b jbar} g^{k cbar} g^{d lbar}`.
    pub fn inner(&self, other: &Tensor4, h: &CMat) -> C64 {
        let n = self.n;
        let mut s = C64::default();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let t = self.get(i, j, k, l);
                        for a in 0..n {
                            for b in 0..n {
                                let w = h.get(a, i) * h.get(j, b);
                                for c in 0..n {
                                    for d in 0..n {
                                        s += t
                                            * other.get(a, b, c, d).conj()
                                            * w
                                            * h.get(c, k)
                                            * h.get(l, d);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        s
    }
}

/// Riemann tensor field `R_{i jbar k lbar}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Riemann {
    n: usize,
    data: Vec<Tensor4>,
}

impl Riemann {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, p: usize) -> &Tensor4 {
        &self.data[p]
    }

    /// `g^{i jbar} R_{i jbar k lbar}`.
    pub fn contract(&self, metric: &MetricField) -> HermField {
        HermField::from_fn(self.n, self.len(), |p| {
            let h = metric.at(p).inverse();
            let r = &self.data[p];
            let mut m = CMat::zeros(self.n);
            for k in 0..self.n {
                for l in 0..self.n {
                    let mut s = C64::default();
                    for i in 0..self.n {
                        for j in 0..self.n {
                            s += h.get(j, i) * r.get(i, j, k, l);
                        }
                    }
                    m.set(k, l, s);
                }
            }
            m
        })
    }
}

/// Holomorphic derivatives `d_k v` of a complex field, one vector per `k`.
fn holo_gradient(grid: &Grid, values: &[C64]) -> Vec<Vec<C64>> {
    let s = grid.spectral();
    let spec = s.forward_complex(values);
    (0..grid.n_complex())
        .map(|k| s.apply(&spec, |w| sym_holo(w, k)))
        .collect()
}

fn real_holo_gradient(grid: &Grid, values: &[f64]) -> Vec<Vec<C64>> {
    let s = grid.spectral();
    let spec = s.forward_real(values);
    (0..grid.n_complex())
        .map(|k| s.apply(&spec, |w| sym_holo(w, k)))
        .collect()
}

/// `R_{i jbar} = -d_i d_{jbar} log det g`.
pub fn ricci_form(grid: &Grid, metric: &MetricField) -> Result<HermField, GeometryError> {
    grid.check_len(metric.len())?;
    let det = metric.det();
    if let Some((p, d)) = det.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(GeometryError::PositivityLost {
            point: p,
            min_eigenvalue: *d,
            threshold: 0.0,
        });
    }
    let logdet: Vec<f64> = det.iter().map(|d| d.ln()).collect();
    let mut ric = super::ddbar(grid, &logdet);
    ric = ric.zip_map(&ric, |a, _| -a);
    Ok(ric)
}

/// Full curvature tensor
/// `R_{i jbar k lbar} = -d_i d_{jbar} g_{k lbar} + g^{p qbar} d_i g_{k qbar} d_{jbar} g_{p lbar}`.
pub fn riemann_tensor(grid: &Grid, metric: &MetricField) -> Result<Riemann, GeometryError> {
    grid.check_len(metric.len())?;
    let n = metric.n();
    let len = metric.len();
    let s = grid.spectral();
    let inverse: Vec<CMat> = (0..len).map(|p| metric.at(p).inverse()).collect();
    let comp_spec: Vec<Vec<C64>> = (0..n * n)
        .map(|c| s.forward_complex(&metric.field().component(c / n, c % n)))
        .collect();
    // dg[k][c] = d_k g_c, ddg[(i, j)][c] = d_i d_{jbar} g_c
    let dg: Vec<Vec<Vec<C64>>> = (0..n)
        .map(|k| comp_spec.iter().map(|sp| s.apply(sp, |w| sym_holo(w, k))).collect())
        .collect();
    let mut ddg = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let per: Vec<Vec<C64>> = comp_spec
                .iter()
                .map(|sp| s.apply(sp, |w| sym_holo(w, i) * sym_anti(w, j)))
                .collect();
            ddg.push(per);
        }
    }
    let mut data = Vec::with_capacity(len);
    for p in 0..len {
        let h = &inverse[p];
        let mut t = Tensor4::zeros(n);
        // d_{jbar} g_{p lbar} = conj(d_j g_{l pbar})
        let dbar = |j: usize, a: usize, b: usize| dg[j][b * n + a][p].conj();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut v = -ddg[i * n + j][k * n + l][p];
                        for pp in 0..n {
                            for q in 0..n {
                                v += dg[i][k * n + q][p] * h.get(q, pp) * dbar(j, pp, l);
                            }
                        }
                        t.set(i, j, k, l, v);
                    }
                }
            }
        }
        data.push(t);
    }
    Ok(Riemann { n, data })
}

/// Derived curvature fields of a metric.
#[derive(Debug, Clone)]
pub struct CurvatureBundle {
    grid: Grid,
    pub metric: MetricField,
    pub inverse_metric: Vec<CMat>,
    /// `d_k g`, indexed `[k]`.
    pub metric_gradient: Vec<HermField>,
    pub ricci: HermField,
    pub riemann: Riemann,
    pub scalar: Vec<f64>,
    pub norm_rm: Vec<f64>,
    pub norm_ric: Vec<f64>,
    pub volume_density: Vec<f64>,
}

impl CurvatureBundle {
    pub fn new(grid: &Grid, metric: &MetricField) -> Result<Self, GeometryError> {
        let n = metric.n();
        let len = metric.len();
        let ricci = ricci_form(grid, metric)?;
        let riemann = riemann_tensor(grid, metric)?;
        let inverse_metric: Vec<CMat> = (0..len).map(|p| metric.at(p).inverse()).collect();
        let mut metric_gradient = vec![HermField::zeros(n, len); n];
        for i in 0..n {
            for j in 0..n {
                let d = holo_gradient(grid, &metric.field().component(i, j));
                for (k, dk) in d.iter().enumerate() {
                    metric_gradient[k].set_component(i, j, dk);
                }
            }
        }
        let mut scalar = Vec::with_capacity(len);
        let mut norm_rm = Vec::with_capacity(len);
        let mut norm_ric = Vec::with_capacity(len);
        for p in 0..len {
            let h = &inverse_metric[p];
            let r = ricci.at(p);
            scalar.push(super::contract_trace(h, &r));
            norm_ric.push(form_norm_sqr(h, &r).max(0.0).sqrt());
            let rm = riemann.at(p);
            norm_rm.push(rm.inner(rm, h).re.max(0.0).sqrt());
        }
        Ok(CurvatureBundle {
            grid: grid.clone(),
            volume_density: metric.det(),
            metric: metric.clone(),
            inverse_metric,
            metric_gradient,
            ricci,
            riemann,
            scalar,
            norm_rm,
            norm_ric,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.metric.n()
    }

    pub fn len(&self) -> usize {
        self.metric.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metric.is_empty()
    }

    /// `Gamma^p_{k i} = g^{p qbar} d_k g_{i qbar}` at one point, indexed `[k][i][p]`.
    fn christoffel(&self, p: usize) -> [[[C64; 2]; 2]; 2] {
        let n = self.n();
        let h = &self.inverse_metric[p];
        let mut gam = [[[C64::default(); 2]; 2]; 2];
        for k in 0..n {
            let dk = self.metric_gradient[k].at(p);
            for i in 0..n {
                for pp in 0..n {
                    let mut s = C64::default();
                    for q in 0..n {
                        s += h.get(q, pp) * dk.get(i, q);
                    }
                    gam[k][i][pp] = s;
                }
            }
        }
        gam
    }

    /// `nabla_k T_{i jbar}` for every `k` at every point.
    fn covariant_derivative_form(&self, form: &HermField) -> Vec<Vec<CMat>> {
        let n = self.n();
        let len = self.len();
        let mut partial = vec![vec![vec![C64::default(); len]; n * n]; n];
        for i in 0..n {
            for j in 0..n {
                for (k, dk) in holo_gradient(&self.grid, &form.component(i, j)).into_iter().enumerate() {
                    partial[k][i * n + j] = dk;
                }
            }
        }
        (0..len)
            .map(|p| {
                let gam = self.christoffel(p);
                let t = form.at(p);
                (0..n)
                    .map(|k| {
                        let mut m = CMat::zeros(n);
                        for i in 0..n {
                            for j in 0..n {
                                let mut v = partial[k][i * n + j][p];
                                for q in 0..n {
                                    v -= gam[k][i][q] * t.get(q, j);
                                }
                                m.set(i, j, v);
                            }
                        }
                        m
                    })
                    .collect()
            })
            .collect()
    }

    fn form_gradient_norm_sqr(&self, form: &HermField) -> Vec<f64> {
        let n = self.n();
        self.covariant_derivative_form(form)
            .iter()
            .enumerate()
            .map(|(p, d)| {
                let h = &self.inverse_metric[p];
                let mut s = C64::default();
                for k in 0..n {
                    for l in 0..n {
                        s += h.get(l, k) * pair_inner(h, &d[k], &d[l]);
                    }
                }
                2.0 * s.re
            })
            .collect()
    }

    fn riemann_gradient_norm_sqr(&self) -> Vec<f64> {
        let n = self.n();
        let len = self.len();
        let n4 = n * n * n * n;
        // partial[m][component][p]
        let mut partial = vec![vec![Vec::new(); n4]; n];
        for c in 0..n4 {
            let values: Vec<C64> = (0..len).map(|p| self.riemann.at(p).a[c]).collect();
            for (m, dm) in holo_gradient(&self.grid, &values).into_iter().enumerate() {
                partial[m][c] = dm;
            }
        }
        (0..len)
            .map(|p| {
                let h = &self.inverse_metric[p];
                let gam = self.christoffel(p);
                let r = self.riemann.at(p);
                let d: Vec<Tensor4> = (0..n)
                    .map(|m| {
                        let mut t = Tensor4::zeros(n);
                        for c in 0..n4 {
                            t.a[c] = partial[m][c][p];
                        }
                        for i in 0..n {
                            for j in 0..n {
                                for k in 0..n {
                                    for l in 0..n {
                                        let mut v = t.get(i, j, k, l);
                                        for q in 0..n {
                                            v -= gam[m][i][q] * r.get(q, j, k, l);
                                            v -= gam[m][k][q] * r.get(i, j, q, l);
                                        }
                                        t.set(i, j, k, l, v);
                                    }
                                }
                            }
                        }
                        t
                    })
                    .collect();
                let mut s = C64::default();
                for m in 0..n {
                    for mm in 0..n {
                        s += h.get(mm, m) * d[m].inner(&d[mm], h);
                    }
                }
                2.0 * s.re
            })
            .collect()
    }
}

/// Squared covariant-derivative norms.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeNorms {
    pub grad_ric: Vec<f64>,
    pub grad_rm: Vec<f64>,
    pub grad_alpha: Vec<f64>,
    pub grad_trace_alpha: Vec<f64>,
}

pub fn covariant_derivative_norms(bundle: &CurvatureBundle, form: &HermField) -> DerivativeNorms {
    let trace = super::trace_form(&bundle.metric, form);
    let dtr = real_holo_gradient(bundle.grid(), &trace);
    let n = bundle.n();
    let grad_trace_alpha = (0..bundle.len())
        .map(|p| {
            let du: Vec<C64> = (0..n).map(|k| dtr[k][p]).collect();
            gradient_norm_sqr(&bundle.inverse_metric[p], &du)
        })
        .collect();
    DerivativeNorms {
        grad_ric: bundle.form_gradient_norm_sqr(&bundle.ricci),
        grad_rm: bundle.riemann_gradient_norm_sqr(),
        grad_alpha: bundle.form_gradient_norm_sqr(form),
        grad_trace_alpha,
    }
}

/// Pointwise norms `|Rm|, |Ric|, |alpha|` and their sups.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseNorms {
    pub rm: Vec<f64>,
    pub ric: Vec<f64>,
    pub alpha: Vec<f64>,
    pub sup_rm: f64,
    pub sup_ric: f64,
    pub sup_alpha: f64,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

pub fn pointwise_norms(bundle: &CurvatureBundle, form: &HermField) -> PointwiseNorms {
    let alpha: Vec<f64> = (0..bundle.len())
        .map(|p| form_norm_sqr(&bundle.inverse_metric[p], &form.at(p)).max(0.0).sqrt())
        .collect();
    PointwiseNorms {
        sup_rm: sup(&bundle.norm_rm),
        sup_ric: sup(&bundle.norm_ric),
        sup_alpha: sup(&alpha),
        rm: bundle.norm_rm.clone(),
        ric: bundle.norm_ric.clone(),
        alpha,
    }
}

/// Real gradient norm `|du|^2_g` of a scalar field.
pub fn scalar_gradient_norm_sqr(bundle: &CurvatureBundle, u: &[f64]) -> Vec<f64> {
    let du = real_holo_gradient(bundle.grid(), u);
    let n = bundle.n();
    (0..bundle.len())
        .map(|p| {
            let d: Vec<C64> = (0..n).map(|k| du[k][p]).collect();
            gradient_norm_sqr(&bundle.inverse_metric[p], &d)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::metric_from_potential;
    use std::f64::consts::PI;

    fn cosine_metric(grid: &Grid, eps: f64) -> MetricField {
        let phi = grid.sample(|x| eps * (2.0 * PI * x[0]).cos());
        metric_from_potential(grid, &MetricField::identity(grid), &phi).unwrap()
    }

    fn wavy_n2(grid: &Grid) -> MetricField {
        wavy_n2_scaled(grid, 1.0)
    }

    fn wavy_n2_scaled(grid: &Grid, s: f64) -> MetricField {
        let phi = grid.sample(|x| {
            s * (0.02 * (2.0 * PI * x[0]).cos()
                + 0.015 * (2.0 * PI * (x[1] + x[2])).sin()
                + 0.01 * (2.0 * PI * (x[3] - x[0])).cos())
        });
        let mut base = CMat::identity(2);
        base.set(0, 1, C64::new(0.1, 0.05));
        base.set(1, 0, C64::new(0.1, -0.05));
        metric_from_potential(grid, &MetricField::flat(base, grid).unwrap(), &phi).unwrap()
    }

    #[test]
    fn constant_metrics_are_flat() {
        let grid = Grid::uniform(2, 8, 1.0).unwrap();
        let mut m = CMat::identity(2);
        m.set(0, 1, C64::new(0.3, 0.2));
        m.set(1, 0, C64::new(0.3, -0.2));
        for c in [1.0, 7.5] {
            let mut mc = m;
            mc.a.iter_mut().for_each(|v| *v *= c);
            let b = CurvatureBundle::new(&grid, &MetricField::flat(mc, &grid).unwrap()).unwrap();
            assert!(b.norm_rm.iter().chain(&b.norm_ric).all(|v| v.abs() < 1e-13));
            assert!(b.ricci.sup_abs_diff(&HermField::zeros(2, grid.len())) < 1e-13);
        }
    }

    /// Sixth-order centered finite differences of `-(1/4) Laplacian log g` on the
    /// closed-form metric `1 - eps pi^2 cos(2 pi x)`.
    #[test]
    fn ricci_matches_finite_difference_oracle() {
        let n = 128;
        let grid = Grid::uniform(1, n, 1.0).unwrap();
        let eps = 0.01;
        let ric = ricci_form(&grid, &cosine_metric(&grid, eps)).unwrap();
        let h = 1.0 / n as f64;
        let lg = |x: f64| (1.0 - eps * PI * PI * (2.0 * PI * x).cos()).ln();
        for p in (0..grid.len()).step_by(37) {
            let x = grid.coords(p)[0];
            let d2 = (2.0 * lg(x + 3.0 * h) - 27.0 * lg(x + 2.0 * h) + 270.0 * lg(x + h) - 490.0 * lg(x)
                + 270.0 * lg(x - h)
                - 27.0 * lg(x - 2.0 * h)
                + 2.0 * lg(x - 3.0 * h))
                / (180.0 * h * h);
            let expect = -0.25 * d2;
            assert!((ric.at(p).get(0, 0).re - expect).abs() < 1e-8, "{p}");
        }
    }

    #[test]
    fn n1_norm_identities() {
        let grid = Grid::uniform(1, 32, 1.0).unwrap();
        let phi = grid.sample(|x| 0.002 * (2.0 * PI * x[0]).cos() + 0.001 * (2.0 * PI * (x[0] + 2.0 * x[1])).sin());
        let g = metric_from_potential(&grid, &MetricField::identity(&grid), &phi).unwrap();
        let b = CurvatureBundle::new(&grid, &g).unwrap();
        for p in 0..grid.len() {
            let r = b.scalar[p].abs();
            // |Ric| and R share the log-det route; |Rm| comes from the
            // independent product formula.
            assert!((b.norm_ric[p] - r).abs() <= 1e-12 * (1.0 + r));
            assert!((b.norm_rm[p] - r).abs() <= 1e-10 * (1.0 + r), "{} {}", b.norm_rm[p], r);
        }
    }

    #[test]
    fn contracted_riemann_is_ricci() {
        let grid = Grid::uniform(1, 32, 1.0).unwrap();
        let g = cosine_metric(&grid, 0.02);
        let b = CurvatureBundle::new(&grid, &g).unwrap();
        assert!(b.riemann.contract(&g).sup_abs_diff(&b.ricci) < 1e-11);

        // log det g is not band-limited, so in n = 2 the two routes agree
        // only up to a spectrally decaying aliasing error.
        let errs: Vec<f64> = [12usize, 16, 20]
            .iter()
            .map(|&n| {
                let grid = Grid::uniform(2, n, 1.0).unwrap();
                let g = wavy_n2_scaled(&grid, 0.25);
                let b = CurvatureBundle::new(&grid, &g).unwrap();
                b.riemann.contract(&g).sup_abs_diff(&b.ricci)
            })
            .collect();
        assert!(errs[1] < 1e-2 * errs[0] && errs[2] < 1e-2 * errs[1], "{errs:?}");
        assert!(errs[2] < 1e-10, "{errs:?}");
    }

    #[test]
    fn kaehler_symmetries_hold() {
        let grid = Grid::uniform(2, 8, 1.0).unwrap();
        let b = CurvatureBundle::new(&grid, &wavy_n2(&grid)).unwrap();
        for p in 0..grid.len() {
            let r = b.riemann.at(p);
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        for l in 0..2 {
                            let v = r.get(i, j, k, l);
                            assert!((v - r.get(k, j, i, l)).norm() < 1e-10);
                            assert!((v - r.get(i, l, k, j)).norm() < 1e-10);
                            assert!((v - r.get(j, i, l, k).conj()).norm() < 1e-10);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn product_metric_has_no_mixed_curvature() {
        let g1 = Grid::uniform(1, 16, 1.0).unwrap();
        let g2 = Grid::uniform(2, 16, 1.0).unwrap();
        let f1 = |x: f64, y: f64| 0.02 * (2.0 * PI * x).cos() + 0.01 * (2.0 * PI * (x + y)).sin();
        let f2 = |_x: f64, y: f64| 0.015 * (2.0 * PI * y).sin();
        let phi = g2.sample(|x| f1(x[0], x[1]) + f2(x[2], x[3]));
        let b = CurvatureBundle::new(&g2, &metric_from_potential(&g2, &MetricField::identity(&g2), &phi).unwrap())
            .unwrap();
        let one = |f: &dyn Fn(f64, f64) -> f64| {
            let m = metric_from_potential(&g1, &MetricField::identity(&g1), &g1.sample(|x| f(x[0], x[1]))).unwrap();
            CurvatureBundle::new(&g1, &m).unwrap()
        };
        let b1 = one(&f1);
        let b2 = one(&f2);
        for p in 0..g2.len() {
            let idx = g2.multi_index(p);
            let p1 = g1.flat_index(&idx[..2]);
            let p2 = g1.flat_index(&idx[2..4]);
            let r = b.riemann.at(p);
            assert!((r.get(0, 0, 0, 0) - b1.riemann.at(p1).get(0, 0, 0, 0)).norm() < 1e-10);
            assert!((r.get(1, 1, 1, 1) - b2.riemann.at(p2).get(0, 0, 0, 0)).norm() < 1e-10);
            for (i, j, k, l) in [(0, 1, 0, 0), (1, 0, 1, 1), (0, 0, 1, 1), (0, 1, 1, 0), (1, 0, 0, 1)] {
                assert!(r.get(i, j, k, l).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn flat_metric_derivative_norms_are_coordinate_norms() {
        let grid = Grid::uniform(1, 16, 1.0).unwrap();
        let b = CurvatureBundle::new(&grid, &MetricField::identity(&grid)).unwrap();
        let constant = HermField::from_scalar(&vec![1.3; grid.len()]);
        let d = covariant_derivative_norms(&b, &constant);
        for v in [&d.grad_ric, &d.grad_rm, &d.grad_alpha, &d.grad_trace_alpha] {
            assert!(v.iter().all(|x| x.abs() < 1e-20));
        }
        let eps = 0.1;
        let alpha = HermField::from_scalar(&grid.sample(|x| 1.0 + eps * (2.0 * PI * x[0]).sin()));
        let d = covariant_derivative_norms(&b, &alpha);
        for p in 0..grid.len() {
            // |nabla a|^2 = 2 |d_z a|^2 = (a_x^2 + a_y^2) / 2 for the real-form norm
            let ax = eps * 2.0 * PI * (2.0 * PI * grid.coords(p)[0]).cos();
            let expect = 0.5 * ax * ax;
            assert!((d.grad_alpha[p] - expect).abs() < 1e-11);
            assert!((d.grad_trace_alpha[p] - expect).abs() < 1e-11);
        }
    }

    #[test]
    fn pointwise_norm_examples() {
        let grid = Grid::uniform(2, 8, 1.0).unwrap();
        let g = MetricField::identity(&grid);
        let b = CurvatureBundle::new(&grid, &g).unwrap();
        let n = pointwise_norms(&b, g.field());
        assert!(n.alpha.iter().all(|v| (v - 2f64.sqrt()).abs() < 1e-15));
        assert_eq!(n.sup_rm, 0.0);
        assert_eq!(n.sup_ric, 0.0);
    }

    #[test]
    fn grad_ricci_converges_under_refinement() {
        // Error against the finest level decays faster than second order.
        let values: Vec<f64> = [8usize, 12, 16, 32]
            .iter()
            .map(|&n| {
                let grid = Grid::uniform(1, n, 1.0).unwrap();
                let phi = grid.sample(|x| 0.02 * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).cos());
                let g = metric_from_potential(&grid, &MetricField::identity(&grid), &phi).unwrap();
                let b = CurvatureBundle::new(&grid, &g).unwrap();
                let d = covariant_derivative_norms(&b, g.field());
                grid.integrate(&d.grad_ric)
            })
            .collect();
        let e0 = (values[0] - values[3]).abs();
        let e1 = (values[1] - values[3]).abs();
        let e2 = (values[2] - values[3]).abs();
        // Richardson-style observed orders keep growing for spectral methods.
        let order01 = (e0 / e1).ln() / (12.0f64 / 8.0).ln();
        let order12 = (e1 / e2).ln() / (16.0f64 / 12.0).ln();
        assert!(order01 > 4.0 && order12 > order01, "{values:?}");
        assert!(e2 < 1e-4 * values[3].abs(), "{values:?}");
    }

    #[test]
    fn norms_invariant_under_axis_swap() {
        let grid = Grid::uniform(1, 16, 1.0).unwrap();
        let f = |a: f64, b: f64| 0.02 * (2.0 * PI * a).cos() + 0.01 * (2.0 * PI * (a + 2.0 * b)).sin();
        let mk = |swap: bool| {
            let phi = grid.sample(|x| if swap { f(x[1], x[0]) } else { f(x[0], x[1]) });
            let g = metric_from_potential(&grid, &MetricField::identity(&grid), &phi).unwrap();
            let b = CurvatureBundle::new(&grid, &g).unwrap();
            let d = covariant_derivative_norms(&b, g.field());
            (b.norm_rm, d.grad_rm)
        };
        let (rm, grm) = mk(false);
        let (rm_s, grm_s) = mk(true);
        for p in 0..grid.len() {
            let [i, j, ..] = grid.multi_index(p);
            let q = grid.flat_index(&[j, i]);
            assert!((rm[p] - rm_s[q]).abs() < 1e-12 * (1.0 + rm[p]));
            assert!((grm[p] - grm_s[q]).abs() < 1e-11 * (1.0 + grm[p]), "{} {}", grm[p], grm_s[q]);
        }
    }
}
