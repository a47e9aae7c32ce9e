//! Riemannian toolkit for a general metric on a two-dimensional torus.
//!
//! Built only from real partial derivatives and Christoffel symbols, so it
//! checks the complex-geometry code along an independent route.
//! Curvature convention: `R_abcd = K (h_ad h_bc - h_ac h_bd)`, so that
//! `h^{pq} R_{p ij q} = R_ij`.

use crate::grid::Grid;
use crate::spectral::sym_real;

pub type Mat2 = [[f64; 2]; 2];
pub type Tensor3 = [[[f64; 2]; 2]; 2];
pub type Tensor4 = [[[[f64; 2]; 2]; 2]; 2];

/// `sum T_{i..} T_{j..} prod h^{i j}` for a covariant tensor stored in
/// binary index order (first index most significant).
pub fn tensor_norm_sqr(hinv: &Mat2, t: &[f64]) -> f64 {
    let rank = t.len().trailing_zeros() as usize;
    let mut s = 0.0;
    for i in 0..t.len() {
        if t[i] == 0.0 {
            continue;
        }
        for j in 0..t.len() {
            let mut w = t[i] * t[j];
            for m in 0..rank {
                let shift = rank - 1 - m;
                w *= hinv[(i >> shift) & 1][(j >> shift) & 1];
            }
            s += w;
        }
    }
    s
}

pub fn flat2(m: &Mat2) -> [f64; 4] {
    [m[0][0], m[0][1], m[1][0], m[1][1]]
}

pub fn flat3(t: &Tensor3) -> [f64; 8] {
    let mut out = [0.0; 8];
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                out[a * 4 + b * 2 + c] = t[a][b][c];
            }
        }
    }
    out
}

pub fn flat4(t: &Tensor4) -> [f64; 16] {
    let mut out = [0.0; 16];
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    out[a * 8 + b * 4 + c * 2 + d] = t[a][b][c][d];
                }
            }
        }
    }
    out
}

fn inverse(m: &Mat2) -> Mat2 {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}

/// Metric `h_ab` with its Levi-Civita connection and curvature.
#[derive(Debug, Clone)]
pub struct Surface {
    grid: Grid,
    pub h: Vec<Mat2>,
    pub hinv: Vec<Mat2>,
    /// `gamma[p][c][a][b] = Gamma^c_ab`.
    pub gamma: Vec<Tensor3>,
    pub ricci: Vec<Mat2>,
    pub scalar: Vec<f64>,
    pub gauss: Vec<f64>,
    /// `sqrt(det h)`.
    pub volume: Vec<f64>,
}

impl Surface {
    pub fn new(grid: &Grid, h: Vec<Mat2>) -> Self {
        assert_eq!(grid.real_dim(), 2);
        let len = h.len();
        let hinv: Vec<Mat2> = h.iter().map(inverse).collect();
        let volume = h.iter().map(|m| (m[0][0] * m[1][1] - m[0][1] * m[1][0]).sqrt()).collect();
        let dh = Self::partials_of(grid, &h);
        let gamma: Vec<Tensor3> = (0..len)
            .map(|p| {
                let mut g = [[[0.0; 2]; 2]; 2];
                for c in 0..2 {
                    for a in 0..2 {
                        for b in 0..2 {
                            let mut s = 0.0;
                            for d in 0..2 {
                                s += 0.5 * hinv[p][c][d] * (dh[a][p][d][b] + dh[b][p][d][a] - dh[d][p][a][b]);
                            }
                            g[c][a][b] = s;
                        }
                    }
                }
                g
            })
            .collect();
        // dgamma[e][p][c][a][b] = d_e Gamma^c_ab
        let mut dgamma = vec![vec![[[[0.0; 2]; 2]; 2]; len]; 2];
        for c in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    let f: Vec<f64> = gamma.iter().map(|g| g[c][a][b]).collect();
                    let d = partial(grid, &f);
                    for e in 0..2 {
                        for p in 0..len {
                            dgamma[e][p][c][a][b] = d[e][p];
                        }
                    }
                }
            }
        }
        let ricci: Vec<Mat2> = (0..len)
            .map(|p| {
                let g = &gamma[p];
                let mut r = [[0.0; 2]; 2];
                for a in 0..2 {
                    for b in 0..2 {
                        let mut s = 0.0;
                        for c in 0..2 {
                            s += dgamma[c][p][c][a][b] - dgamma[b][p][c][a][c];
                            for d in 0..2 {
                                s += g[c][c][d] * g[d][a][b] - g[c][b][d] * g[d][a][c];
                            }
                        }
                        r[a][b] = s;
                    }
                }
                r
            })
            .collect();
        let scalar: Vec<f64> = (0..len).map(|p| contract(&hinv[p], &ricci[p])).collect();
        let gauss = scalar.iter().map(|r| 0.5 * r).collect();
        Surface {
            grid: grid.clone(),
            h,
            hinv,
            gamma,
            ricci,
            scalar,
            gauss,
            volume,
        }
    }

    /// `dh[e][p] = d_e h` at every point.
    fn partials_of(grid: &Grid, t: &[Mat2]) -> [Vec<Mat2>; 2] {
        let mut out = [vec![[[0.0; 2]; 2]; t.len()], vec![[[0.0; 2]; 2]; t.len()]];
        for a in 0..2 {
            for b in a..2 {
                let f: Vec<f64> = t.iter().map(|m| m[a][b]).collect();
                let d = partial(grid, &f);
                for e in 0..2 {
                    for p in 0..t.len() {
                        out[e][p][a][b] = d[e][p];
                        out[e][p][b][a] = d[e][p];
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn riemann_at(&self, p: usize) -> Tensor4 {
        let h = &self.h[p];
        let k = self.gauss[p];
        let mut r = [[[[0.0; 2]; 2]; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    for d in 0..2 {
                        r[a][b][c][d] = k * (h[a][d] * h[b][c] - h[a][c] * h[b][d]);
                    }
                }
            }
        }
        r
    }

    pub fn rm_norm_sqr(&self, p: usize) -> f64 {
        tensor_norm_sqr(&self.hinv[p], &flat4(&self.riemann_at(p)))
    }

    pub fn ricci_norm_sqr(&self, p: usize) -> f64 {
        tensor_norm_sqr(&self.hinv[p], &flat2(&self.ricci[p]))
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<[f64; 2]> {
        let d = partial(&self.grid, u);
        (0..u.len()).map(|p| [d[0][p], d[1][p]]).collect()
    }

    pub fn gradient_norm_sqr(&self, u: &[f64]) -> Vec<f64> {
        self.gradient(u)
            .iter()
            .enumerate()
            .map(|(p, g)| tensor_norm_sqr(&self.hinv[p], g))
            .collect()
    }

    /// `nabla_a nabla_b u`.
    pub fn hessian(&self, u: &[f64]) -> Vec<Mat2> {
        let grad = self.gradient(u);
        let first: Vec<f64> = grad.iter().map(|g| g[0]).collect();
        let second: Vec<f64> = grad.iter().map(|g| g[1]).collect();
        let d0 = partial(&self.grid, &first);
        let d1 = partial(&self.grid, &second);
        (0..u.len())
            .map(|p| {
                let dd = [[d0[0][p], d1[0][p]], [d0[1][p], d1[1][p]]];
                let mut m = [[0.0; 2]; 2];
                for a in 0..2 {
                    for b in 0..2 {
                        let mut v = dd[a][b];
                        for c in 0..2 {
                            v -= self.gamma[p][c][a][b] * grad[p][c];
                        }
                        m[a][b] = v;
                    }
                }
                m
            })
            .collect()
    }

    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        self.hessian(u)
            .iter()
            .enumerate()
            .map(|(p, m)| contract(&self.hinv[p], m))
            .collect()
    }

    /// `nabla_c T_ab`, indexed `[c][a][b]`.
    pub fn covariant(&self, t: &[Mat2]) -> Vec<Tensor3> {
        let d = Self::partials_of(&self.grid, t);
        (0..t.len())
            .map(|p| {
                let g = &self.gamma[p];
                let mut out = [[[0.0; 2]; 2]; 2];
                for c in 0..2 {
                    for a in 0..2 {
                        for b in 0..2 {
                            let mut v = d[c][p][a][b];
                            for e in 0..2 {
                                v -= g[e][c][a] * t[p][e][b] + g[e][c][b] * t[p][a][e];
                            }
                            out[c][a][b] = v;
                        }
                    }
                }
                out
            })
            .collect()
    }

    /// `nabla_d nabla_c T_ab`, indexed `[d][c][a][b]`.
    pub fn covariant2(&self, t: &[Mat2]) -> Vec<Tensor4> {
        let first = self.covariant(t);
        let len = t.len();
        let mut partials = vec![[[[[0.0; 2]; 2]; 2]; 2]; len];
        for c in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    let f: Vec<f64> = first.iter().map(|x| x[c][a][b]).collect();
                    let d = partial(&self.grid, &f);
                    for e in 0..2 {
                        for p in 0..len {
                            partials[p][e][c][a][b] = d[e][p];
                        }
                    }
                }
            }
        }
        (0..len)
            .map(|p| {
                let g = &self.gamma[p];
                let x = &first[p];
                let mut out = partials[p];
                for d in 0..2 {
                    for c in 0..2 {
                        for a in 0..2 {
                            for b in 0..2 {
                                let mut v = 0.0;
                                for e in 0..2 {
                                    v += g[e][d][c] * x[e][a][b] + g[e][d][a] * x[c][e][b] + g[e][d][b] * x[c][a][e];
                                }
                                out[d][c][a][b] -= v;
                            }
                        }
                    }
                }
                out
            })
            .collect()
    }

    /// Rough Laplacian `h^{dc} nabla_d nabla_c T_ab`.
    pub fn rough_laplacian(&self, second: &[Tensor4]) -> Vec<Mat2> {
        second
            .iter()
            .enumerate()
            .map(|(p, x)| {
                let hi = &self.hinv[p];
                let mut m = [[0.0; 2]; 2];
                for a in 0..2 {
                    for b in 0..2 {
                        for d in 0..2 {
                            for c in 0..2 {
                                m[a][b] += hi[d][c] * x[d][c][a][b];
                            }
                        }
                    }
                }
                m
            })
            .collect()
    }
}

/// `h^{ab} T_ab`.
pub fn contract(hinv: &Mat2, t: &Mat2) -> f64 {
    let mut s = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            s += hinv[a][b] * t[a][b];
        }
    }
    s
}

/// Real partial derivatives along both axes.
pub fn partial(grid: &Grid, f: &[f64]) -> [Vec<f64>; 2] {
    let s = grid.spectral();
    let spec = s.forward_real(f);
    [s.apply_real(&spec, |k| sym_real(k, 0)), s.apply_real(&spec, |k| sym_real(k, 1))]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{HermField, MetricField};
    use crate::geometry::CurvatureBundle;
    use std::f64::consts::PI;

    #[test]
    fn gauss_curvature_matches_complex_scalar_curvature() {
        let grid = Grid::uniform(1, 32, 1.0).unwrap();
        let g = grid.sample(|x| 1.0 + 0.1 * (2.0 * PI * x[0]).cos() + 0.05 * (2.0 * PI * (x[0] + x[1])).sin());
        let surf = Surface::new(&grid, g.iter().map(|v| [[2.0 * v, 0.0], [0.0, 2.0 * v]]).collect());
        let bundle = CurvatureBundle::new(&grid, &MetricField::new(HermField::from_scalar(&g)).unwrap()).unwrap();
        for p in 0..grid.len() {
            assert!((surf.gauss[p] - bundle.scalar[p]).abs() < 1e-9, "{p}");
            // Ric = K h in two dimensions
            for a in 0..2 {
                for b in 0..2 {
                    assert!((surf.ricci[p][a][b] - surf.gauss[p] * surf.h[p][a][b]).abs() < 1e-9);
                }
            }
            let k2 = surf.gauss[p] * surf.gauss[p];
            assert!((surf.rm_norm_sqr(p) - 4.0 * k2).abs() < 1e-12 * (1.0 + k2));
            assert!((surf.ricci_norm_sqr(p) - 2.0 * k2).abs() < 1e-9);
        }
    }

    #[test]
    fn non_conformal_metric_has_symmetric_ricci_and_zero_total_curvature() {
        let grid = Grid::uniform(1, 32, 1.0).unwrap();
        let h: Vec<Mat2> = (0..grid.len())
            .map(|p| {
                let x = grid.coords(p);
                let a = 1.0 + 0.2 * (2.0 * PI * x[1]).sin();
                let b = 0.1 * (2.0 * PI * x[0]).cos();
                let c = 1.5 + 0.1 * (2.0 * PI * (x[0] - x[1])).cos();
                [[a, b], [b, c]]
            })
            .collect();
        let s = Surface::new(&grid, h);
        // Gauss-Bonnet on the torus: int K dA = 0
        let total: f64 = (0..s.len()).map(|p| s.gauss[p] * s.volume[p]).sum::<f64>() * grid.cell_volume();
        assert!(total.abs() < 1e-10, "{total}");
        for r in &s.ricci {
            assert!((r[0][1] - r[1][0]).abs() < 1e-10);
        }
        // metric compatibility: nabla h = 0
        let dh = s.covariant(&s.h);
        assert!(dh.iter().all(|t| flat3(t).iter().all(|v| v.abs() < 1e-10)));
    }

    #[test]
    fn laplacian_agrees_with_rough_laplacian_of_scaled_metric() {
        let grid = Grid::uniform(1, 32, 1.0).unwrap();
        let g = grid.sample(|x| 1.0 + 0.1 * (2.0 * PI * x[0]).cos());
        let surf = Surface::new(&grid, g.iter().map(|v| [[2.0 * v, 0.0], [0.0, 2.0 * v]]).collect());
        let u = grid.sample(|x| (2.0 * PI * x[1]).sin() + 0.3 * (2.0 * PI * x[0]).cos());
        let t: Vec<Mat2> = (0..grid.len()).map(|p| [[u[p] * surf.h[p][0][0], 0.0], [0.0, u[p] * surf.h[p][1][1]]]).collect();
        let rough = surf.rough_laplacian(&surf.covariant2(&t));
        let lap = surf.laplacian(&u);
        for p in 0..grid.len() {
            assert!((rough[p][0][0] - lap[p] * surf.h[p][0][0]).abs() < 1e-9);
            assert!(rough[p][0][1].abs() < 1e-9);
        }
    }
}
