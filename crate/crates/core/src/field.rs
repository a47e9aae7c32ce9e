//! Pointwise Hermitian matrix fields (`n x n`, `n` in {1, 2}).

use crate::error::GeometryError;
use crate::grid::Grid;
use crate::spectral::C64;

/// Relative eigenvalue floor below which a metric counts as degenerate.
pub const POSITIVITY_TOLERANCE: f64 = 1e-8;

/// Small complex matrix, row-major, `n <= 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CMat {
    pub n: usize,
    pub a: [C64; 4],
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        CMat {
            n,
            a: [C64::default(); 4],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, C64::new(1.0, 0.0));
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.a[i * self.n + j] = v;
    }

    pub fn det(&self) -> C64 {
        match self.n {
            1 => self.a[0],
            _ => self.a[0] * self.a[3] - self.a[1] * self.a[2],
        }
    }

    pub fn inverse(&self) -> CMat {
        let d = self.det();
        match self.n {
            1 => CMat {
                n: 1,
                a: [d.inv(), C64::default(), C64::default(), C64::default()],
            },
            _ => CMat {
                n: 2,
                a: [self.a[3] / d, -self.a[1] / d, -self.a[2] / d, self.a[0] / d],
            },
        }
    }

    pub fn mul(&self, other: &CMat) -> CMat {
        let n = self.n;
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut s = C64::default();
                for k in 0..n {
                    s += self.get(i, k) * other.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> [f64; 2] {
        match self.n {
            1 => [self.a[0].re, self.a[0].re],
            _ => {
                let p = 0.5 * (self.a[0].re + self.a[3].re);
                let q = 0.5 * (self.a[0].re - self.a[3].re);
                let off = 0.5 * (self.a[1] + self.a[2].conj());
                let r = (q * q + off.norm_sqr()).sqrt();
                [p - r, p + r]
            }
        }
    }
}

/// Field of `n x n` Hermitian matrices, one per lattice point.
#[derive(Debug, Clone, PartialEq)]
pub struct HermField {
    n: usize,
    data: Vec<C64>,
}

impl HermField {
    pub fn zeros(n: usize, len: usize) -> Self {
        HermField {
            n,
            data: vec![C64::default(); len * n * n],
        }
    }

    pub fn from_fn(n: usize, len: usize, f: impl Fn(usize) -> CMat) -> Self {
        let mut out = Self::zeros(n, len);
        for p in 0..len {
            out.set(p, &f(p));
        }
        out
    }

    /// Constant field.
    pub fn constant(m: CMat, len: usize) -> Self {
        Self::from_fn(m.n, len, |_| m)
    }

    /// `n = 1` field from real coefficients.
    pub fn from_scalar(values: &[f64]) -> Self {
        HermField {
            n: 1,
            data: values.iter().map(|&v| C64::new(v, 0.0)).collect(),
        }
    }

    /// Field with `scale(p) * identity` at every point.
    pub fn scalar_multiple_of_identity(n: usize, values: &[f64]) -> Self {
        Self::from_fn(n, values.len(), |p| {
            let mut m = CMat::identity(n);
            for v in m.a.iter_mut() {
                *v *= values[p];
            }
            m
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.data.len() / (self.n * self.n)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, p: usize) -> CMat {
        let nn = self.n * self.n;
        let mut m = CMat::zeros(self.n);
        m.a[..nn].copy_from_slice(&self.data[p * nn..(p + 1) * nn]);
        m
    }

    #[inline]
    pub fn set(&mut self, p: usize, m: &CMat) {
        let nn = self.n * self.n;
        self.data[p * nn..(p + 1) * nn].copy_from_slice(&m.a[..nn]);
    }

    /// One matrix entry across the whole grid.
    pub fn component(&self, i: usize, j: usize) -> Vec<C64> {
        let nn = self.n * self.n;
        (0..self.len()).map(|p| self.data[p * nn + i * self.n + j]).collect()
    }

    pub fn set_component(&mut self, i: usize, j: usize, values: &[C64]) {
        let nn = self.n * self.n;
        for (p, v) in values.iter().enumerate() {
            self.data[p * nn + i * self.n + j] = *v;
        }
    }

    /// Real coefficient of an `n = 1` field.
    pub fn scalar_values(&self) -> Vec<f64> {
        assert_eq!(self.n, 1);
        self.data.iter().map(|v| v.re).collect()
    }

    pub fn zip_map(&self, other: &HermField, f: impl Fn(C64, C64) -> C64) -> HermField {
        assert_eq!(self.data.len(), other.data.len());
        HermField {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Largest deviation from Hermitian symmetry.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for p in 0..self.len() {
            let m = self.at(p);
            for i in 0..self.n {
                for j in 0..self.n {
                    worst = worst.max((m.get(i, j) - m.get(j, i).conj()).norm());
                }
            }
        }
        worst
    }

    /// Grid mean of each entry.
    pub fn mean(&self) -> CMat {
        let mut m = CMat::zeros(self.n);
        let len = self.len();
        for p in 0..len {
            let a = self.at(p);
            for k in 0..self.n * self.n {
                m.a[k] += a.a[k];
            }
        }
        for k in 0..self.n * self.n {
            m.a[k] /= len as f64;
        }
        m
    }

    pub fn sup_abs_diff(&self, other: &HermField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Positive-definite Hermitian field `g_{i jbar}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField(HermField);

impl MetricField {
    /// Validate positivity: every eigenvalue must exceed
    /// `POSITIVITY_TOLERANCE * mean eigenvalue`.
    pub fn new(field: HermField) -> Result<Self, GeometryError> {
        let n = field.n();
        let len = field.len();
        let mut mean_eig = 0.0;
        for p in 0..len {
            mean_eig += field.at(p).trace().re / n as f64;
        }
        mean_eig /= len as f64;
        let threshold = POSITIVITY_TOLERANCE * mean_eig.abs();
        for p in 0..len {
            let lo = field.at(p).hermitian_eigenvalues()[0];
            if !(lo > threshold) {
                return Err(GeometryError::PositivityLost {
                    point: p,
                    min_eigenvalue: lo,
                    threshold,
                });
            }
        }
        Ok(MetricField(field))
    }

    /// Constant flat metric.
    pub fn flat(m: CMat, grid: &Grid) -> Result<Self, GeometryError> {
        Self::new(HermField::constant(m, grid.len()))
    }

    pub fn identity(grid: &Grid) -> Self {
        MetricField(HermField::constant(CMat::identity(grid.n_complex()), grid.len()))
    }

    pub fn field(&self) -> &HermField {
        &self.0
    }

    pub fn into_field(self) -> HermField {
        self.0
    }

    pub fn n(&self) -> usize {
        self.0.n()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn at(&self, p: usize) -> CMat {
        self.0.at(p)
    }

    pub fn det(&self) -> Vec<f64> {
        (0..self.len()).map(|p| self.at(p).det().re).collect()
    }
}
