use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::spectral::Spectral;

pub const MIN_POINTS_PER_AXIS: usize = 8;

/// Serializable description of a periodic lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_complex: usize,
    pub points: Vec<usize>,
    pub periods: Vec<f64>,
}

/// Uniform periodic lattice over a flat torus of complex dimension 1 or 2.
///
/// Real axis `2j` and `2j + 1` carry the real and imaginary parts of the
/// complex coordinate `z_j`. Storage is row-major with axis 0 slowest.
#[derive(Clone)]
pub struct Grid {
    spec: GridSpec,
    spectral: Arc<Spectral>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.spec.fmt(f)
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl Grid {
    pub fn new(n_complex: usize, points: Vec<usize>, periods: Vec<f64>) -> Result<Self, GeometryError> {
        let spec = GridSpec {
            n_complex,
            points,
            periods,
        };
        Self::from_spec(spec)
    }

    /// Same resolution and period on every real axis.
    pub fn uniform(n_complex: usize, points: usize, period: f64) -> Result<Self, GeometryError> {
        Self::new(n_complex, vec![points; 2 * n_complex], vec![period; 2 * n_complex])
    }

    pub fn from_spec(spec: GridSpec) -> Result<Self, GeometryError> {
        if !(1..=2).contains(&spec.n_complex) {
            return Err(GeometryError::InvalidGrid(format!(
                "complex dimension must be 1 or 2, got {}",
                spec.n_complex
            )));
        }
        let dims = 2 * spec.n_complex;
        if spec.points.len() != dims || spec.periods.len() != dims {
            return Err(GeometryError::InvalidGrid(format!(
                "expected {dims} axes, got {} resolutions and {} periods",
                spec.points.len(),
                spec.periods.len()
            )));
        }
        if let Some(n) = spec.points.iter().find(|&&n| n < MIN_POINTS_PER_AXIS) {
            return Err(GeometryError::InvalidGrid(format!(
                "{n} points on an axis; at least {MIN_POINTS_PER_AXIS} required"
            )));
        }
        if let Some(p) = spec.periods.iter().find(|&&p| !(p > 0.0 && p.is_finite())) {
            return Err(GeometryError::InvalidGrid(format!("period {p} is not positive")));
        }
        let spectral = Arc::new(Spectral::new(&spec.points, &spec.periods));
        Ok(Grid { spec, spectral })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn n_complex(&self) -> usize {
        self.spec.n_complex
    }

    pub fn real_dim(&self) -> usize {
        2 * self.spec.n_complex
    }

    pub fn points(&self) -> &[usize] {
        &self.spec.points
    }

    pub fn periods(&self) -> &[f64] {
        &self.spec.periods
    }

    pub fn len(&self) -> usize {
        self.spectral.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spec.periods[axis] / self.spec.points[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.real_dim()).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    /// Coordinate volume of one lattice cell.
    pub fn cell_volume(&self) -> f64 {
        (0..self.real_dim()).map(|a| self.spacing(a)).product()
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    /// Lattice multi-index of a flat storage index.
    pub fn multi_index(&self, mut flat: usize) -> [usize; 4] {
        let mut idx = [0usize; 4];
        for a in (0..self.real_dim()).rev() {
            idx[a] = flat % self.spec.points[a];
            flat /= self.spec.points[a];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.spec.points)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Coordinates of a lattice point.
    pub fn coords(&self, flat: usize) -> [f64; 4] {
        let idx = self.multi_index(flat);
        let mut x = [0.0; 4];
        for a in 0..self.real_dim() {
            x[a] = idx[a] as f64 * self.spacing(a);
        }
        x
    }

    /// Sample a function of the coordinates at every lattice point.
    pub fn sample(&self, f: impl Fn(&[f64; 4]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|p| f(&self.coords(p))).collect()
    }

    pub fn mean(&self, field: &[f64]) -> f64 {
        field.iter().sum::<f64>() / field.len() as f64
    }

    /// Coordinate integral by cell summation.
    pub fn integrate(&self, field: &[f64]) -> f64 {
        field.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn check_len(&self, found: usize) -> Result<(), GeometryError> {
        if found != self.len() {
            return Err(GeometryError::ShapeMismatch {
                expected: self.len(),
                found,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_coarse_or_degenerate_grids() {
        assert!(Grid::uniform(1, 4, 1.0).is_err());
        assert!(Grid::uniform(3, 8, 1.0).is_err());
        assert!(Grid::new(1, vec![8, 8], vec![1.0, 0.0]).is_err());
        assert!(Grid::uniform(2, 8, 1.0).is_ok());
    }

    #[test]
    fn index_round_trip() {
        let g = Grid::new(2, vec![8, 9, 10, 11], vec![1.0; 4]).unwrap();
        for p in [0, 17, 555, g.len() - 1] {
            assert_eq!(g.flat_index(&g.multi_index(p)[..4]), p);
        }
    }
}
