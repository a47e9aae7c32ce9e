//! Fourier-spectral differentiation on periodic lattices of up to four real axes.
//!
//! Derivative symbols are assembled from first-derivative wavenumbers with the
//! Nyquist mode zeroed, so every operator here maps real band-limited data to
//! real data and annihilates the mean mode exactly.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub type C64 = Complex<f64>;

/// Wave-vector type; unused trailing axes stay zero.
pub type WaveVector = [f64; 4];

pub struct Spectral {
    shape: Vec<usize>,
    strides: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    wavenumbers: Vec<Vec<f64>>,
    len: usize,
}

impl fmt::Debug for Spectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectral").field("shape", &self.shape).finish()
    }
}

impl Spectral {
    pub fn new(shape: &[usize], periods: &[f64]) -> Self {
        assert_eq!(shape.len(), periods.len());
        assert!(shape.len() <= 4);
        let mut planner = FftPlanner::new();
        let mut strides = vec![1; shape.len()];
        for a in (0..shape.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        let wavenumbers = shape
            .iter()
            .zip(periods)
            .map(|(&n, &p)| {
                (0..n)
                    .map(|m| {
                        let signed = if 2 * m < n {
                            m as f64
                        } else if 2 * m == n {
                            0.0
                        } else {
                            m as f64 - n as f64
                        };
                        2.0 * std::f64::consts::PI * signed / p
                    })
                    .collect()
            })
            .collect();
        Spectral {
            shape: shape.to_vec(),
            strides,
            forward: shape.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
            inverse: shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect(),
            wavenumbers,
            len: shape.iter().product(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// First-derivative wavenumbers along one axis (Nyquist zeroed).
    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.wavenumbers[axis]
    }

    fn transform(&self, data: &mut [C64], plans: &[Arc<dyn Fft<f64>>]) {
        assert_eq!(data.len(), self.len);
        for (axis, plan) in plans.iter().enumerate() {
            let n = self.shape[axis];
            let stride = self.strides[axis];
            let mut scratch = vec![C64::default(); plan.get_inplace_scratch_len()];
            if stride == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            let block = n * stride;
            let mut line = vec![C64::default(); n];
            for base in (0..self.len).step_by(block) {
                for offset in 0..stride {
                    let start = base + offset;
                    for (m, v) in line.iter_mut().enumerate() {
                        *v = data[start + m * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (m, v) in line.iter().enumerate() {
                        data[start + m * stride] = *v;
                    }
                }
            }
        }
    }

    pub fn forward_complex(&self, data: &[C64]) -> Vec<C64> {
        let mut out = data.to_vec();
        self.transform(&mut out, &self.forward);
        out
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<C64> {
        let mut out: Vec<C64> = data.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.transform(&mut out, &self.forward);
        out
    }

    /// Normalized inverse transform.
    pub fn inverse(&self, mut spectrum: Vec<C64>) -> Vec<C64> {
        self.transform(&mut spectrum, &self.inverse);
        let scale = 1.0 / self.len as f64;
        for v in spectrum.iter_mut() {
            *v *= scale;
        }
        spectrum
    }

    /// Visit every mode in storage order with its wave vector.
    pub fn for_each_mode(&self, mut visit: impl FnMut(usize, &WaveVector)) {
        let dims = self.shape.len();
        let mut index = [0usize; 4];
        let mut k: WaveVector = [0.0; 4];
        for a in 0..dims {
            k[a] = self.wavenumbers[a][0];
        }
        for flat in 0..self.len {
            visit(flat, &k);
            for a in (0..dims).rev() {
                index[a] += 1;
                if index[a] < self.shape[a] {
                    k[a] = self.wavenumbers[a][index[a]];
                    break;
                }
                index[a] = 0;
                k[a] = self.wavenumbers[a][0];
            }
        }
    }

    /// Multiply a spectrum by a symbol and return the physical-space result.
    pub fn apply(&self, spectrum: &[C64], symbol: impl Fn(&WaveVector) -> C64) -> Vec<C64> {
        let mut out = vec![C64::default(); self.len];
        self.for_each_mode(|i, k| out[i] = spectrum[i] * symbol(k));
        self.inverse(out)
    }

    pub fn apply_real(&self, spectrum: &[C64], symbol: impl Fn(&WaveVector) -> C64) -> Vec<f64> {
        self.apply(spectrum, symbol).into_iter().map(|v| v.re).collect()
    }
}

/// Symbol of the real partial derivative along `axis`.
pub fn sym_real(k: &WaveVector, axis: usize) -> C64 {
    C64::new(0.0, k[axis])
}

/// Symbol of the holomorphic derivative along the complex coordinate
/// `z_j = x_{2j} + i x_{2j+1}`, i.e. `(d/dx - i d/dy) / 2`.
pub fn sym_holo(k: &WaveVector, j: usize) -> C64 {
    C64::new(0.5 * k[2 * j + 1], 0.5 * k[2 * j])
}

/// Symbol of the antiholomorphic derivative `(d/dx + i d/dy) / 2`.
pub fn sym_anti(k: &WaveVector, j: usize) -> C64 {
    C64::new(-0.5 * k[2 * j + 1], 0.5 * k[2 * j])
}

/// Symbol of the coordinate (flat, real) Laplacian.
pub fn sym_laplacian(k: &WaveVector, dims: usize) -> C64 {
    C64::new(-k[..dims].iter().map(|v| v * v).sum::<f64>(), 0.0)
}
