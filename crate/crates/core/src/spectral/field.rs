use num_complex::Complex64;

use super::{fft, Grid};
use crate::error::{Error, Result};

/// Truncated Fourier representation of a real scalar or vector field.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Vec<Complex64>>,
}

impl SpectralField {
    pub fn zeros(grid: &Grid, components: usize) -> Self {
        Self {
            grid: grid.clone(),
            coeffs: vec![vec![Complex64::default(); grid.len()]; components],
        }
    }

    pub fn from_coefficients(grid: &Grid, coeffs: Vec<Vec<Complex64>>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::ContractViolation(
                "coefficient arrays do not match the grid".into(),
            ));
        }
        Ok(Self {
            grid: grid.clone(),
            coeffs,
        })
    }

    pub fn from_nodal(grid: &Grid, components: &[Vec<f64>]) -> Result<Self> {
        if components.is_empty() || components.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::ContractViolation(
                "nodal arrays do not match the grid".into(),
            ));
        }
        Ok(Self {
            grid: grid.clone(),
            coeffs: components.iter().map(|c| fft::forward(grid, c)).collect(),
        })
    }

    /// Samples `f` at every node; `f` returns one value per component.
    pub fn from_fn(grid: &Grid, components: usize, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut nodal = vec![vec![0.0; grid.len()]; components];
        for flat in 0..grid.len() {
            let v = f(grid.position(flat));
            for (c, comp) in nodal.iter_mut().enumerate() {
                comp[flat] = v[c];
            }
        }
        Self::from_nodal(grid, &nodal).expect("sizes match by construction")
    }

    pub fn to_nodal(&self) -> Vec<Vec<f64>> {
        self.coeffs
            .iter()
            .map(|c| fft::inverse(&self.grid, c))
            .collect()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.coeffs.len()
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        &self.coeffs[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.coeffs[c]
    }

    pub fn coefficients(&self) -> &[Vec<Complex64>] {
        &self.coeffs
    }

    pub fn is_vector(&self) -> bool {
        self.coeffs.len() == self.grid.dim()
    }

    /// Squared L² norm over the box, by Parseval.
    pub fn l2_norm_sq(&self) -> f64 {
        let s: f64 = self
            .coeffs
            .iter()
            .flat_map(|c| c.iter())
            .map(|z| z.norm_sqr())
            .sum();
        s * self.grid.volume()
    }

    /// Weighted Parseval sum `|Ω| Σ_k |k|^{2p} |f̂_k|²`; p = 1 gives ‖∇f‖², p = 2 gives ‖D²f‖².
    pub fn sobolev_seminorm_sq(&self, order: u32) -> f64 {
        let mut s = 0.0;
        for flat in 0..self.grid.len() {
            let k = self.grid.wavevector(flat);
            let k2: f64 = k.iter().map(|v| v * v).sum();
            let w = k2.powi(order as i32);
            if w == 0.0 {
                continue;
            }
            s += w * self.coeffs.iter().map(|c| c[flat].norm_sqr()).sum::<f64>();
        }
        s * self.grid.volume()
    }

    pub fn mean(&self, component: usize) -> f64 {
        self.coeffs[component][0].re
    }

    pub fn scale(&mut self, factor: f64) {
        self.coeffs
            .iter_mut()
            .flat_map(|c| c.iter_mut())
            .for_each(|z| *z *= factor);
    }

    /// `self += factor * other`.
    pub fn axpy(&mut self, factor: f64, other: &SpectralField) -> Result<()> {
        if self.grid != other.grid || self.components() != other.components() {
            return Err(Error::ContractViolation("field shapes differ".into()));
        }
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += factor * y;
            }
        }
        Ok(())
    }

    /// Largest coefficient magnitude of `self - other`.
    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }
}
