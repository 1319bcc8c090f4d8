use crate::error::{Error, Result};
use crate::spectral::Grid;

/// Nodal density values on a periodic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    grid: Grid,
    values: Vec<f64>,
}

impl DensityField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ContractViolation(format!(
                "density has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("density values must be finite".into()));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![value; grid.len()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 3]) -> f64) -> Result<Self> {
        Self::new(grid, (0..grid.len()).map(|i| f(grid.position(i))).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Squared L² distance to another density on the same grid.
    pub fn l2_distance_sq(&self, other: &DensityField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::ContractViolation("densities live on different grids".into()));
        }
        Ok(self.grid.node_weight()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>())
    }

    /// Max-norm of the centered finite-difference gradient.
    pub fn gradient_max_norm(&self) -> f64 {
        let g = &self.grid;
        let mut best: f64 = 0.0;
        for flat in 0..g.len() {
            let c = g.coords(flat);
            let mut sq = 0.0;
            for a in 0..g.dim() {
                let mut plus = [c[0] as i64, c[1] as i64, c[2] as i64];
                let mut minus = plus;
                plus[a] += 1;
                minus[a] -= 1;
                let d = (self.values[g.flat_wrapped(plus)] - self.values[g.flat_wrapped(minus)])
                    / (2.0 * g.spacing(a));
                sq += d * d;
            }
            best = best.max(sq.sqrt());
        }
        best
    }
}
