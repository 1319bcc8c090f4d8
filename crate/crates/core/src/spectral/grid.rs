use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic box with the same number of nodes along every axis.
///
/// Nodes are stored row-major with the last axis fastest, so the flat index of
/// `(i0, i1, i2)` is `(i0 * n + i1) * n + i2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    points: usize,
    lengths: [f64; 3],
}

impl Grid {
    pub fn new(dim: usize, points: usize, lengths: &[f64]) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension must be 2 or 3, got {dim}")));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two and at least 8, got {points}"
            )));
        }
        let lengths = match lengths.len() {
            1 => [lengths[0]; 3],
            n if n == dim => {
                let mut l = [lengths[0]; 3];
                l[..dim].copy_from_slice(lengths);
                l
            }
            n => {
                return Err(Error::InvalidGrid(format!(
                    "expected 1 or {dim} box lengths, got {n}"
                )))
            }
        };
        if lengths[..dim].iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::InvalidGrid("box lengths must be positive".into()));
        }
        Ok(Self {
            dim,
            points,
            lengths,
        })
    }

    /// The `[0, 2π)^dim` box.
    pub fn periodic(dim: usize, points: usize) -> Result<Self> {
        Self::new(dim, points, &[2.0 * PI])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.lengths[axis]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.points as f64
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn volume(&self) -> f64 {
        self.lengths[..self.dim].iter().product()
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of a single node.
    pub fn node_weight(&self) -> f64 {
        self.volume() / self.len() as f64
    }

    pub fn is_isotropic(&self) -> bool {
        self.lengths[..self.dim].iter().all(|&l| l == self.lengths[0])
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.points.pow((self.dim - 1 - axis) as u32)
    }

    pub fn coords(&self, flat: usize) -> [usize; 3] {
        let mut c = [0usize; 3];
        let mut rem = flat;
        for axis in (0..self.dim).rev() {
            c[axis] = rem % self.points;
            rem /= self.points;
        }
        c
    }

    pub fn flat(&self, coords: [usize; 3]) -> usize {
        (0..self.dim).fold(0, |acc, a| acc * self.points + coords[a])
    }

    /// Flat index of the node with (possibly out-of-range) integer coordinates, wrapped periodically.
    pub fn flat_wrapped(&self, coords: [i64; 3]) -> usize {
        let n = self.points as i64;
        (0..self.dim).fold(0, |acc, a| acc * self.points + coords[a].rem_euclid(n) as usize)
    }

    pub fn position(&self, flat: usize) -> [f64; 3] {
        let c = self.coords(flat);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = c[a] as f64 * self.spacing(a);
        }
        x
    }

    /// Signed integer wave index stored at array position `i` along an axis.
    pub fn wave_number(&self, i: usize) -> i64 {
        let n = self.points;
        if i <= n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    pub fn wave_indices(&self, flat: usize) -> [i64; 3] {
        let c = self.coords(flat);
        let mut w = [0i64; 3];
        for a in 0..self.dim {
            w[a] = self.wave_number(c[a]);
        }
        w
    }

    /// Physical wavevector used by differential operators; the Nyquist
    /// component is zeroed so derivatives of real fields stay real.
    pub fn wavevector(&self, flat: usize) -> [f64; 3] {
        let c = self.coords(flat);
        let mut k = [0.0; 3];
        for a in 0..self.dim {
            if c[a] != self.points / 2 {
                k[a] = self.physical_wavenumber(a, self.wave_number(c[a]));
            }
        }
        k
    }

    pub fn physical_wavenumber(&self, axis: usize, n: i64) -> f64 {
        2.0 * PI * n as f64 / self.lengths[axis]
    }

    /// Array position of an integer wavevector, taken modulo the grid.
    pub fn flat_of_wave(&self, wave: [i64; 3]) -> usize {
        self.flat_wrapped(wave)
    }

    /// Largest wave index kept by the two-thirds rule.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.points / 3) as i64
    }

    pub fn is_dealiased(&self, wave: [i64; 3]) -> bool {
        let n = self.points as i64;
        wave[..self.dim].iter().all(|&w| 3 * w.abs() <= n)
    }
}
