use std::cmp::Ordering;

use num_complex::Complex64;

use super::{Grid, SpectralField};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Parity {
    Cos,
    Sin,
}

/// One real divergence-free Fourier mode `a·e·cos(k·x)` or `a·e·sin(k·x)`,
/// with `a = sqrt(2/|Ω|)` so the mode has unit L² norm.
#[derive(Clone, Debug, PartialEq)]
pub struct StokesMode {
    pub wave: [i64; 3],
    pub wavevector: [f64; 3],
    pub polarization: [f64; 3],
    pub polarization_index: usize,
    pub parity: Parity,
    pub k_sq: f64,
}

impl StokesMode {
    fn new(grid: &Grid, wave: [i64; 3], polarization_index: usize, parity: Parity) -> Self {
        let dim = grid.dim();
        let mut k = [0.0; 3];
        for a in 0..dim {
            k[a] = grid.physical_wavenumber(a, wave[a]);
        }
        let k_sq = k.iter().map(|v| v * v).sum();
        Self {
            wave,
            wavevector: k,
            polarization: polarization(dim, k, polarization_index),
            polarization_index,
            parity,
            k_sq,
        }
    }

    /// Phase `k·x`.
    #[inline]
    pub fn phase(&self, x: &[f64; 3]) -> f64 {
        self.wavevector[0] * x[0] + self.wavevector[1] * x[1] + self.wavevector[2] * x[2]
    }

    /// Scalar profile (cos or sin of the phase) and its phase derivative.
    #[inline]
    pub fn profile(&self, x: &[f64; 3]) -> (f64, f64) {
        let (s, c) = self.phase(x).sin_cos();
        match self.parity {
            Parity::Cos => (c, -s),
            Parity::Sin => (s, c),
        }
    }
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn polarization(dim: usize, k: [f64; 3], index: usize) -> [f64; 3] {
    if dim == 2 {
        return normalize([k[1], -k[0], 0.0]);
    }
    let helper_axis = (0..3)
        .min_by(|&a, &b| k[a].abs().total_cmp(&k[b].abs()))
        .unwrap_or(0);
    let mut helper = [0.0; 3];
    helper[helper_axis] = 1.0;
    let e1 = normalize(cross(k, helper));
    if index == 0 {
        e1
    } else {
        normalize(cross(normalize(k), e1))
    }
}

fn in_half_space(wave: &[i64]) -> bool {
    wave.iter().find(|&&w| w != 0).is_some_and(|&w| w > 0)
}

fn shell_key(grid: &Grid, mode: &StokesMode) -> f64 {
    if grid.is_isotropic() {
        mode.wave.iter().map(|w| (w * w) as f64).sum()
    } else {
        mode.k_sq
    }
}

fn ordering(grid: &Grid, a: &StokesMode, b: &StokesMode) -> Ordering {
    shell_key(grid, a)
        .total_cmp(&shell_key(grid, b))
        .then(a.parity.cmp(&b.parity))
        .then(a.wave.cmp(&b.wave))
        .then(a.polarization_index.cmp(&b.polarization_index))
}

fn all_modes(grid: &Grid) -> Vec<StokesMode> {
    let dim = grid.dim();
    let cut = grid.dealias_cutoff();
    let mut modes = Vec::new();
    let range: Vec<i64> = (-cut..=cut).collect();
    let mut wave = [0i64; 3];
    let mut visit = |wave: [i64; 3]| {
        if !in_half_space(&wave[..dim]) {
            return;
        }
        for pol in 0..dim - 1 {
            for parity in [Parity::Cos, Parity::Sin] {
                modes.push(StokesMode::new(grid, wave, pol, parity));
            }
        }
    };
    for &w0 in &range {
        wave[0] = w0;
        for &w1 in &range {
            wave[1] = w1;
            if dim == 2 {
                visit(wave);
            } else {
                for &w2 in &range {
                    wave[2] = w2;
                    visit(wave);
                }
            }
        }
    }
    modes.sort_by(|a, b| ordering(grid, a, b));
    modes
}

/// The first `j` eigenfunctions of the periodic Stokes operator, orthonormal in L².
#[derive(Clone, Debug, PartialEq)]
pub struct StokesBasis {
    grid: Grid,
    modes: Vec<StokesMode>,
    eigenvalues: Vec<f64>,
    amplitude: f64,
}

impl StokesBasis {
    /// Number of dealiased divergence-free real modes the grid supports.
    pub fn capacity(grid: &Grid) -> usize {
        let side = 2 * grid.dealias_cutoff() as usize + 1;
        (side.pow(grid.dim() as u32) - 1) * (grid.dim() - 1)
    }

    pub fn build(grid: &Grid, j: usize, mu: f64) -> Result<Self> {
        let max = Self::capacity(grid);
        if j > max {
            return Err(Error::Capacity { requested: j, max });
        }
        if j == 0 {
            return Err(Error::Validation("basis size must be positive".into()));
        }
        let mut modes = all_modes(grid);
        modes.truncate(j);
        Ok(Self::assemble(grid, modes, mu))
    }

    /// Basis from an explicit mode list (e.g. a relabeling within eigenvalue shells).
    pub fn from_modes(grid: &Grid, modes: Vec<StokesMode>, mu: f64) -> Result<Self> {
        for (i, m) in modes.iter().enumerate() {
            if !grid.is_dealiased(m.wave) || !in_half_space(&m.wave[..grid.dim()]) {
                return Err(Error::Validation(format!("mode {i} has an unsupported wavevector")));
            }
            let kdote: f64 = (0..3).map(|a| m.wavevector[a] * m.polarization[a]).sum();
            let norm: f64 = m.polarization.iter().map(|v| v * v).sum();
            if kdote.abs() > 1e-12 * m.k_sq.sqrt() || (norm - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!("mode {i} is not a unit solenoidal mode")));
            }
            if i > 0 && modes[i - 1].k_sq > m.k_sq * (1.0 + 1e-12) {
                return Err(Error::Validation("eigenvalues must be nondecreasing".into()));
            }
        }
        for (i, a) in modes.iter().enumerate() {
            for b in &modes[..i] {
                if a.wave == b.wave && a.parity == b.parity {
                    let dot: f64 = (0..3).map(|c| a.polarization[c] * b.polarization[c]).sum();
                    if dot.abs() > 1e-12 {
                        return Err(Error::Validation(format!("mode {i} is not orthogonal")));
                    }
                }
            }
        }
        Ok(Self::assemble(grid, modes, mu))
    }

    fn assemble(grid: &Grid, modes: Vec<StokesMode>, mu: f64) -> Self {
        let eigenvalues = modes.iter().map(|m| mu * m.k_sq).collect();
        Self {
            grid: grid.clone(),
            modes,
            eigenvalues,
            amplitude: (2.0 / grid.volume()).sqrt(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[StokesMode] {
        &self.modes
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Normalization constant `sqrt(2/|Ω|)`.
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Values of |k_i|², the diagonal of the Dirichlet form on the basis.
    pub fn k_sq(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.k_sq).collect()
    }

    pub fn mode_field(&self, i: usize) -> SpectralField {
        let mut c = vec![0.0; self.len()];
        c[i] = 1.0;
        self.synthesize(&c)
    }

    /// `Σ c_i ψ_i` as a spectral vector field.
    pub fn synthesize(&self, coeffs: &[f64]) -> SpectralField {
        let grid = &self.grid;
        let dim = grid.dim();
        let mut out = SpectralField::zeros(grid, dim);
        for (m, &c) in self.modes.iter().zip(coeffs) {
            if c == 0.0 {
                continue;
            }
            let half = 0.5 * self.amplitude * c;
            // cos: (e^{ikx} + e^{-ikx})/2; sin: (e^{ikx} - e^{-ikx})/(2i)
            let (plus, minus) = match m.parity {
                Parity::Cos => (Complex64::new(half, 0.0), Complex64::new(half, 0.0)),
                Parity::Sin => (Complex64::new(0.0, -half), Complex64::new(0.0, half)),
            };
            let neg = [-m.wave[0], -m.wave[1], -m.wave[2]];
            let ip = grid.flat_of_wave(m.wave);
            let im = grid.flat_of_wave(neg);
            for a in 0..dim {
                out.component_mut(a)[ip] += plus * m.polarization[a];
                out.component_mut(a)[im] += minus * m.polarization[a];
            }
        }
        out
    }

    /// Discrete L² inner products `(g, ψ_i)` of a vector field against every mode.
    pub fn project(&self, field: &SpectralField) -> Result<Vec<f64>> {
        if field.grid() != &self.grid || !field.is_vector() {
            return Err(Error::ContractViolation(
                "field does not live on the basis grid as a vector field".into(),
            ));
        }
        let scale = self.amplitude * self.grid.volume();
        Ok(self
            .modes
            .iter()
            .map(|m| {
                let flat = self.grid.flat_of_wave(m.wave);
                let dot: Complex64 = (0..self.grid.dim())
                    .map(|a| m.polarization[a] * field.component(a)[flat])
                    .sum();
                match m.parity {
                    Parity::Cos => scale * dot.re,
                    Parity::Sin => -scale * dot.im,
                }
            })
            .collect())
    }

    /// Velocity `Σ c_i ψ_i(x)` at an arbitrary point.
    pub fn evaluate(&self, coeffs: &[f64], x: &[f64; 3]) -> [f64; 3] {
        let mut u = [0.0; 3];
        for (m, &c) in self.modes.iter().zip(coeffs) {
            let (p, _) = m.profile(x);
            let s = self.amplitude * c * p;
            for a in 0..3 {
                u[a] += s * m.polarization[a];
            }
        }
        u
    }

    /// Velocity and its gradient `g[a][b] = ∂_b u_a` at an arbitrary point.
    pub fn evaluate_with_gradient(&self, coeffs: &[f64], x: &[f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
        let mut u = [0.0; 3];
        let mut g = [[0.0; 3]; 3];
        for (m, &c) in self.modes.iter().zip(coeffs) {
            let (p, dp) = m.profile(x);
            let s = self.amplitude * c;
            for a in 0..3 {
                u[a] += s * p * m.polarization[a];
                for b in 0..3 {
                    g[a][b] += s * dp * m.polarization[a] * m.wavevector[b];
                }
            }
        }
        (u, g)
    }
}
