//! Periodic-box Fourier machinery: grids, transforms, differential operators,
//! the Leray projection, the Stokes eigenbasis and two-thirds dealiasing.
//!
//! Coefficients are normalized so that `f(x) = Σ_k f̂_k e^{ik·x}` and the
//! discrete L² inner product is `(f, g) = (|Ω|/N^d) Σ_nodes f·g`.

mod basis;
pub mod fft;
mod field;
mod grid;
mod ops;

pub use basis::{Parity, StokesBasis, StokesMode};
pub use field::SpectralField;
pub use grid::Grid;
pub use ops::{
    dealias, dealias_in_place, differentiate, leray_project, partial, stokes_apply, DiffKind,
};

/// Discrete L² inner product of two nodal arrays.
pub fn nodal_inner(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    grid.node_weight() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

/// Nodal gradient tensor `g[a][b] = ∂_b u_a` of a spectral vector field.
pub fn nodal_gradient(field: &SpectralField) -> Vec<Vec<Vec<f64>>> {
    let dim = field.grid().dim();
    let mut g = vec![Vec::new(); field.components()];
    for b in 0..dim {
        let d = partial(field, b).to_nodal();
        for (a, comp) in d.into_iter().enumerate() {
            g[a].push(comp);
        }
    }
    g
}
