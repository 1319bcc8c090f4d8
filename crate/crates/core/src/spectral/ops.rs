use num_complex::Complex64;

use super::SpectralField;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiffKind {
    Gradient,
    Divergence,
    Laplacian,
}

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Exact spectral differentiation.
pub fn differentiate(field: &SpectralField, kind: DiffKind) -> Result<SpectralField> {
    let grid = field.grid();
    let dim = grid.dim();
    match kind {
        DiffKind::Gradient => {
            if field.components() != 1 {
                return Err(Error::ContractViolation(format!(
                    "gradient needs a scalar field, got {} components",
                    field.components()
                )));
            }
            let mut out = SpectralField::zeros(grid, dim);
            let src = field.component(0);
            for a in 0..dim {
                let dst = out.component_mut(a);
                for (flat, v) in dst.iter_mut().enumerate() {
                    *v = I * grid.wavevector(flat)[a] * src[flat];
                }
            }
            Ok(out)
        }
        DiffKind::Divergence => {
            if !field.is_vector() {
                return Err(Error::ContractViolation(format!(
                    "divergence needs a {dim}-component vector field, got {} components",
                    field.components()
                )));
            }
            let mut out = SpectralField::zeros(grid, 1);
            let dst = out.component_mut(0);
            for (flat, v) in dst.iter_mut().enumerate() {
                let k = grid.wavevector(flat);
                *v = (0..dim)
                    .map(|a| I * k[a] * field.component(a)[flat])
                    .sum();
            }
            Ok(out)
        }
        DiffKind::Laplacian => {
            let mut out = field.clone();
            for c in 0..out.components() {
                let dst = out.component_mut(c);
                for (flat, v) in dst.iter_mut().enumerate() {
                    let k = grid.wavevector(flat);
                    *v *= -k.iter().map(|x| x * x).sum::<f64>();
                }
            }
            Ok(out)
        }
    }
}

/// ∂f/∂x_axis applied to every component.
pub fn partial(field: &SpectralField, axis: usize) -> SpectralField {
    let grid = field.grid();
    let mut out = field.clone();
    for c in 0..out.components() {
        let dst = out.component_mut(c);
        for (flat, v) in dst.iter_mut().enumerate() {
            *v *= I * grid.wavevector(flat)[axis];
        }
    }
    out
}

/// Orthogonal projection onto divergence-free fields: `v ↦ v − k(k·v)/|k|²`.
pub fn leray_project(field: &SpectralField) -> Result<SpectralField> {
    if !field.is_vector() {
        return Err(Error::ContractViolation(format!(
            "Leray projection needs a vector field, got {} components",
            field.components()
        )));
    }
    let grid = field.grid();
    let dim = grid.dim();
    let mut out = field.clone();
    for flat in 0..grid.len() {
        let k = grid.wavevector(flat);
        let k2: f64 = k.iter().map(|x| x * x).sum();
        if k2 == 0.0 {
            continue;
        }
        let kv: Complex64 = (0..dim).map(|a| k[a] * field.component(a)[flat]).sum();
        for a in 0..dim {
            out.component_mut(a)[flat] -= kv * (k[a] / k2);
        }
    }
    Ok(out)
}

/// Stokes operator `u ↦ −μ ℙ Δ u`; the input is projected first.
pub fn stokes_apply(field: &SpectralField, mu: f64) -> Result<SpectralField> {
    let projected = leray_project(field)?;
    let mut out = leray_project(&differentiate(&projected, DiffKind::Laplacian)?)?;
    out.scale(-mu);
    Ok(out)
}

/// Two-thirds rule: zero every coefficient with some |k_i| > N/3.
pub fn dealias(field: &SpectralField) -> SpectralField {
    let mut out = field.clone();
    dealias_in_place(&mut out);
    out
}

pub fn dealias_in_place(field: &mut SpectralField) {
    let grid = field.grid().clone();
    for c in 0..field.components() {
        let dst = field.component_mut(c);
        for (flat, v) in dst.iter_mut().enumerate() {
            if !grid.is_dealiased(grid.wave_indices(flat)) {
                *v = Complex64::default();
            }
        }
    }
}
