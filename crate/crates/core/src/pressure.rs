//! Pressure recovery from the momentum balance.
//!
//! With `R = ρf − ρu_t − ρ(u·∇)u + μΔu + κΔu_t` the pressure is the zero-mean
//! solution of `Δp = div R`, so that `R − ∇p` is divergence-free.

use crate::error::{Error, Result};
use crate::galerkin::{Galerkin, GalerkinState};
use crate::spectral::{dealias_in_place, differentiate, nodal_gradient, DiffKind, SpectralField};

/// The dealiased momentum residual `R` at a state with coefficient rate `state_dot`.
pub fn momentum_residual(
    solver: &Galerkin,
    state: &GalerkinState,
    state_dot: &[f64],
) -> Result<SpectralField> {
    let basis = solver.basis();
    let params = solver.params();
    if state_dot.len() != basis.len() || state.coeffs.len() != basis.len() {
        return Err(Error::ContractViolation("coefficient vectors do not match the basis".into()));
    }
    let grid = basis.grid();
    let dim = grid.dim();
    let u = basis.synthesize(&state.coeffs);
    let u_nodal = u.to_nodal();
    let grad = nodal_gradient(&u);
    let ut = basis.synthesize(state_dot).to_nodal();
    let f = params.forcing.nodal(grid, state.time);
    let rho = state.rho.values();
    let mut inertial = vec![vec![0.0; grid.len()]; dim];
    for (a, comp) in inertial.iter_mut().enumerate() {
        for (p, v) in comp.iter_mut().enumerate() {
            let conv: f64 = (0..dim).map(|b| u_nodal[b][p] * grad[a][b][p]).sum();
            let force = f.as_ref().map_or(0.0, |f| f[a][p]);
            *v = rho[p] * (force - ut[a][p] - conv);
        }
    }
    let mut r = SpectralField::from_nodal(grid, &inertial)?;
    dealias_in_place(&mut r);
    // μΔu + κΔu_t, exact on the basis: Δψ_i = −|k_i|² ψ_i
    let viscous: Vec<f64> = basis
        .modes()
        .iter()
        .enumerate()
        .map(|(i, m)| -m.k_sq * (params.mu * state.coeffs[i] + params.kappa * state_dot[i]))
        .collect();
    r.axpy(1.0, &basis.synthesize(&viscous))?;
    Ok(r)
}

/// Zero-mean `p` with `Δp = div R`.
pub fn pressure_from_residual(residual: &SpectralField) -> Result<SpectralField> {
    let div = differentiate(residual, DiffKind::Divergence)?;
    let grid = residual.grid();
    let mut p = div;
    for (flat, v) in p.component_mut(0).iter_mut().enumerate() {
        let k = grid.wavevector(flat);
        let k_sq = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        *v = if k_sq == 0.0 { 0.0.into() } else { -*v / k_sq };
    }
    Ok(p)
}

pub fn recover_pressure(
    solver: &Galerkin,
    state: &GalerkinState,
    state_dot: &[f64],
) -> Result<SpectralField> {
    pressure_from_residual(&momentum_residual(solver, state, state_dot)?)
}

/// `‖∇p‖` by Parseval.
pub fn pressure_gradient_norm(p: &SpectralField) -> f64 {
    p.sobolev_seminorm_sq(1).sqrt()
}

/// L² norm of `−μΔw + ∇p − (ρf − ρu_t − ρ(u·∇)u)` with `w = u + σu_t`,
/// the stationary Stokes problem the pressure solves at each instant.
pub fn voigt_stokes_check(solver: &Galerkin, state: &GalerkinState, state_dot: &[f64]) -> Result<f64> {
    if !solver.params().within_theory() {
        return Err(Error::Unsupported(
            "the Voigt-Stokes identity needs kappa > 0 (sigma = kappa/mu)".into(),
        ));
    }
    let r = momentum_residual(solver, state, state_dot)?;
    let p = pressure_from_residual(&r)?;
    let grad_p = differentiate(&p, DiffKind::Gradient)?;
    // −μΔw − (ρf − ρu_t − ρ(u·∇)u) = −R, so the identity residual is ∇p − R
    let mut res = grad_p;
    res.axpy(-1.0, &r)?;
    Ok(res.l2_norm_sq().sqrt())
}
