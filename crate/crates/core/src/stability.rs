//! Stability monitor for pairs of solutions.
//!
//! For `u = û − ū` and `ρ = ρ̂ − ρ̄` the difference energy is
//! `E = ‖√ρ̂ u‖² + κ‖∇u‖² + ‖ρ‖²`, and the monitor checks
//! `E(t) ≤ E(0) exp(∫₀ᵗ A)` with
//! `A = C (1 + ‖∇ū‖²_∞ + ‖ū_t‖²_{2*} + ‖∇ρ̄‖²_∞)`.

use crate::error::{Error, Result};
use crate::galerkin::{Galerkin, GalerkinState};
use crate::spectral::nodal_gradient;

pub fn difference_energy(solver: &Galerkin, a: &GalerkinState, b: &GalerkinState) -> Result<f64> {
    if (a.time - b.time).abs() > 1e-12 * a.time.abs().max(1.0) {
        return Err(Error::Validation(format!(
            "states are at different times ({} and {})",
            a.time, b.time
        )));
    }
    if a.coeffs.len() != b.coeffs.len() || a.rho.grid() != b.rho.grid() {
        return Err(Error::ContractViolation("states have different layouts".into()));
    }
    let diff: Vec<f64> = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x - y).collect();
    Ok(solver.weighted_kinetic(a, &diff)
        + solver.params().kappa * solver.dirichlet_sq(&diff)
        + a.rho.l2_distance_sq(&b.rho)?)
}

/// The monitored norms of the reference solution entering `A(t)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ReferenceNorms {
    pub grad_u_inf: f64,
    pub u_t_critical: f64,
    pub grad_rho_inf: f64,
}

impl ReferenceNorms {
    pub fn weight(&self) -> f64 {
        1.0 + self.grad_u_inf.powi(2) + self.u_t_critical.powi(2) + self.grad_rho_inf.powi(2)
    }
}

/// `‖∇ū‖_∞`, `‖ū_t‖_{2*}` (L^∞ in 2-D, L⁶ in 3-D) and `‖∇ρ̄‖_∞` at a state.
pub fn reference_norms(solver: &Galerkin, state: &GalerkinState) -> Result<ReferenceNorms> {
    let grid = solver.basis().grid();
    let dim = grid.dim();
    let u = solver.reconstruct_velocity(state);
    let grad = nodal_gradient(&u);
    let mut grad_u_inf: f64 = 0.0;
    for p in 0..grid.len() {
        let s: f64 = (0..dim)
            .flat_map(|a| (0..dim).map(move |b| (a, b)))
            .map(|(a, b)| grad[a][b][p].powi(2))
            .sum();
        grad_u_inf = grad_u_inf.max(s.sqrt());
    }
    let rate = solver.coefficient_rate(state)?;
    let ut = solver.basis().synthesize(&rate).to_nodal();
    let speed = (0..grid.len()).map(|p| (0..dim).map(|a| ut[a][p].powi(2)).sum::<f64>().sqrt());
    let u_t_critical = if dim == 2 {
        speed.fold(0.0, f64::max)
    } else {
        (grid.node_weight() * speed.map(|s| s.powi(6)).sum::<f64>()).powf(1.0 / 6.0)
    };
    Ok(ReferenceNorms {
        grad_u_inf,
        u_t_critical,
        grad_rho_inf: state.rho.gradient_max_norm(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GronwallSeries {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    /// `1 + ‖∇ū‖²_∞ + ‖ū_t‖²_{2*} + ‖∇ρ̄‖²_∞` before multiplication by C.
    pub weight: Vec<f64>,
    pub bound: Vec<f64>,
    pub coefficient: f64,
    pub pass: bool,
}

impl GronwallSeries {
    /// `E(t)/E(0)`, or zeros when the pair starts identical.
    pub fn growth(&self) -> Vec<f64> {
        let e0 = self.energy[0];
        self.energy
            .iter()
            .map(|e| if e0 > 0.0 { e / e0 } else { 0.0 })
            .collect()
    }
}

/// Difference energy and weights along two paired trajectories, before any
/// coefficient is chosen.
pub fn pair_series(
    solver: &Galerkin,
    run_a: &[GalerkinState],
    run_b: &[GalerkinState],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if run_a.len() != run_b.len() || run_a.is_empty() {
        return Err(Error::Validation("paired runs must have the same non-zero length".into()));
    }
    let mut times = Vec::with_capacity(run_a.len());
    let mut energy = Vec::with_capacity(run_a.len());
    let mut weight = Vec::with_capacity(run_a.len());
    for (a, b) in run_a.iter().zip(run_b) {
        times.push(b.time);
        energy.push(difference_energy(solver, a, b)?);
        weight.push(reference_norms(solver, b)?.weight());
    }
    Ok((times, energy, weight))
}

fn cumulative_trapezoid(times: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..f.len() {
        acc += 0.5 * (times[k] - times[k - 1]) * (f[k] + f[k - 1]);
        out.push(acc);
    }
    out
}

/// Smallest C with `E(t) ≤ E(0) exp(C ∫ weight)` on the given series, times
/// the safety factor. Never below `floor`.
pub fn calibrate_coefficient(
    times: &[f64],
    energy: &[f64],
    weight: &[f64],
    margin: f64,
    floor: f64,
) -> Result<f64> {
    let e0 = energy.first().copied().unwrap_or(0.0);
    if !(e0 > 0.0) {
        return Err(Error::Validation("calibration needs a non-zero initial difference".into()));
    }
    let integral = cumulative_trapezoid(times, weight);
    let needed = energy
        .iter()
        .zip(&integral)
        .skip(1)
        .filter(|(_, &i)| i > 0.0)
        .map(|(e, i)| (e / e0).ln() / i)
        .fold(0.0, f64::max);
    Ok((margin * needed).max(floor))
}

/// Applies the Grönwall bound with a fixed coefficient.
pub fn gronwall_monitor(
    solver: &Galerkin,
    run_a: &[GalerkinState],
    run_b: &[GalerkinState],
    coefficient: f64,
) -> Result<GronwallSeries> {
    let (times, energy, weight) = pair_series(solver, run_a, run_b)?;
    gronwall_from_series(times, energy, weight, coefficient)
}

pub fn gronwall_from_series(
    times: Vec<f64>,
    energy: Vec<f64>,
    weight: Vec<f64>,
    coefficient: f64,
) -> Result<GronwallSeries> {
    let e0 = energy[0];
    if e0 == 0.0 {
        if let Some((k, &e)) = energy.iter().enumerate().find(|(_, &e)| e > 0.0) {
            return Err(Error::UniquenessViolation {
                time: times[k],
                energy: e,
            });
        }
    }
    let integral = cumulative_trapezoid(&times, &weight);
    let bound: Vec<f64> = integral.iter().map(|i| e0 * (coefficient * i).exp()).collect();
    let pass = energy.iter().zip(&bound).all(|(e, b)| *e <= *b);
    Ok(GronwallSeries {
        times,
        energy,
        weight,
        bound,
        coefficient,
        pass,
    })
}

/// Largest relative disagreement of `E(t)/E(0)` between two perturbation sizes.
pub fn scale_invariance_gap(a: &GronwallSeries, b: &GronwallSeries) -> Result<f64> {
    if a.times.len() != b.times.len() {
        return Err(Error::Validation("series have different lengths".into()));
    }
    Ok(a
        .growth()
        .iter()
        .zip(b.growth())
        .map(|(x, y)| {
            let s = x.abs().max(y.abs());
            if s == 0.0 {
                0.0
            } else {
                (x - y).abs() / s
            }
        })
        .fold(0.0, f64::max))
}
