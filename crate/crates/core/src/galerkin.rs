//! The density-coupled Galerkin system
//!
//! ```text
//! Σ_l (⟨ρ ψ_l, ψ_i⟩ + κ⟨∇ψ_l, ∇ψ_i⟩) c_l' = ⟨ρ f, ψ_i⟩ − ⟨ρ (u·∇)u, ψ_i⟩ − μ⟨∇u, ∇ψ_i⟩
//! ρ_t + u·∇ρ = 0,     u = Σ c_i ψ_i
//! ```
//!
//! integrated with classical RK4 on the coefficients. Two density carriers are
//! available. The Eulerian carrier freezes the nodal density over a step, so
//! the mass matrix is factored once, and afterwards transports it
//! semi-Lagrangian with the stage-averaged velocity. The Lagrangian carrier
//! attaches a constant density to one particle per node and integrates the
//! particle positions inside the same RK4 step, with all inner products taken
//! by particle quadrature. The discrete energy identity then holds exactly at
//! the semi-discrete level.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::estimates::{self, EstimateLedger, EstimateRecord};
use crate::forcing::Forcing;
use crate::spectral::{fft, nodal_gradient, Parity, SpectralField, StokesBasis};
use crate::transport::{advance_density, DEFAULT_CFL_LIMIT};

/// Physical parameters of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct FluidParams {
    pub mu: f64,
    pub kappa: f64,
    pub forcing: Forcing,
}

impl FluidParams {
    pub fn new(mu: f64, kappa: f64, forcing: Forcing) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::Validation(format!("viscosity mu must be positive, got {mu}")));
        }
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::Validation(format!("relaxation kappa must be >= 0, got {kappa}")));
        }
        Ok(Self { mu, kappa, forcing })
    }

    /// `σ = κ/μ`.
    pub fn sigma(&self) -> f64 {
        self.kappa / self.mu
    }

    /// Runs with κ = 0 are Navier–Stokes comparisons outside the Voigt theory.
    pub fn within_theory(&self) -> bool {
        self.kappa > 0.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportMode {
    #[default]
    SemiLagrangian,
    Lagrangian,
}

/// Density carried by material particles (Lagrangian mode).
#[derive(Clone, Debug, PartialEq)]
pub struct Particles {
    pub positions: Vec<[f64; 3]>,
    pub density: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GalerkinState {
    pub time: f64,
    pub coeffs: Vec<f64>,
    /// Nodal density. In Lagrangian mode this is deposited from the particles.
    pub rho: DensityField,
    pub particles: Option<Particles>,
    /// `μ ∫₀ᵗ ‖∇u‖² ds`, integrated alongside the coefficients.
    pub dissipation: f64,
}

/// Trajectory snapshots and the estimate ledger of a run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trajectory: Vec<GalerkinState>,
    pub ledger: EstimateLedger,
}

/// Particles per deterministic reduction chunk.
const CHUNK: usize = 256;

struct ParticleSums {
    mass: Option<DMatrix<f64>>,
    load: Vec<f64>,
    velocity: Vec<[f64; 3]>,
}

pub struct Galerkin {
    basis: StokesBasis,
    params: FluidParams,
    mode: TransportMode,
    cfl_limit: f64,
    k_sq: Vec<f64>,
    polar_dot: DMatrix<f64>,
}

fn add(a: [i64; 3], b: [i64; 3]) -> [i64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: [i64; 3], b: [i64; 3]) -> [i64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn combine(base: &[f64], dt: f64, k: &[f64]) -> Vec<f64> {
    base.iter().zip(k).map(|(b, k)| b + dt * k).collect()
}

fn rk4_mean(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    (0..a.len())
        .map(|i| (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]) / 6.0)
        .collect()
}

impl Galerkin {
    pub fn new(basis: StokesBasis, params: FluidParams, mode: TransportMode) -> Self {
        let j = basis.len();
        let modes = basis.modes();
        let polar_dot = DMatrix::from_fn(j, j, |i, l| {
            (0..3)
                .map(|a| modes[i].polarization[a] * modes[l].polarization[a])
                .sum()
        });
        Self {
            k_sq: basis.k_sq(),
            basis,
            params,
            mode,
            cfl_limit: DEFAULT_CFL_LIMIT,
            polar_dot,
        }
    }

    pub fn with_cfl_limit(mut self, limit: f64) -> Self {
        self.cfl_limit = limit;
        self
    }

    pub fn basis(&self) -> &StokesBasis {
        &self.basis
    }

    pub fn params(&self) -> &FluidParams {
        &self.params
    }

    pub fn mode(&self) -> TransportMode {
        self.mode
    }

    /// `c_i(0) = (u₀ₙ, ψ_i)` with the regularized density attached.
    pub fn initial_state(&self, rho0n: DensityField, u0n: &SpectralField) -> Result<GalerkinState> {
        if rho0n.grid() != self.basis.grid() {
            return Err(Error::ContractViolation("density and basis grids differ".into()));
        }
        let coeffs = self.basis.project(u0n)?;
        self.state_from_coefficients(rho0n, coeffs)
    }

    pub fn state_from_coefficients(&self, rho: DensityField, coeffs: Vec<f64>) -> Result<GalerkinState> {
        if coeffs.len() != self.basis.len() {
            return Err(Error::ContractViolation(format!(
                "{} coefficients for a basis of {}",
                coeffs.len(),
                self.basis.len()
            )));
        }
        let particles = match self.mode {
            TransportMode::SemiLagrangian => None,
            TransportMode::Lagrangian => {
                let grid = rho.grid();
                Some(Particles {
                    positions: (0..grid.len()).map(|p| grid.position(p)).collect(),
                    density: rho.values().to_vec(),
                })
            }
        };
        Ok(GalerkinState {
            time: 0.0,
            coeffs,
            rho,
            particles,
            dissipation: 0.0,
        })
    }

    /// `u = Σ c_i ψ_i`.
    pub fn reconstruct_velocity(&self, state: &GalerkinState) -> SpectralField {
        self.basis.synthesize(&state.coeffs)
    }

    /// `‖∇u‖² = Σ |k_i|² c_i²`.
    pub fn dirichlet_sq(&self, coeffs: &[f64]) -> f64 {
        self.k_sq.iter().zip(coeffs).map(|(k, c)| k * c * c).sum()
    }

    /// `‖D²u‖² = Σ |k_i|⁴ c_i²`.
    pub fn hessian_sq(&self, coeffs: &[f64]) -> f64 {
        self.k_sq.iter().zip(coeffs).map(|(k, c)| k * k * c * c).sum()
    }

    /// Density block `⟨ρ ψ_l, ψ_i⟩` of the nodal density, exact for nodal quadrature.
    pub fn density_block(&self, rho: &DensityField) -> DMatrix<f64> {
        let grid = self.basis.grid();
        let rhat = fft::forward(grid, rho.values());
        let at = |w: [i64; 3]| rhat[grid.flat_wrapped(w)];
        let modes = self.basis.modes();
        let j = modes.len();
        let mut m = DMatrix::zeros(j, j);
        // with ρ̂ the normalized coefficients, ∫ρ cos(q·x) = |Ω| Re ρ̂_q and
        // ∫ρ sin(q·x) = −|Ω| Im ρ̂_q; the factor a²|Ω|/2 is one
        let cos = |z: Complex64| z.re;
        let sin = |z: Complex64| -z.im;
        for i in 0..j {
            for l in 0..=i {
                let e = self.polar_dot[(i, l)];
                if e == 0.0 {
                    continue;
                }
                let (mi, ml) = (&modes[i], &modes[l]);
                let s = at(add(mi.wave, ml.wave));
                let d = at(sub(mi.wave, ml.wave));
                let v = match (mi.parity, ml.parity) {
                    (Parity::Cos, Parity::Cos) => cos(d) + cos(s),
                    (Parity::Sin, Parity::Sin) => cos(d) - cos(s),
                    (Parity::Sin, Parity::Cos) => sin(s) + sin(d),
                    (Parity::Cos, Parity::Sin) => sin(s) - sin(d),
                };
                m[(i, l)] = e * v;
                m[(l, i)] = e * v;
            }
        }
        m
    }

    /// `cᵀ M_ρ c = ‖√ρ u‖²` in the quadrature the state's carrier uses.
    pub fn weighted_kinetic(&self, state: &GalerkinState, coeffs: &[f64]) -> f64 {
        match &state.particles {
            None => {
                let m = self.density_block(&state.rho);
                let c = DVector::from_column_slice(coeffs);
                c.dot(&(&m * &c))
            }
            Some(p) => {
                let w = self.basis.grid().volume() / p.positions.len() as f64;
                p.positions
                    .iter()
                    .zip(&p.density)
                    .map(|(x, r)| {
                        let u = self.basis.evaluate(coeffs, x);
                        w * r * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2])
                    })
                    .sum()
            }
        }
    }

    /// `½‖√ρu‖² + (κ/2)‖∇u‖² + μ∫₀ᵗ‖∇u‖²`.
    pub fn energy_functional(&self, state: &GalerkinState) -> f64 {
        0.5 * self.weighted_kinetic(state, &state.coeffs)
            + 0.5 * self.params.kappa * self.dirichlet_sq(&state.coeffs)
            + state.dissipation
    }

    fn add_voigt(&self, mut m: DMatrix<f64>) -> DMatrix<f64> {
        for (i, k) in self.k_sq.iter().enumerate() {
            m[(i, i)] += self.params.kappa * k;
        }
        m
    }

    /// Nodal-quadrature load `⟨ρ f, ψ_i⟩ − ⟨ρ (u·∇)u, ψ_i⟩`.
    fn eulerian_load(&self, rho: &[f64], coeffs: &[f64], t: f64) -> Result<Vec<f64>> {
        let grid = self.basis.grid();
        let dim = grid.dim();
        let forcing = self.params.forcing.nodal(grid, t);
        let moving = coeffs.iter().any(|&c| c != 0.0);
        if forcing.is_none() && !moving {
            return Ok(vec![0.0; coeffs.len()]);
        }
        let mut g = forcing.unwrap_or_else(|| vec![vec![0.0; grid.len()]; dim]);
        if moving {
            let u = self.basis.synthesize(coeffs);
            let nodal = u.to_nodal();
            let grad = nodal_gradient(&u);
            for (a, ga) in g.iter_mut().enumerate() {
                for (p, v) in ga.iter_mut().enumerate() {
                    let conv: f64 = (0..dim).map(|b| nodal[b][p] * grad[a][b][p]).sum();
                    *v -= conv;
                }
            }
        }
        for ga in g.iter_mut() {
            for (v, r) in ga.iter_mut().zip(rho) {
                *v *= r;
            }
        }
        self.basis.project(&SpectralField::from_nodal(grid, &g)?)
    }

    fn particle_sums(
        &self,
        particles: &Particles,
        positions: &[[f64; 3]],
        coeffs: &[f64],
        t: f64,
        with_mass: bool,
    ) -> ParticleSums {
        let modes = self.basis.modes();
        let j = modes.len();
        let amp = self.basis.amplitude();
        let w = self.basis.grid().volume() / positions.len() as f64;
        let forcing = &self.params.forcing;
        let chunks: Vec<ParticleSums> = positions
            .par_chunks(CHUNK)
            .zip(particles.density.par_chunks(CHUNK))
            .map(|(xs, rs)| {
                let mut mass = with_mass.then(|| DMatrix::zeros(j, j));
                let mut load = vec![0.0; j];
                let mut velocity = Vec::with_capacity(xs.len());
                let mut phi = vec![0.0; j];
                let mut dphi = vec![0.0; j];
                for (x, &r) in xs.iter().zip(rs) {
                    let mut u = [0.0; 3];
                    let mut g = [[0.0; 3]; 3];
                    for (i, m) in modes.iter().enumerate() {
                        let (p, dp) = m.profile(x);
                        phi[i] = amp * p;
                        dphi[i] = amp * dp;
                        let c = coeffs[i];
                        for a in 0..3 {
                            u[a] += c * phi[i] * m.polarization[a];
                            for b in 0..3 {
                                g[a][b] += c * dphi[i] * m.polarization[a] * m.wavevector[b];
                            }
                        }
                    }
                    let f = forcing.at(x, t);
                    let mut h = [0.0; 3];
                    for a in 0..3 {
                        let conv = g[a][0] * u[0] + g[a][1] * u[1] + g[a][2] * u[2];
                        h[a] = w * r * (f[a] - conv);
                    }
                    for (i, m) in modes.iter().enumerate() {
                        let e = &m.polarization;
                        load[i] += (h[0] * e[0] + h[1] * e[1] + h[2] * e[2]) * phi[i];
                    }
                    if let Some(mass) = mass.as_mut() {
                        for i in 0..j {
                            let s = w * r * phi[i];
                            for l in 0..=i {
                                mass[(i, l)] += s * phi[l] * self.polar_dot[(i, l)];
                            }
                        }
                    }
                    velocity.push(u);
                }
                ParticleSums {
                    mass,
                    load,
                    velocity,
                }
            })
            .collect();
        let mut total = ParticleSums {
            mass: with_mass.then(|| DMatrix::zeros(j, j)),
            load: vec![0.0; j],
            velocity: Vec::with_capacity(positions.len()),
        };
        for part in chunks {
            if let (Some(acc), Some(m)) = (total.mass.as_mut(), part.mass) {
                *acc += m;
            }
            for (a, b) in total.load.iter_mut().zip(&part.load) {
                *a += b;
            }
            total.velocity.extend(part.velocity);
        }
        if let Some(m) = total.mass.as_mut() {
            for i in 0..j {
                for l in 0..i {
                    m[(l, i)] = m[(i, l)];
                }
            }
        }
        total
    }

    fn check_finite(&self, what: &'static str, values: &[f64], time: f64) -> Result<()> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { what, time })
        }
    }

    fn factor(&self, m: DMatrix<f64>, time: f64) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        self.check_finite("mass matrix", m.as_slice(), time)?;
        let min_diag = m.diagonal().min();
        m.cholesky().ok_or_else(|| Error::Degenerate {
            time,
            detail: format!("Cholesky factorization failed, smallest diagonal entry {min_diag:e}"),
        })
    }

    fn viscous(&self, coeffs: &[f64]) -> Vec<f64> {
        coeffs
            .iter()
            .zip(&self.k_sq)
            .map(|(c, k)| -self.params.mu * k * c)
            .collect()
    }

    /// Mass matrix `⟨ρψ_l,ψ_i⟩ + κ⟨∇ψ_l,∇ψ_i⟩` and right-hand side at the state.
    pub fn assemble_system(&self, state: &GalerkinState) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let (block, load) = match &state.particles {
            None => (
                self.density_block(&state.rho),
                self.eulerian_load(state.rho.values(), &state.coeffs, state.time)?,
            ),
            Some(p) => {
                let sums = self.particle_sums(p, &p.positions, &state.coeffs, state.time, true);
                (sums.mass.expect("mass requested"), sums.load)
            }
        };
        let rhs: Vec<f64> = load
            .iter()
            .zip(self.viscous(&state.coeffs))
            .map(|(a, b)| a + b)
            .collect();
        self.check_finite("right-hand side", &rhs, state.time)?;
        let m = self.add_voigt(block);
        self.check_finite("mass matrix", m.as_slice(), state.time)?;
        Ok((m, DVector::from_vec(rhs)))
    }

    /// `c'(t)` from the mass-matrix solve at the state.
    pub fn coefficient_rate(&self, state: &GalerkinState) -> Result<Vec<f64>> {
        let (m, rhs) = self.assemble_system(state)?;
        let chol = self.factor(m, state.time)?;
        Ok(chol.solve(&rhs).as_slice().to_vec())
    }

    /// One RK4 step of length `dt`.
    pub fn step(&self, state: &GalerkinState, dt: f64) -> Result<GalerkinState> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        if state.coeffs.len() != self.basis.len() {
            return Err(Error::ContractViolation("state does not match the basis".into()));
        }
        let result = match &state.particles {
            None => self.step_eulerian(state, dt),
            Some(p) => self.step_lagrangian(state, p, dt),
        };
        result.map_err(|e| e.at_time(state.time))
    }

    fn step_eulerian(&self, state: &GalerkinState, dt: f64) -> Result<GalerkinState> {
        let t = state.time;
        let rho = state.rho.values();
        let chol = self.factor(self.add_voigt(self.density_block(&state.rho)), t)?;
        let rate = |c: &[f64], s: f64| -> Result<Vec<f64>> {
            let load = self.eulerian_load(rho, c, s)?;
            let rhs: Vec<f64> = load.iter().zip(self.viscous(c)).map(|(a, b)| a + b).collect();
            self.check_finite("right-hand side", &rhs, s)?;
            Ok(chol.solve(&DVector::from_vec(rhs)).as_slice().to_vec())
        };
        let c1 = &state.coeffs;
        let k1 = rate(c1, t)?;
        let c2 = combine(c1, 0.5 * dt, &k1);
        let k2 = rate(&c2, t + 0.5 * dt)?;
        let c3 = combine(c1, 0.5 * dt, &k2);
        let k3 = rate(&c3, t + 0.5 * dt)?;
        let c4 = combine(c1, dt, &k3);
        let k4 = rate(&c4, t + dt)?;
        let coeffs = combine(c1, dt, &rk4_mean(&k1, &k2, &k3, &k4));
        self.check_finite("coefficients", &coeffs, t + dt)?;
        let dissipation = state.dissipation
            + dt * self.params.mu
                * (self.dirichlet_sq(c1)
                    + 2.0 * self.dirichlet_sq(&c2)
                    + 2.0 * self.dirichlet_sq(&c3)
                    + self.dirichlet_sq(&c4))
                / 6.0;
        let mean = rk4_mean(c1, &c2, &c3, &c4);
        let rho = if mean.iter().all(|&c| c == 0.0) {
            state.rho.clone()
        } else {
            advance_density(&state.rho, &self.basis.synthesize(&mean), dt, self.cfl_limit)?
        };
        Ok(GalerkinState {
            time: t + dt,
            coeffs,
            rho,
            particles: None,
            dissipation,
        })
    }

    fn step_lagrangian(&self, state: &GalerkinState, p: &Particles, dt: f64) -> Result<GalerkinState> {
        let t = state.time;
        let rate = |c: &[f64], x: &[[f64; 3]], s: f64| -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
            let sums = self.particle_sums(p, x, c, s, true);
            let rhs: Vec<f64> = sums.load.iter().zip(self.viscous(c)).map(|(a, b)| a + b).collect();
            self.check_finite("right-hand side", &rhs, s)?;
            let chol = self.factor(self.add_voigt(sums.mass.expect("mass requested")), s)?;
            Ok((chol.solve(&DVector::from_vec(rhs)).as_slice().to_vec(), sums.velocity))
        };
        let shift = |x: &[[f64; 3]], h: f64, v: &[[f64; 3]]| -> Vec<[f64; 3]> {
            x.iter()
                .zip(v)
                .map(|(x, v)| [x[0] + h * v[0], x[1] + h * v[1], x[2] + h * v[2]])
                .collect()
        };
        let c1 = &state.coeffs;
        let x1 = &p.positions;
        let (k1, v1) = rate(c1, x1, t)?;
        let c2 = combine(c1, 0.5 * dt, &k1);
        let x2 = shift(x1, 0.5 * dt, &v1);
        let (k2, v2) = rate(&c2, &x2, t + 0.5 * dt)?;
        let c3 = combine(c1, 0.5 * dt, &k2);
        let x3 = shift(x1, 0.5 * dt, &v2);
        let (k3, v3) = rate(&c3, &x3, t + 0.5 * dt)?;
        let c4 = combine(c1, dt, &k3);
        let x4 = shift(x1, dt, &v3);
        let (k4, v4) = rate(&c4, &x4, t + dt)?;
        let coeffs = combine(c1, dt, &rk4_mean(&k1, &k2, &k3, &k4));
        self.check_finite("coefficients", &coeffs, t + dt)?;
        let grid = self.basis.grid();
        let positions: Vec<[f64; 3]> = (0..x1.len())
            .map(|i| {
                let mut x = [0.0; 3];
                for a in 0..grid.dim() {
                    let v = (v1[i][a] + 2.0 * v2[i][a] + 2.0 * v3[i][a] + v4[i][a]) / 6.0;
                    x[a] = (x1[i][a] + dt * v).rem_euclid(grid.length(a));
                }
                x
            })
            .collect();
        let dissipation = state.dissipation
            + dt * self.params.mu
                * (self.dirichlet_sq(c1)
                    + 2.0 * self.dirichlet_sq(&c2)
                    + 2.0 * self.dirichlet_sq(&c3)
                    + self.dirichlet_sq(&c4))
                / 6.0;
        let particles = Particles {
            positions,
            density: p.density.clone(),
        };
        let rho = deposit(grid, &particles)?;
        Ok(GalerkinState {
            time: t + dt,
            coeffs,
            rho,
            particles: Some(particles),
            dissipation,
        })
    }

    /// Every state from the initial one to `t₀ + horizon`, without estimates.
    pub fn integrate(&self, initial: GalerkinState, horizon: f64, dt: f64) -> Result<Vec<GalerkinState>> {
        let steps = step_count(horizon, dt)?;
        let t0 = initial.time;
        let mut out = Vec::with_capacity(steps + 1);
        out.push(initial);
        for k in 1..=steps {
            let mut next = self.step(out.last().expect("non-empty"), dt)?;
            next.time = t0 + k as f64 * dt;
            out.push(next);
        }
        Ok(out)
    }

    /// Integrates from the state's time over `horizon` with fixed `dt`,
    /// recording estimates after every step and keeping every `stride`-th
    /// state (plus the final one). `observe` sees each record as it is made.
    pub fn run(
        &self,
        initial: GalerkinState,
        horizon: f64,
        dt: f64,
        stride: usize,
        mut observe: impl FnMut(&GalerkinState, &EstimateRecord) -> Result<()>,
    ) -> Result<RunOutput> {
        let steps = step_count(horizon, dt)?;
        let stride = stride.max(1);
        let t0 = initial.time;
        let mut ledger = EstimateLedger::default();
        let first = estimates::observe(self, &initial)?;
        observe(&initial, &first)?;
        ledger.push(first)?;
        let mut trajectory = vec![initial.clone()];
        let mut state = initial;
        for k in 1..=steps {
            let mut next = self.step(&state, dt)?;
            // avoid drift from repeated addition
            next.time = t0 + k as f64 * dt;
            let rec = estimates::observe(self, &next).map_err(|e| e.at_time(next.time))?;
            observe(&next, &rec)?;
            ledger.push(rec)?;
            if k % stride == 0 || k == steps {
                trajectory.push(next.clone());
            }
            state = next;
        }
        Ok(RunOutput { trajectory, ledger })
    }
}

/// Number of fixed steps covering `horizon`; rejects incommensurate pairs.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be non-negative, got {horizon}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    let steps = (horizon / dt).round();
    if (steps * dt - horizon).abs() > 1e-9 * horizon.max(dt) {
        return Err(Error::Validation(format!(
            "horizon {horizon} is not a whole number of steps of {dt}"
        )));
    }
    Ok(steps as usize)
}

/// Nodal density from particles by normalized cloud-in-cell weights. Each
/// node receives a convex combination of particle densities, and nodes no
/// particle reaches are filled from their neighbours, so the particle range
/// is never left.
pub fn deposit(grid: &crate::spectral::Grid, particles: &Particles) -> Result<DensityField> {
    let dim = grid.dim();
    let n = grid.len();
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for (x, &r) in particles.positions.iter().zip(&particles.density) {
        let mut base = [0i64; 3];
        let mut frac = [0.0; 3];
        for a in 0..dim {
            let mut s = x[a] / grid.spacing(a);
            // particles sitting on nodes up to roundoff deposit onto that node only
            if (s - s.round()).abs() < 1e-12 * grid.points() as f64 {
                s = s.round();
            }
            let f = s.floor();
            base[a] = f as i64;
            frac[a] = s - f;
        }
        for bits in 0..(1usize << dim) {
            let mut c = base;
            let mut w = 1.0;
            for a in 0..dim {
                if (bits >> a) & 1 == 1 {
                    c[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w == 0.0 {
                continue;
            }
            let flat = grid.flat_wrapped(c);
            num[flat] += w * r;
            den[flat] += w;
            lo[flat] = lo[flat].min(r);
            hi[flat] = hi[flat].max(r);
        }
    }
    let mut values: Vec<Option<f64>> = (0..n)
        .map(|i| (den[i] > 0.0).then(|| (num[i] / den[i]).clamp(lo[i], hi[i])))
        .collect();
    while values.iter().any(Option::is_none) {
        let snapshot = values.clone();
        for (flat, v) in values.iter_mut().enumerate() {
            if v.is_some() {
                continue;
            }
            let c = grid.coords(flat);
            let (mut sum, mut count, mut lo, mut hi) = (0.0, 0.0, f64::INFINITY, f64::NEG_INFINITY);
            for a in 0..dim {
                for d in [-1i64, 1] {
                    let mut nb = [c[0] as i64, c[1] as i64, c[2] as i64];
                    nb[a] += d;
                    if let Some(x) = snapshot[grid.flat_wrapped(nb)] {
                        sum += x;
                        count += 1.0;
                        lo = lo.min(x);
                        hi = hi.max(x);
                    }
                }
            }
            if count > 0.0 {
                *v = Some((sum / count).clamp(lo, hi));
            }
        }
        if values == snapshot {
            return Err(Error::Validation("no particles to deposit".into()));
        }
    }
    DensityField::new(grid, values.into_iter().map(|v| v.unwrap_or_default()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial::{build_velocity, VelocityPreset};
    use crate::spectral::Grid;
    use std::f64::consts::PI;

    fn solver(n: usize, j: usize, mu: f64, kappa: f64, mode: TransportMode) -> Galerkin {
        let g = Grid::periodic(2, n).unwrap();
        let basis = StokesBasis::build(&g, j, mu).unwrap();
        Galerkin::new(basis, FluidParams::new(mu, kappa, Forcing::None).unwrap(), mode)
    }

    #[test]
    fn unit_density_mass_matrix() {
        let s = solver(16, 12, 0.1, 0.5, TransportMode::SemiLagrangian);
        let g = s.basis().grid().clone();
        let st = s
            .state_from_coefficients(DensityField::constant(&g, 1.0), vec![0.0; 12])
            .unwrap();
        let (m, rhs) = s.assemble_system(&st).unwrap();
        for i in 0..12 {
            for l in 0..12 {
                let expected = if i == l { 1.0 + 0.5 * s.k_sq[i] } else { 0.0 };
                assert!((m[(i, l)] - expected).abs() < 1e-13, "{i} {l}");
            }
        }
        assert!(rhs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn density_block_matches_fine_quadrature() {
        let s = solver(16, 8, 0.1, 0.0, TransportMode::SemiLagrangian);
        let g = s.basis().grid().clone();
        let rho = DensityField::from_fn(&g, |x| 1.0 + 0.5 * x[0].cos() + 0.2 * (x[0] + 2.0 * x[1]).sin())
            .unwrap();
        let m = s.density_block(&rho);
        // independent oracle: pointwise quadrature on a 64² grid
        let fine = Grid::periodic(2, 64).unwrap();
        let b = s.basis();
        for i in 0..8 {
            for l in 0..8 {
                let mut ci = vec![0.0; 8];
                let mut cl = vec![0.0; 8];
                ci[i] = 1.0;
                cl[l] = 1.0;
                let mut sum = 0.0;
                for p in 0..fine.len() {
                    let x = fine.position(p);
                    let r = 1.0 + 0.5 * x[0].cos() + 0.2 * (x[0] + 2.0 * x[1]).sin();
                    let a = b.evaluate(&ci, &x);
                    let c = b.evaluate(&cl, &x);
                    sum += r * (a[0] * c[0] + a[1] * c[1]);
                }
                sum *= fine.node_weight();
                assert!((m[(i, l)] - sum).abs() < 1e-12, "{i} {l}: {} vs {sum}", m[(i, l)]);
            }
        }
    }

    #[test]
    fn shear_mode_decays_in_closed_form() {
        for (kappa, expected) in [(1.0, (-0.05f64).exp()), (0.0, (-0.1f64).exp())] {
            let s = solver(16, 4, 0.1, kappa, TransportMode::SemiLagrangian);
            let g = s.basis().grid().clone();
            let u0 = build_velocity(&g, &VelocityPreset::SingleMode { amplitude: 1.0 }).unwrap();
            let st = s.initial_state(DensityField::constant(&g, 1.0), &u0).unwrap();
            assert!((st.coeffs[0] - PI * 2f64.sqrt()).abs() < 1e-12);
            let mut cur = st.clone();
            for _ in 0..100 {
                cur = s.step(&cur, 0.01).unwrap();
            }
            let ratio = cur.coeffs[0] / st.coeffs[0];
            assert!((ratio / expected - 1.0).abs() < 1e-9, "kappa {kappa}: {ratio}");
        }
    }

    #[test]
    fn zero_state_stays_zero() {
        let s = solver(16, 10, 0.1, 1.0, TransportMode::SemiLagrangian);
        let g = s.basis().grid().clone();
        let st = s
            .state_from_coefficients(DensityField::constant(&g, 0.5), vec![0.0; 10])
            .unwrap();
        let next = s.step(&st, 0.1).unwrap();
        assert!(next.coeffs.iter().all(|&c| c == 0.0));
        assert_eq!(next.rho, st.rho);
    }

    #[test]
    fn vacuum_without_voigt_is_degenerate() {
        let s = solver(16, 6, 0.1, 0.0, TransportMode::SemiLagrangian);
        let g = s.basis().grid().clone();
        let st = s
            .state_from_coefficients(DensityField::constant(&g, 0.0), vec![1.0; 6])
            .unwrap();
        match s.step(&st, 0.01).map_err(|e| e.root().to_string()) {
            Err(msg) => assert!(msg.contains("elliptic"), "{msg}"),
            Ok(_) => panic!("expected a degeneracy error"),
        }
    }

    #[test]
    fn particles_start_on_nodes() {
        let s = solver(16, 6, 0.1, 1.0, TransportMode::Lagrangian);
        let g = s.basis().grid().clone();
        let rho = DensityField::from_fn(&g, |x| 1.0 + 0.3 * x[1].sin()).unwrap();
        let st = s.state_from_coefficients(rho.clone(), vec![0.0; 6]).unwrap();
        assert_eq!(deposit(&g, st.particles.as_ref().unwrap()).unwrap(), rho);
        // particle quadrature at the nodes equals nodal quadrature
        let c: Vec<f64> = (0..6).map(|i| 0.3 - 0.1 * i as f64).collect();
        let mut eul = st.clone();
        eul.particles = None;
        let a = s.weighted_kinetic(&st, &c);
        let b = s.weighted_kinetic(&eul, &c);
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn step_count_rules() {
        assert_eq!(step_count(1.0, 1e-3).unwrap(), 1000);
        assert_eq!(step_count(0.0, 0.1).unwrap(), 0);
        assert!(step_count(1.0, 0.3).is_err());
    }
}
