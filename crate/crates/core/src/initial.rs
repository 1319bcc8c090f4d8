//! Initial data: vacuum-admitting densities, velocity presets, Friedrichs
//! mollification with shrinking support, the `+1/n` density lift, and the
//! projection of the regularized velocity onto the Galerkin basis.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::spectral::{differentiate, leray_project, DiffKind, Grid, SpectralField, StokesBasis};

/// Normalized discrete Friedrichs kernel of radius `1/n` (in box coordinates).
#[derive(Clone, Debug)]
pub struct Mollifier {
    offsets: Vec<([i64; 3], f64)>,
}

impl Mollifier {
    pub fn new(grid: &Grid, n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("mollification index must be at least 1".into()));
        }
        let radius = 1.0 / n as f64;
        let spacing = grid.max_spacing();
        if radius < spacing {
            return Err(Error::KernelTooNarrow { radius, spacing });
        }
        let dim = grid.dim();
        let mut reach = [0i64; 3];
        for a in 0..dim {
            reach[a] = (radius / grid.spacing(a)).floor() as i64;
        }
        let mut offsets = Vec::new();
        for i in -reach[0]..=reach[0] {
            for j in -reach[1]..=reach[1] {
                for k in -reach[2]..=reach[2] {
                    let m = [i, j, k];
                    let r2: f64 = (0..dim)
                        .map(|a| (m[a] as f64 * grid.spacing(a) / radius).powi(2))
                        .sum();
                    if r2 < 1.0 {
                        offsets.push((m, (-1.0 / (1.0 - r2)).exp()));
                    }
                }
            }
        }
        let total: f64 = offsets.iter().map(|(_, w)| w).sum();
        offsets.iter_mut().for_each(|(_, w)| *w /= total);
        Ok(Self { offsets })
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.offsets.iter().map(|(_, w)| *w)
    }

    /// Periodic discrete convolution of nodal values.
    pub fn apply(&self, grid: &Grid, values: &[f64]) -> Vec<f64> {
        (0..grid.len())
            .map(|flat| {
                let c = grid.coords(flat);
                let centre = values[flat];
                // accumulate deviations so locally constant data is reproduced bit-exactly
                centre
                    + self
                        .offsets
                        .iter()
                        .map(|(m, w)| {
                            let src =
                                [c[0] as i64 - m[0], c[1] as i64 - m[1], c[2] as i64 - m[2]];
                            w * (values[grid.flat_wrapped(src)] - centre)
                        })
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Mollified density; the output range is contained in the input range.
pub fn mollify(rho: &DensityField, n: u32) -> Result<DensityField> {
    let grid = rho.grid();
    let kernel = Mollifier::new(grid, n)?;
    let (lo, hi) = (rho.min(), rho.max());
    let out = kernel
        .apply(grid, rho.values())
        .into_iter()
        .map(|v| v.clamp(lo, hi))
        .collect();
    DensityField::new(grid, out)
}

/// Mollified vector field, componentwise on nodal values.
pub fn mollify_vector(field: &SpectralField, n: u32) -> Result<SpectralField> {
    let grid = field.grid();
    let kernel = Mollifier::new(grid, n)?;
    let nodal: Vec<Vec<f64>> = field
        .to_nodal()
        .iter()
        .map(|c| kernel.apply(grid, c))
        .collect();
    SpectralField::from_nodal(grid, &nodal)
}

/// `mollify(ρ₀, n) + 1/n`: strictly positive, bounded by `max ρ₀ + 1/n`.
pub fn lift_density(rho0: &DensityField, n: u32) -> Result<DensityField> {
    if rho0.min() < 0.0 {
        return Err(Error::Validation(format!(
            "initial density must be non-negative, found {}",
            rho0.min()
        )));
    }
    let lift = 1.0 / n.max(1) as f64;
    let m = mollify(rho0, n)?;
    DensityField::new(rho0.grid(), m.into_values().into_iter().map(|v| v + lift).collect())
}

/// Galerkin coefficients `c_i(0) = (u₀ₙ, ψ_i)`.
pub fn project_velocity(u0n: &SpectralField, basis: &StokesBasis) -> Result<Vec<f64>> {
    basis.project(u0n)
}

/// Vacuum region of the initial density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum VacuumSpec {
    #[serde(alias = "constant")]
    None,
    /// Disk (ball in 3-D); `center` defaults to the box center.
    #[serde(alias = "vacuum_disk")]
    Disk {
        radius: f64,
        #[serde(default)]
        ramp: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    /// Slab `|x_axis - center| < half_width`.
    #[serde(alias = "vacuum_strip")]
    Strip {
        half_width: f64,
        #[serde(default)]
        ramp: f64,
        #[serde(default)]
        axis: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<f64>,
    },
}

fn smooth_ramp(distance_outside: f64, ramp: f64) -> f64 {
    if distance_outside < 0.0 {
        0.0
    } else if ramp == 0.0 || distance_outside >= ramp {
        1.0
    } else {
        let t = distance_outside / ramp;
        t * t * (3.0 - 2.0 * t)
    }
}

fn periodic_offset(x: f64, c: f64, length: f64) -> f64 {
    let d = (x - c).rem_euclid(length);
    d.min(length - d)
}

/// ρ₀ = 0 inside the region, `m` outside, with a C¹ ramp of the given width.
pub fn make_vacuum_density(grid: &Grid, spec: &VacuumSpec, m: f64) -> Result<DensityField> {
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::Validation(format!("density bound M must be non-negative, got {m}")));
    }
    let dim = grid.dim();
    match spec {
        VacuumSpec::None => Ok(DensityField::constant(grid, m)),
        VacuumSpec::Disk {
            radius,
            ramp,
            center,
        } => {
            if *radius < 0.0 || *ramp < 0.0 {
                return Err(Error::Validation("disk radius and ramp must be non-negative".into()));
            }
            if *radius == 0.0 {
                return Ok(DensityField::constant(grid, m));
            }
            let mut c = [0.0; 3];
            for a in 0..dim {
                c[a] = match center {
                    Some(v) if v.len() == dim => v[a],
                    Some(_) => {
                        return Err(Error::Validation(format!(
                            "disk center needs {dim} coordinates"
                        )))
                    }
                    None => 0.5 * grid.length(a),
                };
                if !(0.0..=grid.length(a)).contains(&c[a]) {
                    return Err(Error::Validation("disk center lies outside the box".into()));
                }
            }
            DensityField::from_fn(grid, |x| {
                let d = (0..dim)
                    .map(|a| periodic_offset(x[a], c[a], grid.length(a)).powi(2))
                    .sum::<f64>()
                    .sqrt();
                m * smooth_ramp(d - radius, *ramp)
            })
        }
        VacuumSpec::Strip {
            half_width,
            ramp,
            axis,
            center,
        } => {
            if *axis >= dim {
                return Err(Error::Validation(format!("strip axis {axis} out of range")));
            }
            if *half_width < 0.0 || *ramp < 0.0 {
                return Err(Error::Validation("strip width and ramp must be non-negative".into()));
            }
            let length = grid.length(*axis);
            let c = center.unwrap_or(0.5 * length);
            if !(0.0..=length).contains(&c) {
                return Err(Error::Validation("strip center lies outside the box".into()));
            }
            if *half_width == 0.0 {
                return Ok(DensityField::constant(grid, m));
            }
            DensityField::from_fn(grid, |x| {
                let d = periodic_offset(x[*axis], c, length);
                m * smooth_ramp(d - half_width, *ramp)
            })
        }
    }
}

/// Initial velocity presets; every preset is divergence-free.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityPreset {
    /// Shear flow `(A cos(k y), 0[, 0])` on the lowest wavenumber.
    SingleMode {
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Taylor–Green vortex `A(sin x cos y, −cos x sin y)` (times `cos z` in 3-D).
    TaylorGreen {
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Gaussian random solenoidal field on the shells `|n| ≤ max_shell`,
    /// scaled to RMS speed `amplitude`.
    RandomSeeded {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_shell")]
        max_shell: u32,
    },
}

fn one() -> f64 {
    1.0
}

fn default_shell() -> u32 {
    3
}

pub fn build_velocity(grid: &Grid, preset: &VelocityPreset) -> Result<SpectralField> {
    let dim = grid.dim();
    let base: Vec<f64> = (0..dim).map(|a| grid.physical_wavenumber(a, 1)).collect();
    match preset {
        VelocityPreset::SingleMode { amplitude } => {
            let a = *amplitude;
            let ky = base[1];
            Ok(SpectralField::from_fn(grid, dim, |x| [a * (ky * x[1]).cos(), 0.0, 0.0]))
        }
        VelocityPreset::TaylorGreen { amplitude } => {
            let a = *amplitude;
            let (kx, ky) = (base[0], base[1]);
            let kz = if dim == 3 { base[2] } else { 0.0 };
            Ok(SpectralField::from_fn(grid, dim, |x| {
                let z = (kz * x[2]).cos();
                [
                    a * (kx * x[0]).sin() * (ky * x[1]).cos() * z,
                    -a * (kx / ky) * (kx * x[0]).cos() * (ky * x[1]).sin() * z,
                    0.0,
                ]
            }))
        }
        VelocityPreset::RandomSeeded {
            amplitude,
            seed,
            max_shell,
        } => {
            let shell = *max_shell as i64;
            if shell < 1 || shell > grid.dealias_cutoff() {
                return Err(Error::Validation(format!(
                    "max_shell must be in 1..={}",
                    grid.dealias_cutoff()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut field = SpectralField::zeros(grid, dim);
            let range: Vec<i64> = (-shell..=shell).collect();
            let zs: Vec<i64> = if dim == 3 { range.clone() } else { vec![0] };
            for &w0 in &range {
                for &w1 in &range {
                    for &w2 in &zs {
                        let wave = [w0, w1, w2];
                        let n2 = w0 * w0 + w1 * w1 + w2 * w2;
                        let first = wave.iter().find(|&&w| w != 0);
                        if n2 == 0 || n2 > shell * shell || first.is_some_and(|&w| w < 0) {
                            continue;
                        }
                        let envelope = (-(n2 as f64) / (shell * shell) as f64).exp();
                        let ip = grid.flat_of_wave(wave);
                        let im = grid.flat_of_wave([-w0, -w1, -w2]);
                        for a in 0..dim {
                            let re: f64 = StandardNormal.sample(&mut rng);
                            let imag: f64 = StandardNormal.sample(&mut rng);
                            let z = num_complex::Complex64::new(re, imag) * envelope;
                            field.component_mut(a)[ip] = z;
                            field.component_mut(a)[im] = z.conj();
                        }
                    }
                }
            }
            let mut field = leray_project(&field)?;
            let rms = (field.l2_norm_sq() / grid.volume()).sqrt();
            if rms > 0.0 {
                field.scale(amplitude / rms);
            }
            Ok(field)
        }
    }
}

/// Raw initial data together with the regularization parameters.
#[derive(Clone, Debug)]
pub struct InitialData {
    pub rho0: DensityField,
    pub u0: SpectralField,
    /// Upper density bound M.
    pub density_bound: f64,
    /// Mollification index n.
    pub n: u32,
}

impl InitialData {
    pub fn new(rho0: DensityField, u0: SpectralField, density_bound: f64, n: u32) -> Result<Self> {
        if rho0.grid() != u0.grid() || !u0.is_vector() {
            return Err(Error::ContractViolation(
                "initial density and velocity must share the grid".into(),
            ));
        }
        if rho0.min() < 0.0 || rho0.max() > density_bound {
            return Err(Error::Validation(format!(
                "initial density must lie in [0, {density_bound}], found [{}, {}]",
                rho0.min(),
                rho0.max()
            )));
        }
        if n == 0 {
            return Err(Error::Domain("mollification index must be at least 1".into()));
        }
        let div = differentiate(&u0, DiffKind::Divergence)?.l2_norm_sq().sqrt();
        let scale = u0.sobolev_seminorm_sq(1).sqrt().max(1.0);
        if div > 1e-10 * scale {
            return Err(Error::Validation(format!(
                "initial velocity is not divergence-free (‖div u₀‖ = {div:e})"
            )));
        }
        Ok(Self {
            rho0,
            u0,
            density_bound,
            n,
        })
    }

    /// `M* = M + 1`.
    pub fn density_ceiling(&self) -> f64 {
        self.density_bound + 1.0
    }

    /// Mollified and lifted data `(ρ₀ₙ, u₀ₙ)`.
    pub fn regularized(&self) -> Result<(DensityField, SpectralField)> {
        Ok((
            lift_density(&self.rho0, self.n)?,
            mollify_vector(&self.u0, self.n)?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::periodic(2, n).unwrap()
    }

    #[test]
    fn kernel_sums_to_one() {
        let k = Mollifier::new(&grid(64), 4).unwrap();
        let s: f64 = k.weights().sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert!(k.weights().all(|w| w > 0.0));
    }

    #[test]
    fn narrow_kernel_is_rejected() {
        // spacing 2π/16 ≈ 0.39 > 1/4
        match Mollifier::new(&grid(16), 4) {
            Err(Error::KernelTooNarrow { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_is_preserved() {
        let g = grid(64);
        let rho = DensityField::constant(&g, 0.7);
        let m = mollify(&rho, 4).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn half_plane_indicator_stays_in_unit_interval() {
        let g = grid(64);
        let rho = DensityField::from_fn(&g, |x| if x[0] < PI { 0.0 } else { 1.0 }).unwrap();
        let m = mollify(&rho, 4).unwrap();
        assert!(m.min() >= 0.0 && m.max() <= 1.0);
        // monotone across the interface at x = π along y = 0
        let row: Vec<f64> = (20..44).map(|i| m.values()[g.flat([i, 0, 0])]).collect();
        assert!(row.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn lift_examples() {
        let g = grid(64);
        let vac = lift_density(&DensityField::constant(&g, 0.0), 4).unwrap();
        assert!(vac.values().iter().all(|&v| v == 0.25));
        let full = lift_density(&DensityField::constant(&g, 2.0), 8).unwrap();
        assert!(full.values().iter().all(|&v| v == 2.125));
        let neg = DensityField::constant(&g, -0.1);
        assert!(matches!(lift_density(&neg, 4), Err(Error::Validation(_))));
    }

    #[test]
    fn lifted_vacuum_disk_reaches_one_over_n() {
        let g = grid(128);
        let spec = VacuumSpec::Disk {
            radius: 1.0,
            ramp: 0.0,
            center: None,
        };
        let rho0 = make_vacuum_density(&g, &spec, 1.0).unwrap();
        let lifted = lift_density(&rho0, 8).unwrap();
        let center = g.flat([64, 64, 0]);
        assert_eq!(lifted.values()[center], 0.125);
        assert_eq!(lifted.min(), 0.125);
        assert_eq!(lifted.max(), 1.125);
    }

    #[test]
    fn vacuum_presets() {
        let g = grid(32);
        assert!(make_vacuum_density(&g, &VacuumSpec::None, 1.0)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 1.0));
        let zero = VacuumSpec::Disk {
            radius: 0.0,
            ramp: 0.3,
            center: None,
        };
        assert!(make_vacuum_density(&g, &zero, 2.0)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 2.0));
        let sharp = VacuumSpec::Disk {
            radius: PI / 2.0,
            ramp: 0.0,
            center: None,
        };
        let d = make_vacuum_density(&g, &sharp, 3.0).unwrap();
        assert_eq!(d.min(), 0.0);
        assert_eq!(d.max(), 3.0);
        assert!(d.values().iter().all(|&v| v == 0.0 || v == 3.0));
        let strip = VacuumSpec::Strip {
            half_width: 1.0,
            ramp: 0.5,
            axis: 1,
            center: None,
        };
        let s = make_vacuum_density(&g, &strip, 1.0).unwrap();
        assert_eq!(s.values()[g.flat([3, 16, 0])], 0.0);
        assert_eq!(s.values()[g.flat([3, 0, 0])], 1.0);
        let full = VacuumSpec::Disk {
            radius: 100.0,
            ramp: 0.0,
            center: None,
        };
        assert_eq!(make_vacuum_density(&g, &full, 1.0).unwrap().max(), 0.0);
    }

    #[test]
    fn velocity_presets_are_solenoidal() {
        let g = grid(32);
        for preset in [
            VelocityPreset::SingleMode { amplitude: 1.0 },
            VelocityPreset::TaylorGreen { amplitude: 2.0 },
            VelocityPreset::RandomSeeded {
                amplitude: 1.0,
                seed: 3,
                max_shell: 4,
            },
        ] {
            let u = build_velocity(&g, &preset).unwrap();
            let div = differentiate(&u, DiffKind::Divergence).unwrap();
            assert!(div.l2_norm_sq() < 1e-24, "{preset:?}");
        }
        let r1 = build_velocity(&g, &VelocityPreset::RandomSeeded { amplitude: 1.0, seed: 3, max_shell: 4 }).unwrap();
        let r2 = build_velocity(&g, &VelocityPreset::RandomSeeded { amplitude: 1.0, seed: 3, max_shell: 4 }).unwrap();
        assert_eq!(r1, r2);
        assert!((r1.l2_norm_sq() / g.volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let g = grid(32);
        let basis = StokesBasis::build(&g, 4, 1.0).unwrap();
        let psi1 = basis.mode_field(0);
        let c = project_velocity(&psi1, &basis).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-14);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-14));

        // a mode outside the span projects to zero
        let far = StokesBasis::build(&g, 40, 1.0).unwrap().mode_field(39);
        let c = project_velocity(&far, &basis).unwrap();
        assert!(c.iter().all(|v| v.abs() < 1e-14));

        // ψ1 + 0.5 ψ3 with j = 2 → (1, 0)
        let mut u = basis.mode_field(0);
        u.axpy(0.5, &basis.mode_field(2)).unwrap();
        let small = StokesBasis::build(&g, 2, 1.0).unwrap();
        let c = project_velocity(&u, &small).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-14 && c[1].abs() < 1e-14);
        let rec = small.synthesize(&c);
        assert!(rec.sobolev_seminorm_sq(1) <= u.sobolev_seminorm_sq(1));

        let other = Grid::periodic(2, 16).unwrap();
        assert!(project_velocity(&SpectralField::zeros(&other, 2), &basis).is_err());
    }
}
