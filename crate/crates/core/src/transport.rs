//! Density transport `ρ_t + u·∇ρ = 0` by a semi-Lagrangian step, and the
//! norm diagnostics that accompany it.
//!
//! Characteristics are traced backward with the midpoint rule in grid-index
//! coordinates; the density is read back by multilinear interpolation and
//! clamped to the range of the interpolation stencil, so every new value is a
//! convex combination of old ones and the discrete maximum principle is exact.

use rayon::prelude::*;

use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::spectral::{Grid, SpectralField};

pub const DEFAULT_CFL_LIMIT: f64 = 0.9;

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Multilinear interpolation at a point given in (fractional) grid-index
/// coordinates, periodic. Returns the value and the stencil range.
pub(crate) fn interpolate(grid: &Grid, values: &[f64], at: [f64; 3]) -> (f64, f64, f64) {
    let dim = grid.dim();
    let mut base = [0i64; 3];
    let mut frac = [0.0; 3];
    for a in 0..dim {
        let f = at[a].floor();
        base[a] = f as i64;
        frac[a] = at[a] - f;
    }
    let corner = |bits: usize| {
        let mut c = base;
        for (a, ca) in c.iter_mut().enumerate().take(dim) {
            *ca += ((bits >> a) & 1) as i64;
        }
        values[grid.flat_wrapped(c)]
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    if dim == 2 {
        let v = [corner(0), corner(1), corner(2), corner(3)];
        for x in v {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let y0 = lerp(v[0], v[1], frac[0]);
        let y1 = lerp(v[2], v[3], frac[0]);
        (lerp(y0, y1, frac[1]).clamp(lo, hi), lo, hi)
    } else {
        let v: Vec<f64> = (0..8).map(corner).collect();
        for &x in &v {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let x00 = lerp(v[0], v[1], frac[0]);
        let x10 = lerp(v[2], v[3], frac[0]);
        let x01 = lerp(v[4], v[5], frac[0]);
        let x11 = lerp(v[6], v[7], frac[0]);
        let y0 = lerp(x00, x10, frac[1]);
        let y1 = lerp(x01, x11, frac[1]);
        (lerp(y0, y1, frac[2]).clamp(lo, hi), lo, hi)
    }
}

/// Largest per-axis displacement `|u_a| dt / h_a` over the grid.
pub fn cfl_number(grid: &Grid, velocity: &[Vec<f64>], dt: f64) -> f64 {
    (0..grid.dim())
        .map(|a| {
            velocity[a].iter().fold(0.0f64, |m, v| m.max(v.abs())) * dt / grid.spacing(a)
        })
        .fold(0.0, f64::max)
}

/// One semi-Lagrangian step with a spectral velocity.
pub fn advance_density(
    rho: &DensityField,
    u: &SpectralField,
    dt: f64,
    cfl_limit: f64,
) -> Result<DensityField> {
    if !u.is_vector() || u.grid() != rho.grid() {
        return Err(Error::ContractViolation(
            "transport velocity must be a vector field on the density grid".into(),
        ));
    }
    advance_density_nodal(rho, &u.to_nodal(), dt, cfl_limit)
}

/// One semi-Lagrangian step with a nodal (frozen-in-time) velocity.
pub fn advance_density_nodal(
    rho: &DensityField,
    velocity: &[Vec<f64>],
    dt: f64,
    cfl_limit: f64,
) -> Result<DensityField> {
    let grid = rho.grid();
    let dim = grid.dim();
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    if velocity.len() != dim || velocity.iter().any(|c| c.len() != grid.len()) {
        return Err(Error::ContractViolation("velocity does not match the grid".into()));
    }
    let ratio = cfl_number(grid, velocity, dt);
    if ratio > cfl_limit {
        return Err(Error::Cfl {
            ratio,
            limit: cfl_limit,
        });
    }
    // displacement per step in index units
    let scale: Vec<f64> = (0..dim).map(|a| dt / grid.spacing(a)).collect();
    let shift: Vec<Vec<f64>> = (0..dim)
        .map(|a| velocity[a].iter().map(|v| v * scale[a]).collect())
        .collect();
    let values = rho.values();
    let out: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|flat| {
            let c = grid.coords(flat);
            let mut mid = [0.0; 3];
            for a in 0..dim {
                mid[a] = c[a] as f64 - 0.5 * shift[a][flat];
            }
            let mut foot = [0.0; 3];
            for a in 0..dim {
                let (s, _, _) = interpolate(grid, &shift[a], mid);
                foot[a] = c[a] as f64 - s;
            }
            interpolate(grid, values, foot).0
        })
        .collect();
    DensityField::new(grid, out)
}

/// Exponent of an Lq norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormOrder {
    Finite(f64),
    Infinity,
}

/// `(∫|ρ|^q dx)^{1/q}` by nodal quadrature; `max|ρ|` for q = ∞.
pub fn lq_norm(rho: &DensityField, q: NormOrder) -> Result<f64> {
    match q {
        NormOrder::Infinity => Ok(rho.values().iter().fold(0.0, |m, v| m.max(v.abs()))),
        NormOrder::Finite(q) if q >= 1.0 => {
            let w = rho.grid().node_weight();
            let s: f64 = rho.values().iter().map(|v| v.abs().powf(q)).sum();
            Ok((w * s).powf(1.0 / q))
        }
        NormOrder::Finite(q) => Err(Error::Domain(format!("Lq norm needs q >= 1, got {q}"))),
    }
}

/// Exact nodal minimum and maximum.
pub fn density_bounds(rho: &DensityField) -> (f64, f64) {
    (rho.min(), rho.max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::periodic(2, n).unwrap()
    }

    fn bumpy(g: &Grid) -> DensityField {
        DensityField::from_fn(g, |x| 1.0 + 0.5 * x[0].sin() * (2.0 * x[1]).cos()).unwrap()
    }

    #[test]
    fn zero_velocity_is_identity() {
        let g = grid(32);
        let rho = bumpy(&g);
        let u = vec![vec![0.0; g.len()]; 2];
        let out = advance_density_nodal(&rho, &u, 0.1, 0.9).unwrap();
        assert_eq!(out, rho);
    }

    #[test]
    fn one_cell_translation_is_exact_shift() {
        let g = grid(32);
        let rho = bumpy(&g);
        let h = g.spacing(0);
        let u = vec![vec![1.0; g.len()], vec![0.0; g.len()]];
        let out = advance_density_nodal(&rho, &u, h, 1.0).unwrap();
        for flat in 0..g.len() {
            let c = g.coords(flat);
            let src = g.flat_wrapped([c[0] as i64 - 1, c[1] as i64, 0]);
            assert!((out.values()[flat] - rho.values()[src]).abs() < 1e-12);
        }
        // and back again
        let back = vec![vec![-1.0; g.len()], vec![0.0; g.len()]];
        let restored = advance_density_nodal(&out, &back, h, 1.0).unwrap();
        for (a, b) in restored.values().iter().zip(rho.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cfl_violation_reports_ratio() {
        let g = grid(32);
        let rho = bumpy(&g);
        let u = vec![vec![2.0; g.len()], vec![0.0; g.len()]];
        match advance_density_nodal(&rho, &u, g.spacing(0), 0.9) {
            Err(Error::Cfl { ratio, limit }) => {
                assert!((ratio - 2.0).abs() < 1e-12);
                assert_eq!(limit, 0.9);
            }
            other => panic!("expected CFL error, got {other:?}"),
        }
    }

    #[test]
    fn lq_norm_examples() {
        let g = grid(64);
        let c = DensityField::constant(&g, 3.0);
        assert!((lq_norm(&c, NormOrder::Finite(2.0)).unwrap() - 3.0 * 2.0 * PI).abs() < 1e-12);
        assert_eq!(lq_norm(&c, NormOrder::Infinity).unwrap(), 3.0);
        let r = DensityField::from_fn(&g, |x| 1.0 + x[0].cos()).unwrap();
        let expected = 2.0 * PI * (1.5f64).sqrt();
        assert!((lq_norm(&r, NormOrder::Finite(2.0)).unwrap() - expected).abs() < 1e-12);
        assert!(matches!(lq_norm(&c, NormOrder::Finite(0.5)), Err(Error::Domain(_))));
    }

    #[test]
    fn bounds_of_constant() {
        let g = grid(16);
        assert_eq!(density_bounds(&DensityField::constant(&g, 0.4)), (0.4, 0.4));
    }

    #[test]
    fn three_d_shift() {
        let g = Grid::periodic(3, 8).unwrap();
        let rho = DensityField::from_fn(&g, |x| x[2].sin() + 2.0).unwrap();
        let h = g.spacing(2);
        let u = vec![vec![0.0; g.len()], vec![0.0; g.len()], vec![1.0; g.len()]];
        let out = advance_density_nodal(&rho, &u, h, 1.0).unwrap();
        let c = g.flat([1, 2, 3]);
        assert!((out.values()[c] - rho.values()[g.flat([1, 2, 2])]).abs() < 1e-12);
    }
}
