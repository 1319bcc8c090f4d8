//! External body forces `f(t, x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::Grid;
use crate::transport::interpolate;

/// Forcing as written in a run configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    #[default]
    None,
    /// Steady Kolmogorov forcing `(A sin(m k₁ y), 0)`; bounded in time.
    Kolmogorov {
        amplitude: f64,
        #[serde(default = "first_mode")]
        mode: u32,
    },
    /// Kolmogorov profile times `((t − start)/(end − start))^(-1/4)` on `(start, end]`:
    /// square integrable in time but unbounded as `t → start`.
    Pulse {
        amplitude: f64,
        #[serde(default = "first_mode")]
        mode: u32,
        start: f64,
        end: f64,
    },
    /// Steady nodal field read from a snapshot file.
    Tabulated { path: String },
}

fn first_mode() -> u32 {
    1
}

impl ForcingSpec {
    /// Whether the forcing is bounded in time with values in L².
    pub fn is_bounded_in_time(&self) -> bool {
        !matches!(self, ForcingSpec::Pulse { .. })
    }
}

/// Forcing resolved against a grid, ready to evaluate.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Forcing {
    #[default]
    None,
    Shear {
        amplitude: f64,
        wavenumber: f64,
        window: Option<(f64, f64)>,
    },
    Tabulated {
        grid: Grid,
        values: Vec<Vec<f64>>,
    },
}

impl Forcing {
    /// Resolve analytic presets. Tabulated forcing is loaded by the caller
    /// and passed to [`Forcing::tabulated`].
    pub fn from_spec(spec: &ForcingSpec, grid: &Grid) -> Result<Self> {
        let check = |amplitude: f64, mode: u32| {
            if !amplitude.is_finite() {
                return Err(Error::Validation("forcing amplitude must be finite".into()));
            }
            if mode == 0 || mode as i64 > grid.dealias_cutoff() {
                return Err(Error::Validation(format!(
                    "forcing mode must be in 1..={}",
                    grid.dealias_cutoff()
                )));
            }
            Ok(grid.physical_wavenumber(1, mode as i64))
        };
        match spec {
            ForcingSpec::None => Ok(Forcing::None),
            ForcingSpec::Kolmogorov { amplitude, mode } => Ok(Forcing::Shear {
                amplitude: *amplitude,
                wavenumber: check(*amplitude, *mode)?,
                window: None,
            }),
            ForcingSpec::Pulse {
                amplitude,
                mode,
                start,
                end,
            } => {
                if !(end > start) {
                    return Err(Error::Validation("pulse window must satisfy start < end".into()));
                }
                Ok(Forcing::Shear {
                    amplitude: *amplitude,
                    wavenumber: check(*amplitude, *mode)?,
                    window: Some((*start, *end)),
                })
            }
            ForcingSpec::Tabulated { .. } => Err(Error::ContractViolation(
                "tabulated forcing must be loaded before resolution".into(),
            )),
        }
    }

    pub fn tabulated(grid: &Grid, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != grid.dim() || values.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::Validation("tabulated forcing does not match the grid".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("tabulated forcing has non-finite values".into()));
        }
        Ok(Forcing::Tabulated {
            grid: grid.clone(),
            values,
        })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Forcing::None)
    }

    fn time_factor(window: Option<(f64, f64)>, t: f64) -> f64 {
        match window {
            None => 1.0,
            Some((t0, t1)) if t > t0 && t <= t1 => ((t - t0) / (t1 - t0)).powf(-0.25),
            Some(_) => 0.0,
        }
    }

    /// Force at a point.
    pub fn at(&self, x: &[f64; 3], t: f64) -> [f64; 3] {
        match self {
            Forcing::None => [0.0; 3],
            Forcing::Shear {
                amplitude,
                wavenumber,
                window,
            } => {
                let s = amplitude * Self::time_factor(*window, t);
                [s * (wavenumber * x[1]).sin(), 0.0, 0.0]
            }
            Forcing::Tabulated { grid, values } => {
                let mut at = [0.0; 3];
                for a in 0..grid.dim() {
                    at[a] = x[a] / grid.spacing(a);
                }
                let mut f = [0.0; 3];
                for (a, comp) in values.iter().enumerate() {
                    f[a] = interpolate(grid, comp, at).0;
                }
                f
            }
        }
    }

    /// Nodal force components, or `None` when the force vanishes identically.
    pub fn nodal(&self, grid: &Grid, t: f64) -> Option<Vec<Vec<f64>>> {
        match self {
            Forcing::None => None,
            Forcing::Tabulated { grid: g, values } if g == grid => Some(values.clone()),
            _ => {
                let mut out = vec![vec![0.0; grid.len()]; grid.dim()];
                for flat in 0..grid.len() {
                    let f = self.at(&grid.position(flat), t);
                    for (a, comp) in out.iter_mut().enumerate() {
                        comp[flat] = f[a];
                    }
                }
                Some(out)
            }
        }
    }

    /// `‖f(t)‖²` in L² by nodal quadrature.
    pub fn l2_norm_sq(&self, grid: &Grid, t: f64) -> f64 {
        match self.nodal(grid, t) {
            None => 0.0,
            Some(v) => grid.node_weight() * v.iter().flatten().map(|x| x * x).sum::<f64>(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn kolmogorov_norm() {
        let g = Grid::periodic(2, 32).unwrap();
        let f = Forcing::from_spec(&ForcingSpec::Kolmogorov { amplitude: 2.0, mode: 1 }, &g).unwrap();
        // ∫ 4 sin²y = 4·2π²
        assert!((f.l2_norm_sq(&g, 0.3) - 8.0 * PI * PI).abs() < 1e-10);
    }

    #[test]
    fn pulse_is_windowed_and_singular() {
        let g = Grid::periodic(2, 16).unwrap();
        let spec = ForcingSpec::Pulse {
            amplitude: 1.0,
            mode: 1,
            start: 0.0,
            end: 1.0,
        };
        assert!(!spec.is_bounded_in_time());
        let f = Forcing::from_spec(&spec, &g).unwrap();
        let x = [0.0, PI / 2.0, 0.0];
        assert_eq!(f.at(&x, 0.0), [0.0; 3]);
        assert_eq!(f.at(&x, 1.5), [0.0; 3]);
        assert!((f.at(&x, 1.0)[0] - 1.0).abs() < 1e-15);
        assert!(f.at(&x, 1e-8)[0] > 99.0);
    }

    #[test]
    fn tabulated_matches_nodes() {
        let g = Grid::periodic(2, 8).unwrap();
        let vals: Vec<Vec<f64>> = (0..2).map(|a| (0..g.len()).map(|i| (i + a) as f64).collect()).collect();
        let f = Forcing::tabulated(&g, vals.clone()).unwrap();
        let x = g.position(13);
        assert!((f.at(&x, 0.0)[1] - vals[1][13]).abs() < 1e-12);
        assert_eq!(f.nodal(&g, 5.0).unwrap(), vals);
    }

    #[test]
    fn rejects_bad_mode() {
        let g = Grid::periodic(2, 8).unwrap();
        assert!(Forcing::from_spec(&ForcingSpec::Kolmogorov { amplitude: 1.0, mode: 9 }, &g).is_err());
    }
}
