//! Per-step norms and the K-functionals built from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::galerkin::{Galerkin, GalerkinState};
use crate::pressure::{pressure_gradient_norm, recover_pressure};
use crate::spectral::SpectralField;

/// Norms monitored at one instant. All squared norms are L² over the box.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EstimateRecord {
    pub time: f64,
    pub sqrt_rho_u_sq: f64,
    pub grad_u_sq: f64,
    pub sqrt_rho_ut_sq: f64,
    pub grad_ut_sq: f64,
    pub d2u_sq: f64,
    pub d2ut_sq: f64,
    pub grad_p_sq: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub energy_functional: f64,
    pub force_sq: f64,
}

impl EstimateRecord {
    /// Column order of the serialized ledger.
    pub const FIELDS: [&'static str; 12] = [
        "time",
        "sqrt_rho_u_sq",
        "grad_u_sq",
        "sqrt_rho_ut_sq",
        "grad_ut_sq",
        "d2u_sq",
        "d2ut_sq",
        "grad_p_sq",
        "rho_min",
        "rho_max",
        "energy_functional",
        "force_sq",
    ];

    pub fn values(&self) -> [f64; 12] {
        [
            self.time,
            self.sqrt_rho_u_sq,
            self.grad_u_sq,
            self.sqrt_rho_ut_sq,
            self.grad_ut_sq,
            self.d2u_sq,
            self.d2ut_sq,
            self.grad_p_sq,
            self.rho_min,
            self.rho_max,
            self.energy_functional,
            self.force_sq,
        ]
    }

    pub fn from_values(v: &[f64]) -> Result<Self> {
        if v.len() != Self::FIELDS.len() {
            return Err(Error::Validation(format!(
                "ledger row has {} fields, expected {}",
                v.len(),
                Self::FIELDS.len()
            )));
        }
        Ok(Self {
            time: v[0],
            sqrt_rho_u_sq: v[1],
            grad_u_sq: v[2],
            sqrt_rho_ut_sq: v[3],
            grad_ut_sq: v[4],
            d2u_sq: v[5],
            d2ut_sq: v[6],
            grad_p_sq: v[7],
            rho_min: v[8],
            rho_max: v[9],
            energy_functional: v[10],
            force_sq: v[11],
        })
    }
}

/// Builds the record for a state from its coefficient rate and pressure.
pub fn record(
    solver: &Galerkin,
    state: &GalerkinState,
    state_dot: &[f64],
    pressure: &SpectralField,
) -> EstimateRecord {
    let params = solver.params();
    let grid = solver.basis().grid();
    let sqrt_rho_u_sq = solver.weighted_kinetic(state, &state.coeffs);
    let grad_u_sq = solver.dirichlet_sq(&state.coeffs);
    EstimateRecord {
        time: state.time,
        sqrt_rho_u_sq,
        grad_u_sq,
        sqrt_rho_ut_sq: solver.weighted_kinetic(state, state_dot),
        grad_ut_sq: solver.dirichlet_sq(state_dot),
        d2u_sq: solver.hessian_sq(&state.coeffs),
        d2ut_sq: solver.hessian_sq(state_dot),
        grad_p_sq: pressure_gradient_norm(pressure).powi(2),
        rho_min: state.rho.min(),
        rho_max: state.rho.max(),
        energy_functional: 0.5 * sqrt_rho_u_sq + 0.5 * params.kappa * grad_u_sq + state.dissipation,
        force_sq: params.forcing.l2_norm_sq(grid, state.time),
    }
}

/// Solves for the rate and pressure at the state and records them.
pub fn observe(solver: &Galerkin, state: &GalerkinState) -> Result<EstimateRecord> {
    let rate = solver.coefficient_rate(state)?;
    let p = recover_pressure(solver, state, &rate)?;
    Ok(record(solver, state, &rate, &p))
}

/// Time-ordered estimate records of one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EstimateLedger {
    records: Vec<EstimateRecord>,
}

impl EstimateLedger {
    pub fn push(&mut self, rec: EstimateRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if !(rec.time > last.time) {
                return Err(Error::ContractViolation(format!(
                    "ledger times must increase: {} after {}",
                    rec.time, last.time
                )));
            }
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn records(&self) -> &[EstimateRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn integral(&self, f: impl Fn(&EstimateRecord) -> f64) -> f64 {
        self.records
            .windows(2)
            .map(|w| 0.5 * (w[1].time - w[0].time) * (f(&w[0]) + f(&w[1])))
            .sum()
    }

    fn sup(&self, f: impl Fn(&EstimateRecord) -> f64) -> f64 {
        self.records.iter().map(f).fold(0.0, f64::max)
    }
}

/// The named K-functionals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KName {
    K1,
    K2,
    K2Prime,
    K3,
    K4,
    K4Prime,
    K5,
    K6,
}

impl KName {
    pub const ALL: [KName; 8] = [
        KName::K1,
        KName::K2,
        KName::K2Prime,
        KName::K3,
        KName::K4,
        KName::K4Prime,
        KName::K5,
        KName::K6,
    ];

    /// The functionals checked by default in sweeps.
    pub const SWEPT: [KName; 4] = [KName::K1, KName::K2, KName::K3, KName::K4];

    pub fn label(self) -> &'static str {
        match self {
            KName::K1 => "K1",
            KName::K2 => "K2",
            KName::K2Prime => "K2'",
            KName::K3 => "K3",
            KName::K4 => "K4",
            KName::K4Prime => "K4'",
            KName::K5 => "K5",
            KName::K6 => "K6",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label() == s || format!("{k:?}") == s)
    }
}

impl fmt::Display for KName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Aggregates of a finished ledger.
#[derive(Clone, Debug, PartialEq)]
pub struct KReport {
    pub mu: f64,
    pub kappa: f64,
    pub horizon: f64,
    pub k: BTreeMap<KName, f64>,
    /// `|E(T) − E(0)|` of the energy functional.
    pub energy_residual: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// `∫‖f‖²` and `sup ‖f‖²`: the two forcing hypotheses.
    pub force_l2_sq: f64,
    pub force_sup_sq: f64,
}

impl KReport {
    pub fn get(&self, name: KName) -> f64 {
        self.k[&name]
    }
}

/// Sup and trapezoid aggregates over the ledger.
pub fn finalize(ledger: &EstimateLedger, mu: f64, kappa: f64) -> Result<KReport> {
    let (first, last) = match (ledger.records.first(), ledger.records.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Validation("cannot finalize an empty ledger".into())),
    };
    let k = BTreeMap::from([
        (
            KName::K1,
            ledger.sup(|r| r.sqrt_rho_u_sq + kappa * r.grad_u_sq) + mu * ledger.integral(|r| r.grad_u_sq),
        ),
        (KName::K2, ledger.integral(|r| r.sqrt_rho_ut_sq + kappa * r.grad_ut_sq)),
        (KName::K2Prime, ledger.sup(|r| r.sqrt_rho_ut_sq + kappa * r.grad_ut_sq)),
        (KName::K3, kappa * ledger.sup(|r| r.d2u_sq) + mu * ledger.integral(|r| r.d2u_sq)),
        (KName::K4, kappa * kappa * ledger.integral(|r| r.d2ut_sq)),
        (KName::K4Prime, kappa * kappa * ledger.sup(|r| r.d2ut_sq)),
        (KName::K5, ledger.integral(|r| r.grad_p_sq)),
        (KName::K6, ledger.sup(|r| r.grad_p_sq)),
    ]);
    Ok(KReport {
        mu,
        kappa,
        horizon: last.time - first.time,
        k,
        energy_residual: (last.energy_functional - first.energy_functional).abs(),
        rho_min: ledger.records.iter().map(|r| r.rho_min).fold(f64::INFINITY, f64::min),
        rho_max: ledger.records.iter().map(|r| r.rho_max).fold(f64::NEG_INFINITY, f64::max),
        force_l2_sq: ledger.integral(|r| r.force_sq),
        force_sup_sq: ledger.sup(|r| r.force_sq),
    })
}

/// Outcome for one K-functional across a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct KCheck {
    pub name: KName,
    pub max: f64,
    /// Largest relative change between the two largest j values (over all n).
    pub spread_j: f64,
    /// Largest relative change between the two largest n values (over all j).
    pub spread_n: f64,
    /// The largest index value exceeds every other by more than the tolerance.
    pub growth: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub tolerance: f64,
    pub checks: Vec<KCheck>,
}

impl SweepReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<KName> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name).collect()
    }
}

fn relative_change(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Spread and growth along one index with the other held fixed.
fn along<K: Ord + Copy>(series: &BTreeMap<K, f64>, tol: f64) -> (f64, bool) {
    let vals: Vec<f64> = series.values().copied().collect();
    if vals.len() < 2 {
        return (0.0, false);
    }
    let top = vals[vals.len() - 1];
    let spread = relative_change(top, vals[vals.len() - 2]);
    let others = vals[..vals.len() - 1].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (spread, top > others * (1.0 + tol) && top - others > f64::EPSILON * top.abs())
}

/// Checks that the chosen K-functionals stay bounded as j and n grow.
pub fn sweep_boundedness(
    cells: &BTreeMap<(usize, u32), KReport>,
    tolerance: f64,
    names: &[KName],
) -> Result<SweepReport> {
    let first = cells
        .values()
        .next()
        .ok_or_else(|| Error::Validation("sweep has no cells".into()))?;
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    for ((j, n), r) in cells {
        if !(same(r.mu, first.mu) && same(r.kappa, first.kappa) && same(r.horizon, first.horizon)) {
            return Err(Error::Validation(format!(
                "cell (j={j}, n={n}) has different physical parameters"
            )));
        }
    }
    let js: BTreeSet<usize> = cells.keys().map(|k| k.0).collect();
    let ns: BTreeSet<u32> = cells.keys().map(|k| k.1).collect();
    let checks = names
        .iter()
        .map(|&name| {
            let mut spread_j: f64 = 0.0;
            let mut spread_n: f64 = 0.0;
            let mut growth = false;
            for &n in &ns {
                let s: BTreeMap<usize, f64> = cells
                    .iter()
                    .filter(|(k, _)| k.1 == n)
                    .map(|(k, r)| (k.0, r.get(name)))
                    .collect();
                let (sp, gr) = along(&s, tolerance);
                spread_j = spread_j.max(sp);
                growth |= gr;
            }
            for &j in &js {
                let s: BTreeMap<u32, f64> = cells
                    .iter()
                    .filter(|(k, _)| k.0 == j)
                    .map(|(k, r)| (k.1, r.get(name)))
                    .collect();
                let (sp, gr) = along(&s, tolerance);
                spread_n = spread_n.max(sp);
                growth |= gr;
            }
            let max = cells.values().map(|r| r.get(name)).fold(f64::NEG_INFINITY, f64::max);
            KCheck {
                name,
                max,
                spread_j,
                spread_n,
                growth,
                pass: spread_j < tolerance && spread_n < tolerance && !growth,
            }
        })
        .collect();
    Ok(SweepReport { tolerance, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: f64, u: f64) -> EstimateRecord {
        EstimateRecord {
            time: t,
            sqrt_rho_u_sq: u,
            grad_u_sq: u,
            d2u_sq: u,
            energy_functional: 1.0,
            rho_min: 1.0,
            rho_max: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn ledger_rejects_time_reversal() {
        let mut l = EstimateLedger::default();
        l.push(rec(0.0, 1.0)).unwrap();
        assert!(l.push(rec(0.0, 1.0)).is_err());
    }

    #[test]
    fn finalize_integrates_by_trapezoid() {
        let mut l = EstimateLedger::default();
        l.push(rec(0.0, 2.0)).unwrap();
        l.push(rec(1.0, 4.0)).unwrap();
        let r = finalize(&l, 0.5, 1.0).unwrap();
        // sup(u + κ∇u) + μ∫∇u = 8 + 0.5·3
        assert_eq!(r.get(KName::K1), 9.5);
        assert_eq!(r.get(KName::K3), 4.0 + 1.5);
        assert_eq!(r.get(KName::K2), 0.0);
        assert!(finalize(&EstimateLedger::default(), 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_run_has_zero_k() {
        let mut l = EstimateLedger::default();
        l.push(rec(0.0, 0.0)).unwrap();
        l.push(rec(0.5, 0.0)).unwrap();
        let r = finalize(&l, 0.1, 1.0).unwrap();
        assert!(r.k.values().all(|&v| v == 0.0));
    }

    fn report(k1: f64) -> KReport {
        KReport {
            mu: 0.1,
            kappa: 1.0,
            horizon: 1.0,
            k: KName::ALL.iter().map(|&k| (k, if k == KName::K1 { k1 } else { 1.0 })).collect(),
            energy_residual: 0.0,
            rho_min: 1.0,
            rho_max: 1.0,
            force_l2_sq: 0.0,
            force_sup_sq: 0.0,
        }
    }

    #[test]
    fn sweep_identical_and_doubled() {
        let mut cells = BTreeMap::new();
        for j in [8, 16, 32] {
            for n in [4, 8] {
                cells.insert((j, n), report(3.0));
            }
        }
        let ok = sweep_boundedness(&cells, 0.1, &KName::SWEPT).unwrap();
        assert!(ok.pass());
        assert!(ok.checks.iter().all(|c| c.spread_j == 0.0 && c.spread_n == 0.0));

        for n in [4, 8] {
            cells.insert((32, n), report(6.0));
        }
        let bad = sweep_boundedness(&cells, 0.1, &KName::SWEPT).unwrap();
        assert_eq!(bad.failures(), vec![KName::K1]);
    }

    #[test]
    fn sweep_rejects_mixed_parameters() {
        let mut cells = BTreeMap::new();
        cells.insert((8, 4), report(1.0));
        let mut other = report(1.0);
        other.mu = 0.2;
        cells.insert((16, 4), other);
        assert!(sweep_boundedness(&cells, 0.1, &KName::SWEPT).is_err());
    }
}
