//! Experiment orchestration: single runs, (j, n) sweeps, stability pairs and
//! plot export. Every output file starts with the hash of the effective
//! configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::SimConfig;
use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::estimates::{finalize, sweep_boundedness, EstimateRecord, KName, KReport, SweepReport};
use crate::forcing::{Forcing, ForcingSpec};
use crate::galerkin::{FluidParams, Galerkin, GalerkinState};
use crate::initial::{build_velocity, make_vacuum_density, InitialData};
use crate::output::{read_snapshot, read_table, table_to_csv, write_snapshot, TableWriter};
use crate::spectral::StokesBasis;
use crate::stability::{calibrate_coefficient, gronwall_from_series, pair_series, scale_invariance_gap, GronwallSeries};

/// Safety factor applied to the calibrated Grönwall coefficient.
pub const CALIBRATION_MARGIN: f64 = 2.0;
const CALIBRATION_FLOOR: f64 = 1e-3;

/// Solver and initial state built from a configuration.
pub struct Prepared {
    pub solver: Galerkin,
    pub initial: GalerkinState,
}

/// Builds the solver with `modes` basis functions and mollification index
/// `n`; `base` resolves relative file paths.
pub fn prepare(cfg: &SimConfig, base: &Path, modes: usize, n: u32) -> Result<Prepared> {
    let grid = cfg.build_grid()?;
    let basis = StokesBasis::build(&grid, modes, cfg.fluid.mu)?;
    let forcing = match &cfg.forcing {
        ForcingSpec::Tabulated { path } => {
            let snap = read_snapshot(&base.join(path))?;
            if snap.grid != grid || snap.fields.len() < grid.dim() {
                return Err(Error::Validation(format!(
                    "tabulated forcing {path} does not match the run grid"
                )));
            }
            Forcing::tabulated(&grid, snap.fields[..grid.dim()].to_vec())?
        }
        spec => Forcing::from_spec(spec, &grid)?,
    };
    let params = FluidParams::new(cfg.fluid.mu, cfg.fluid.kappa, forcing)?;
    let rho0 = make_vacuum_density(&grid, &cfg.initial.density, cfg.initial.density_bound)?;
    let u0 = build_velocity(&grid, &cfg.initial.velocity)?;
    let data = InitialData::new(rho0, u0, cfg.initial.density_bound, n)?;
    let (rho, u) = if cfg.initial.regularize {
        data.regularized()?
    } else {
        (data.rho0, data.u0)
    };
    let solver = Galerkin::new(basis, params, cfg.galerkin.transport).with_cfl_limit(cfg.tolerances.cfl);
    let initial = solver.initial_state(rho, &u)?;
    Ok(Prepared { solver, initial })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub modes: usize,
    pub n: u32,
    pub report: KReport,
    pub records: Vec<EstimateRecord>,
    pub initial: GalerkinState,
    pub final_state: GalerkinState,
    pub checks: Vec<Check>,
}

impl RunReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// `c₀(T)/c₀(0)`, the decay of the leading coefficient.
    pub fn amplitude_ratio(&self) -> f64 {
        self.final_state.coeffs[0] / self.initial.coeffs[0]
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn maximum_principle(initial: &DensityField, records: &[EstimateRecord]) -> Check {
    let (lo, hi) = (initial.min(), initial.max());
    let worst_lo = records.iter().map(|r| r.rho_min).fold(f64::INFINITY, f64::min);
    let worst_hi = records.iter().map(|r| r.rho_max).fold(f64::NEG_INFINITY, f64::max);
    Check {
        name: "maximum_principle".into(),
        pass: worst_lo >= lo && worst_hi <= hi,
        detail: format!("initial [{lo:.17e}, {hi:.17e}], observed [{worst_lo:.17e}, {worst_hi:.17e}]"),
    }
}

/// One run with the given basis size and mollification index, writing
/// `ledger.txt`, snapshots and `summary.txt` into `out`.
pub fn run_cell(cfg: &SimConfig, base: &Path, modes: usize, n: u32, out: &Path) -> Result<RunReport> {
    fs::create_dir_all(out)?;
    let hash = cfg.hash();
    let Prepared { solver, initial } = prepare(cfg, base, modes, n)?;
    let mut ledger = TableWriter::create(&out.join("ledger.txt"), "ledger", &hash, &EstimateRecord::FIELDS)?;
    let stride = cfg.output.snapshot_stride;
    let snap_dir = out.join("snapshots");
    if stride > 0 {
        fs::create_dir_all(&snap_dir)?;
    }
    let mut index = 0usize;
    let output = solver.run(initial.clone(), cfg.time.horizon, cfg.time.dt, usize::MAX, |state, rec| {
        ledger.row(&rec.values())?;
        if stride > 0 && index % stride == 0 {
            let u = solver.reconstruct_velocity(state).to_nodal();
            let mut fields: Vec<&[f64]> = u.iter().map(Vec::as_slice).collect();
            fields.push(state.rho.values());
            write_snapshot(
                &snap_dir.join(format!("snap_{index:06}.bin")),
                &hash,
                solver.basis().grid(),
                state.time,
                &fields,
            )?;
        }
        index += 1;
        Ok(())
    })?;
    let report = finalize(&output.ledger, cfg.fluid.mu, cfg.fluid.kappa)?;
    let records = output.ledger.records().to_vec();
    let final_state = output.trajectory.last().cloned().expect("trajectory has the initial state");
    let checks = vec![maximum_principle(&initial.rho, &records)];
    let run = RunReport {
        modes,
        n,
        report,
        records,
        initial,
        final_state,
        checks,
    };
    write_text(&out.join("summary.txt"), &summary_text(&hash, &run))?;
    Ok(run)
}

fn summary_text(hash: &str, run: &RunReport) -> String {
    let mut s = String::new();
    let r = &run.report;
    let _ = writeln!(s, "# voigt summary config={hash}");
    let _ = writeln!(s, "modes = {}", run.modes);
    let _ = writeln!(s, "n = {}", run.n);
    let _ = writeln!(s, "final_time = {:.17e}", run.final_state.time);
    let _ = writeln!(s, "initial_amplitude = {:.17e}", run.initial.coeffs[0]);
    let _ = writeln!(s, "final_amplitude = {:.17e}", run.final_state.coeffs[0]);
    let _ = writeln!(s, "amplitude_ratio = {:.17e}", run.amplitude_ratio());
    let _ = writeln!(s, "energy_residual = {:.17e}", r.energy_residual);
    let _ = writeln!(s, "rho_min = {:.17e}", r.rho_min);
    let _ = writeln!(s, "rho_max = {:.17e}", r.rho_max);
    let _ = writeln!(s, "force_l2_sq = {:.17e}", r.force_l2_sq);
    let _ = writeln!(s, "force_sup_sq = {:.17e}", r.force_sup_sq);
    for k in KName::ALL {
        let _ = writeln!(s, "{} = {:.17e}", k.label(), r.get(k));
    }
    for c in &run.checks {
        let verdict = if c.pass { "pass" } else { "fail" };
        let _ = writeln!(s, "check {} = {verdict} ({})", c.name, c.detail);
    }
    s
}

pub fn run_experiment(cfg: &SimConfig, base: &Path, out: &Path) -> Result<RunReport> {
    run_cell(cfg, base, cfg.galerkin.modes, cfg.initial.n, out)
}

pub struct SweepOutcome {
    pub cells: BTreeMap<(usize, u32), std::result::Result<RunReport, String>>,
    pub report: Option<SweepReport>,
}

impl SweepOutcome {
    pub fn pass(&self) -> bool {
        self.cells.values().all(|c| c.as_ref().is_ok_and(RunReport::pass))
            && self.report.as_ref().is_some_and(SweepReport::pass)
    }
}

/// Runs every (j, n) cell, in parallel, and checks that the K-functionals
/// stay bounded. Failed cells are reported and do not stop the sweep.
pub fn run_sweep(cfg: &SimConfig, base: &Path, out: &Path) -> Result<SweepOutcome> {
    fs::create_dir_all(out)?;
    let js = if cfg.sweep.modes.is_empty() { vec![cfg.galerkin.modes] } else { cfg.sweep.modes.clone() };
    let ns = if cfg.sweep.mollification.is_empty() {
        vec![cfg.initial.n]
    } else {
        cfg.sweep.mollification.clone()
    };
    let grid: Vec<(usize, u32)> = js.iter().flat_map(|&j| ns.iter().map(move |&n| (j, n))).collect();
    let cells: BTreeMap<(usize, u32), std::result::Result<RunReport, String>> = grid
        .par_iter()
        .map(|&(j, n)| {
            let dir = out.join(format!("cell_j{j}_n{n}"));
            ((j, n), run_cell(cfg, base, j, n, &dir).map_err(|e| e.to_string()))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    let ok: BTreeMap<(usize, u32), KReport> = cells
        .iter()
        .filter_map(|(k, v)| v.as_ref().ok().map(|r| (*k, r.report.clone())))
        .collect();
    let report = if ok.is_empty() {
        None
    } else {
        Some(sweep_boundedness(&ok, cfg.tolerances.sweep_spread, &KName::SWEPT)?)
    };
    let outcome = SweepOutcome { cells, report };
    write_text(&out.join("sweep.txt"), &sweep_text(&cfg.hash(), &outcome))?;
    Ok(outcome)
}

fn sweep_text(hash: &str, o: &SweepOutcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# voigt sweep config={hash}");
    for ((j, n), cell) in &o.cells {
        match cell {
            Ok(r) => {
                let ks: Vec<String> = KName::ALL
                    .iter()
                    .map(|k| format!("{}={:.17e}", k.label(), r.report.get(*k)))
                    .collect();
                let status = if r.pass() { "ok" } else { "check_failed" };
                let _ = writeln!(s, "cell j={j} n={n} status={status} {}", ks.join(" "));
            }
            Err(e) => {
                let _ = writeln!(s, "cell j={j} n={n} status=failed error=\"{e}\"");
            }
        }
    }
    if let Some(r) = &o.report {
        for c in &r.checks {
            let verdict = if c.pass { "pass" } else { "fail" };
            let _ = writeln!(
                s,
                "{} max={:.17e} spread_j={:.6e} spread_n={:.6e} growth={} {verdict}",
                c.name, c.max, c.spread_j, c.spread_n, c.growth
            );
        }
    }
    let _ = writeln!(s, "overall = {}", if o.pass() { "pass" } else { "fail" });
    s
}

pub struct StabilityOutcome {
    pub coefficient: f64,
    pub calibrated: bool,
    pub series: Vec<(f64, GronwallSeries)>,
    /// `(ε₁, ε₂, gap)` for consecutive perturbation sizes.
    pub gaps: Vec<(f64, f64, f64)>,
    pub tolerance: f64,
}

impl StabilityOutcome {
    pub fn pass(&self) -> bool {
        self.series.iter().all(|(_, s)| s.pass) && self.gaps.iter().all(|g| g.2 < self.tolerance)
    }
}

fn perturbed(state: &GalerkinState, mode: usize, eps: f64) -> GalerkinState {
    let mut s = state.clone();
    s.coeffs[mode] += eps;
    s
}

/// Runs the reference solution and one perturbed partner per ε, then applies
/// the Grönwall monitor with a coefficient calibrated once and then frozen.
pub fn run_stability(cfg: &SimConfig, base: &Path, out: &Path) -> Result<StabilityOutcome> {
    fs::create_dir_all(out)?;
    let hash = cfg.hash();
    let st = &cfg.stability;
    let Prepared { solver, initial } = prepare(cfg, base, cfg.galerkin.modes, cfg.initial.n)?;
    let (horizon, dt) = (cfg.time.horizon, cfg.time.dt);
    let mut eps: Vec<f64> = st.epsilons.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    let mut jobs: Vec<Option<f64>> = vec![None];
    if st.coefficient.is_none() {
        jobs.push(Some(st.calibration_epsilon));
    }
    jobs.extend(eps.iter().map(|&e| Some(e)));
    let runs: Vec<Vec<GalerkinState>> = jobs
        .par_iter()
        .map(|job| {
            let start = match job {
                None => initial.clone(),
                Some(e) => perturbed(&initial, st.perturbed_mode, *e),
            };
            solver.integrate(start, horizon, dt)
        })
        .collect::<Result<_>>()?;
    let reference = &runs[0];
    let mut next = 1;
    let (coefficient, calibrated) = match st.coefficient {
        Some(c) => (c, false),
        None => {
            let (t, e, w) = pair_series(&solver, &runs[next], reference)?;
            next += 1;
            (calibrate_coefficient(&t, &e, &w, CALIBRATION_MARGIN, CALIBRATION_FLOOR)?, true)
        }
    };
    let mut series = Vec::new();
    for (i, &e) in eps.iter().enumerate() {
        let (t, en, w) = pair_series(&solver, &runs[next + i], reference)?;
        let s = gronwall_from_series(t, en, w, coefficient)?;
        let mut table = TableWriter::create(
            &out.join(format!("stability_{i}.txt")),
            &format!("stability eps={e:e}"),
            &hash,
            &["time", "energy", "bound", "weight"],
        )?;
        for k in 0..s.times.len() {
            table.row(&[s.times[k], s.energy[k], s.bound[k], s.weight[k]])?;
        }
        series.push((e, s));
    }
    let gaps = series
        .windows(2)
        .map(|w| Ok((w[0].0, w[1].0, scale_invariance_gap(&w[0].1, &w[1].1)?)))
        .collect::<Result<Vec<_>>>()?;
    let outcome = StabilityOutcome {
        coefficient,
        calibrated,
        series,
        gaps,
        tolerance: st.scale_tolerance,
    };
    write_text(&out.join("stability.txt"), &stability_text(&hash, &outcome))?;
    Ok(outcome)
}

fn stability_text(hash: &str, o: &StabilityOutcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# voigt stability config={hash}");
    let how = if o.calibrated { "calibrated" } else { "configured" };
    let _ = writeln!(s, "coefficient = {:.17e} ({how})", o.coefficient);
    for (e, series) in &o.series {
        let last = series.energy.len() - 1;
        let _ = writeln!(
            s,
            "eps={e:e} E0={:.17e} E_T={:.17e} bound_T={:.17e} {}",
            series.energy[0],
            series.energy[last],
            series.bound[last],
            if series.pass { "pass" } else { "fail" }
        );
    }
    for (a, b, gap) in &o.gaps {
        let verdict = if *gap < o.tolerance { "pass" } else { "fail" };
        let _ = writeln!(s, "scale eps={a:e} vs eps={b:e} gap={gap:.6e} {verdict}");
    }
    let _ = writeln!(s, "overall = {}", if o.pass() { "pass" } else { "fail" });
    s
}

fn collect_tables(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_tables(&p, found)?;
        } else if p.extension().is_some_and(|e| e == "txt") {
            found.push(p);
        }
    }
    Ok(())
}

/// Writes a CSV next to every ledger and stability table under `out`.
pub fn export_plots(out: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    collect_tables(out, &mut files)?;
    let mut written = Vec::new();
    for f in files {
        let Ok(table) = read_table(&f) else { continue };
        if table.kind == "ledger" || table.kind.starts_with("stability ") {
            let csv = f.with_extension("csv");
            table_to_csv(&table, &csv)?;
            written.push(csv);
        }
    }
    Ok(written)
}
