//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any
//! criterion fails. Runs with `cargo test --test acceptance`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voigt_core::config::SimConfig;
use voigt_core::density::DensityField;
use voigt_core::forcing::Forcing;
use voigt_core::galerkin::{FluidParams, Galerkin, TransportMode};
use voigt_core::harness::{prepare, run_cell, run_stability, run_sweep};
use voigt_core::initial::{build_velocity, VelocityPreset};
use voigt_core::pressure::{recover_pressure, voigt_stokes_check};
use voigt_core::spectral::{leray_project, nodal_gradient, nodal_inner, stokes_apply, Grid, SpectralField, StokesBasis};
use voigt_core::transport::{lq_norm, NormOrder};

type Outcome = Result<(bool, String), String>;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> SimConfig {
    SimConfig::load(&configs().join(name)).expect("bundled config loads")
}

fn scratch() -> tempfile::TempDir {
    tempfile::tempdir().expect("temp dir")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn single_mode_decay() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for (file, expected) in [("decay.toml", (-0.05f64).exp()), ("decay_kappa0.toml", (-0.1f64).exp())] {
        let cfg = load(file);
        let dir = scratch();
        let t = Instant::now();
        let run = run_cell(&cfg, &configs(), cfg.galerkin.modes, cfg.initial.n, dir.path()).map_err(|e| e.to_string())?;
        let secs = t.elapsed().as_secs_f64();
        let err = rel(run.amplitude_ratio(), expected);
        pass &= err < 1e-6 && secs < 10.0;
        lines.push(format!("kappa={} ratio={:.9} rel.err={err:.2e} {secs:.2}s", cfg.fluid.kappa, run.amplitude_ratio()));
    }
    Ok((pass, lines.join("; ")))
}

fn vacuum_bounds_and_lq() -> Result<(Outcome, Outcome), String> {
    let cfg = load("vacuum_disk.toml");
    let dir = scratch();
    let t = Instant::now();
    let run = run_cell(&cfg, &configs(), cfg.galerkin.modes, cfg.initial.n, dir.path()).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let floor = 1.0 / f64::from(cfg.initial.n);
    let ceiling = cfg.initial.density_bound + floor;
    let lo = run.records.iter().map(|r| r.rho_min).fold(f64::INFINITY, f64::min);
    let hi = run.records.iter().map(|r| r.rho_max).fold(f64::NEG_INFINITY, f64::max);
    let bounds = (
        lo >= floor && hi <= ceiling && secs < 60.0,
        format!("{} records, min={lo:.17} max={hi:.17} {secs:.2}s", run.records.len()),
    );
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for q in [1.0, 2.0, 4.0] {
        let a = lq_norm(&run.initial.rho, NormOrder::Finite(q)).map_err(|e| e.to_string())?;
        let b = lq_norm(&run.final_state.rho, NormOrder::Finite(q)).map_err(|e| e.to_string())?;
        worst = worst.max(rel(b, a));
        parts.push(format!("q={q}: {:.2e}", rel(b, a)));
    }
    Ok((Ok(bounds), Ok((worst < 1e-2, parts.join(", ")))))
}

fn energy_order() -> Outcome {
    let mut cfg = load("energy.toml");
    let mut residuals = Vec::new();
    for dt in [0.1, 0.05, 0.025, 0.0125] {
        cfg.time.dt = dt;
        let dir = scratch();
        let run = run_cell(&cfg, &configs(), cfg.galerkin.modes, cfg.initial.n, dir.path()).map_err(|e| e.to_string())?;
        residuals.push(run.report.energy_residual);
    }
    let ratios: Vec<f64> = residuals.windows(2).map(|w| w[0] / w[1]).collect();
    let pass = ratios.iter().all(|r| (12.0..=20.0).contains(r));
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
    Ok((pass, format!("halving ratios [{}]", shown.join(", "))))
}

fn pressure_oracle() -> Outcome {
    let g = Grid::periodic(2, 32).map_err(|e| e.to_string())?;
    let solver = Galerkin::new(
        StokesBasis::build(&g, 8, 0.1).map_err(|e| e.to_string())?,
        FluidParams::new(0.1, 1.0, Forcing::None).map_err(|e| e.to_string())?,
        TransportMode::SemiLagrangian,
    );
    let u = build_velocity(&g, &VelocityPreset::TaylorGreen { amplitude: 1.0 }).map_err(|e| e.to_string())?;
    let state = solver.initial_state(DensityField::constant(&g, 1.0), &u).map_err(|e| e.to_string())?;
    // frozen in time: no acceleration
    let frozen = vec![0.0; solver.basis().len()];
    let p = recover_pressure(&solver, &state, &frozen).map_err(|e| e.to_string())?;
    let mut diff = SpectralField::from_fn(&g, 1, |x| [0.25 * ((2.0 * x[0]).cos() + (2.0 * x[1]).cos()), 0.0, 0.0]);
    diff.axpy(-1.0, &p).map_err(|e| e.to_string())?;
    let err = diff.l2_norm_sq().sqrt();
    let mean = p.mean(0).abs();

    let cfg = load("decay.toml");
    let Ok(prepared) = prepare(&cfg, &configs(), cfg.galerkin.modes, cfg.initial.n) else {
        return Err("decay config does not prepare".into());
    };
    let trajectory = prepared
        .solver
        .integrate(prepared.initial, cfg.time.horizon, cfg.time.dt)
        .map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for s in trajectory.iter().step_by(50) {
        let rate = prepared.solver.coefficient_rate(s).map_err(|e| e.to_string())?;
        worst = worst.max(voigt_stokes_check(&prepared.solver, s, &rate).map_err(|e| e.to_string())?);
    }
    Ok((
        err < 1e-10 && mean < 1e-14 && worst < 1e-8,
        format!("L2 error {err:.2e}, |mean| {mean:.2e}, Voigt-Stokes residual {worst:.2e}"),
    ))
}

fn sweep_boundedness() -> Outcome {
    let cfg = load("sweep.toml");
    let dir = scratch();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().map_err(|e| e.to_string())?;
    let t = Instant::now();
    let s = pool.install(|| run_sweep(&cfg, &configs(), dir.path())).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let report = s.report.as_ref().ok_or("no cell succeeded")?;
    let spreads: Vec<String> = report
        .checks
        .iter()
        .map(|c| format!("{} {:.1}%/{:.1}%", c.name, 100.0 * c.spread_j, 100.0 * c.spread_n))
        .collect();
    Ok((s.pass() && secs < 600.0, format!("{} cells, spread j/n: {}, {secs:.1}s", s.cells.len(), spreads.join(", "))))
}

fn gronwall() -> Outcome {
    let cfg = load("stability.toml");
    let dir = scratch();
    let s = run_stability(&cfg, &configs(), dir.path()).map_err(|e| e.to_string())?;
    let gaps: Vec<String> = s.gaps.iter().map(|g| format!("{:.2e}", g.2)).collect();
    let bounds = s.series.iter().all(|(_, x)| x.pass);
    Ok((
        s.pass(),
        format!("C={:.3e}, bound holds: {bounds}, scale gap [{}]", s.coefficient, gaps.join(", ")),
    ))
}

fn spectral_invariants() -> Outcome {
    let g = Grid::periodic(2, 32).map_err(|e| e.to_string())?;
    let mu = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut idem: f64 = 0.0;
    for _ in 0..5 {
        let comps: Vec<Vec<f64>> = (0..2).map(|_| (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let v = SpectralField::from_nodal(&g, &comps).map_err(|e| e.to_string())?;
        let p = leray_project(&v).map_err(|e| e.to_string())?;
        let mut pp = leray_project(&p).map_err(|e| e.to_string())?;
        pp.axpy(-1.0, &p).map_err(|e| e.to_string())?;
        idem = idem.max(pp.l2_norm_sq().sqrt());
    }
    let basis = StokesBasis::build(&g, 40, mu).map_err(|e| e.to_string())?;
    let modes: Vec<SpectralField> = (0..basis.len()).map(|i| basis.mode_field(i)).collect();
    let applied: Vec<SpectralField> = modes.iter().map(|m| stokes_apply(m, mu)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let mut eigen: f64 = 0.0;
    for (i, a) in applied.iter().enumerate() {
        let mut expect = modes[i].clone();
        expect.scale(basis.eigenvalues()[i]);
        let scale = expect.l2_norm_sq().sqrt();
        let mut d = a.clone();
        d.axpy(-1.0, &expect).map_err(|e| e.to_string())?;
        eigen = eigen.max(d.l2_norm_sq().sqrt() / scale);
    }
    let grads: Vec<_> = modes.iter().map(nodal_gradient).collect();
    let nodal: Vec<_> = modes.iter().map(SpectralField::to_nodal).collect();
    let applied_nodal: Vec<_> = applied.iter().map(SpectralField::to_nodal).collect();
    let (mut worst, mut largest): (f64, f64) = (0.0, 0.0);
    for i in 0..modes.len() {
        for l in 0..modes.len() {
            let dirichlet: f64 = (0..2)
                .flat_map(|a| (0..2).map(move |b| (a, b)))
                .map(|(a, b)| nodal_inner(&g, &grads[i][a][b], &grads[l][a][b]))
                .sum();
            let weak: f64 = (0..2).map(|a| nodal_inner(&g, &applied_nodal[i][a], &nodal[l][a])).sum();
            worst = worst.max((mu * dirichlet - weak).abs());
            largest = largest.max(weak.abs());
        }
    }
    let identity = worst / largest;
    Ok((
        idem < 1e-12 && eigen < 1e-12 && identity < 1e-10,
        format!("idempotence {idem:.1e}, eigenrelation {eigen:.1e}, projection identity {identity:.1e}"),
    ))
}

fn tree_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).expect("readable output dir") {
            let p = e.expect("dir entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).expect("inside root").to_path_buf();
                out.push((rel, std::fs::read(&p).expect("readable file")));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let mut compared = 0;
    for file in ["vacuum_disk.toml", "energy.toml"] {
        let cfg = load(file);
        let (a, b) = (scratch(), scratch());
        for d in [&a, &b] {
            run_cell(&cfg, &configs(), cfg.galerkin.modes, cfg.initial.n, d.path()).map_err(|e| e.to_string())?;
        }
        let (ta, tb) = (tree_bytes(a.path()), tree_bytes(b.path()));
        if ta != tb {
            return Ok((false, format!("{file}: outputs differ")));
        }
        compared += ta.len();
    }
    let cfg = load("stability.toml");
    let (a, b) = (scratch(), scratch());
    for d in [&a, &b] {
        run_stability(&cfg, &configs(), d.path()).map_err(|e| e.to_string())?;
    }
    let (ta, tb) = (tree_bytes(a.path()), tree_bytes(b.path()));
    compared += ta.len();
    Ok((ta == tb, format!("{compared} files byte-identical across reruns")))
}

fn main() {
    let (bounds, lq) = match vacuum_bounds_and_lq() {
        Ok(pair) => pair,
        Err(e) => (Err(e.clone()), Err(e)),
    };
    let results: Vec<(&str, Outcome)> = vec![
        ("single-mode Voigt decay", single_mode_decay()),
        ("density maximum principle with vacuum", bounds),
        ("Lq conservation of the density", lq),
        ("energy identity at fourth order", energy_order()),
        ("pressure oracle and Voigt-Stokes identity", pressure_oracle()),
        ("uniform boundedness in (j, n)", sweep_boundedness()),
        ("Gronwall stability", gronwall()),
        ("spectral-core invariants", spectral_invariants()),
        ("determinism", determinism()),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (*ok, d.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!("criterion {}: {} {name}: {detail}", i + 1, if ok { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
