use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use voigt_core::config::SimConfig;
use voigt_core::harness::{export_plots, run_experiment, run_stability, run_sweep};
use voigt_core::initial::VelocityPreset;
use voigt_core::Result;

/// Navier-Stokes-Voigt Galerkin experiments.
#[derive(Parser)]
#[command(name = "voigt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single run: ledger, snapshots and summary.
    Run(Common),
    /// Cartesian (j, n) sweep with the boundedness check.
    Sweep(Common),
    /// Perturbed pairs with the Grönwall monitor.
    Stability(Common),
    /// Convert every ledger and stability table under --out to CSV.
    ExportPlots {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweep cells and stability pairs (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the seed of a random_seeded velocity.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<(SimConfig, PathBuf, PathBuf)> {
        let mut cfg = SimConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            if let VelocityPreset::RandomSeeded { seed, .. } = &mut cfg.initial.velocity {
                *seed = s;
            }
        }
        let base = self.config.parent().map(Path::to_path_buf).unwrap_or_default();
        let out = self.out.clone().unwrap_or_else(|| base.join(&cfg.output.directory));
        if let Some(w) = self.workers {
            // Only fails if a global pool already exists, which cannot happen here.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global();
        }
        Ok((cfg, base, out))
    }
}

fn verdict(pass: bool) -> ExitCode {
    if pass {
        println!("all checks passed");
        ExitCode::SUCCESS
    } else {
        println!("some checks failed");
        ExitCode::from(1)
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(c) => {
            let (cfg, base, out) = c.load()?;
            let r = run_experiment(&cfg, &base, &out)?;
            println!("final amplitude ratio {:.12e}", r.amplitude_ratio());
            println!("energy residual {:.6e}", r.report.energy_residual);
            println!("density bounds [{:.6e}, {:.6e}]", r.report.rho_min, r.report.rho_max);
            Ok(verdict(r.pass()))
        }
        Command::Sweep(c) => {
            let (cfg, base, out) = c.load()?;
            let s = run_sweep(&cfg, &base, &out)?;
            for ((j, n), cell) in &s.cells {
                match cell {
                    Ok(r) => println!("cell j={j} n={n}: {}", if r.pass() { "ok" } else { "check failed" }),
                    Err(e) => println!("cell j={j} n={n}: failed: {e}"),
                }
            }
            if let Some(rep) = &s.report {
                for f in rep.checks.iter().filter(|c| !c.pass) {
                    println!("{} not bounded: spread_j={:.3e} spread_n={:.3e}", f.name, f.spread_j, f.spread_n);
                }
            }
            Ok(verdict(s.pass()))
        }
        Command::Stability(c) => {
            let (cfg, base, out) = c.load()?;
            let s = run_stability(&cfg, &base, &out)?;
            println!("coefficient {:.6e}", s.coefficient);
            for (e, series) in &s.series {
                println!("eps={e:e}: {}", if series.pass { "bound holds" } else { "bound violated" });
            }
            for (a, b, gap) in &s.gaps {
                println!("scale gap eps={a:e} vs {b:e}: {gap:.3e}");
            }
            Ok(verdict(s.pass()))
        }
        Command::ExportPlots { out } => {
            for p in export_plots(&out)? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
