//! Run configuration, read from TOML.
//!
//! Every section rejects unknown keys. Errors name the offending key and,
//! when it can be located in the source text, its line.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forcing::ForcingSpec;
use crate::galerkin::{step_count, TransportMode};
use crate::initial::{VacuumSpec, VelocityPreset};
use crate::spectral::{Grid, StokesBasis};
use crate::transport::DEFAULT_CFL_LIMIT;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub points: usize,
    /// Box length per axis (one value applies to every axis). Defaults to 2π.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub horizon: f64,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GalerkinConfig {
    pub modes: usize,
    #[serde(default)]
    pub transport: TransportMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidConfig {
    pub mu: f64,
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Mollification index n.
    pub n: u32,
    /// Upper density bound M.
    #[serde(default = "one")]
    pub density_bound: f64,
    /// Mollify and lift the data (off only for closed-form checks).
    #[serde(default = "yes")]
    pub regularize: bool,
    pub velocity: VelocityPreset,
    #[serde(default = "no_vacuum")]
    pub density: VacuumSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub directory: String,
    /// Write a field snapshot every this many steps (0 disables snapshots).
    #[serde(default)]
    pub snapshot_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_dir(),
            snapshot_stride: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_spread")]
    pub sweep_spread: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            cfl: DEFAULT_CFL_LIMIT,
            sweep_spread: default_spread(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub modes: Vec<usize>,
    #[serde(default)]
    pub mollification: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    /// Index of the perturbed Galerkin coefficient.
    #[serde(default)]
    pub perturbed_mode: usize,
    /// Frozen Grönwall coefficient C; calibrated on a reference pair when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient: Option<f64>,
    #[serde(default = "default_calibration_epsilon")]
    pub calibration_epsilon: f64,
    #[serde(default = "default_tolerance")]
    pub scale_tolerance: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            epsilons: default_epsilons(),
            perturbed_mode: 0,
            coefficient: None,
            calibration_epsilon: default_calibration_epsilon(),
            scale_tolerance: default_tolerance(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub galerkin: GalerkinConfig,
    pub fluid: FluidConfig,
    #[serde(default)]
    pub forcing: ForcingSpec,
    pub initial: InitialConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn no_vacuum() -> VacuumSpec {
    VacuumSpec::None
}
fn default_dir() -> String {
    "out".into()
}
fn default_cfl() -> f64 {
    DEFAULT_CFL_LIMIT
}
fn default_spread() -> f64 {
    0.1
}
fn default_epsilons() -> Vec<f64> {
    vec![1e-3, 1e-4]
}
fn default_calibration_epsilon() -> f64 {
    1e-2
}
fn default_tolerance() -> f64 {
    0.1
}

/// 1-based line of `key = ...` inside `[section]` (or a dotted subsection).
fn locate(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut fallback = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if key.is_empty() && current == section {
                return Some(i + 1);
            }
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else {
            continue;
        };
        if lhs.trim() == key {
            if current == section || current.starts_with(&format!("{section}.")) {
                return Some(i + 1);
            }
            fallback.get_or_insert(i + 1);
        }
    }
    fallback
}

fn backticked(message: &str, after: &str) -> Option<String> {
    let rest = &message[message.find(after)? + after.len()..];
    let start = rest.find('`')? + 1;
    let end = start + rest[start..].find('`')?;
    Some(rest[start..end].to_string())
}

fn parse_error(source: &str, e: toml::de::Error) -> Error {
    let message = e.message().to_string();
    let line = e
        .span()
        .map(|s| source[..s.start.min(source.len())].matches('\n').count() + 1);
    let key = backticked(&message, "unknown field")
        .or_else(|| backticked(&message, "missing field"))
        .or_else(|| backticked(&message, "unknown variant"))
        .unwrap_or_else(|| "<document>".into());
    let line = match line {
        Some(l) => Some(l),
        None => locate(source, "", &key),
    };
    Error::Config { key, line, message }
}

impl SimConfig {
    pub fn from_toml(source: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(source).map_err(|e| parse_error(source, e))?;
        cfg.validate(Some(source), None)?;
        Ok(cfg)
    }

    /// Reads and validates a config file; tabulated forcing paths are
    /// resolved relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path)?;
        let cfg: SimConfig = toml::from_str(&source).map_err(|e| parse_error(&source, e))?;
        cfg.validate(Some(&source), path.parent())?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn build_grid(&self) -> Result<Grid> {
        match &self.grid.length {
            None => Grid::periodic(self.grid.dim, self.grid.points),
            Some(l) => Grid::new(self.grid.dim, self.grid.points, l),
        }
    }

    pub fn validate(&self, source: Option<&str>, base: Option<&Path>) -> Result<()> {
        let err = |section: &str, key: &str, message: String| Error::Config {
            key: if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            },
            line: source.and_then(|s| locate(s, section, key)),
            message,
        };
        let grid = self.build_grid().map_err(|e| err("grid", "points", e.to_string()))?;
        let t = &self.time;
        if !(t.horizon > 0.0 && t.horizon.is_finite()) {
            return Err(err("time", "horizon", "must be positive".into()));
        }
        if !(t.dt > 0.0 && t.dt <= t.horizon) {
            return Err(err("time", "dt", "must satisfy 0 < dt <= horizon".into()));
        }
        step_count(t.horizon, t.dt).map_err(|e| err("time", "dt", e.to_string()))?;
        let cap = StokesBasis::capacity(&grid);
        let modes_ok = |j: usize| j >= 1 && j <= cap;
        if !modes_ok(self.galerkin.modes) {
            return Err(err("galerkin", "modes", format!("must be in 1..={cap}")));
        }
        if !(self.fluid.mu > 0.0 && self.fluid.mu.is_finite()) {
            return Err(err("fluid", "mu", "must be positive".into()));
        }
        if !(self.fluid.kappa >= 0.0 && self.fluid.kappa.is_finite()) {
            return Err(err("fluid", "kappa", "must be non-negative".into()));
        }
        if self.initial.n == 0 {
            return Err(err("initial", "n", "must be at least 1".into()));
        }
        if !(self.initial.density_bound >= 0.0) {
            return Err(err("initial", "density_bound", "must be non-negative".into()));
        }
        if let ForcingSpec::Tabulated { path } = &self.forcing {
            let p = base.map_or_else(|| Path::new(path).to_path_buf(), |b| b.join(path));
            if !p.exists() {
                return Err(err("forcing", "path", format!("file {} does not exist", p.display())));
            }
        }
        if !(self.tolerances.cfl > 0.0) {
            return Err(err("tolerances", "cfl", "must be positive".into()));
        }
        if !(self.tolerances.sweep_spread > 0.0) {
            return Err(err("tolerances", "sweep_spread", "must be positive".into()));
        }
        if let Some(j) = self.sweep.modes.iter().find(|&&j| !modes_ok(j)) {
            return Err(err("sweep", "modes", format!("{j} is outside 1..={cap}")));
        }
        if self.sweep.mollification.contains(&0) {
            return Err(err("sweep", "mollification", "entries must be at least 1".into()));
        }
        let s = &self.stability;
        if s.epsilons.iter().any(|e| !(*e > 0.0)) {
            return Err(err("stability", "epsilons", "entries must be positive".into()));
        }
        if s.perturbed_mode >= self.galerkin.modes {
            return Err(err("stability", "perturbed_mode", "must index a basis mode".into()));
        }
        if s.coefficient.is_some_and(|c| !(c >= 0.0)) {
            return Err(err("stability", "coefficient", "must be non-negative".into()));
        }
        if !(s.calibration_epsilon > 0.0) {
            return Err(err("stability", "calibration_epsilon", "must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
[grid]
dim = 2
points = 32

[time]
horizon = 1.0
dt = 0.01

[galerkin]
modes = 4

[fluid]
mu = 0.1
kappa = 1.0

[initial]
n = 4
velocity = { preset = "single_mode" }
"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let c = SimConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.tolerances.cfl, 0.9);
        assert_eq!(c.tolerances.sweep_spread, 0.1);
        assert_eq!(c.initial.density, VacuumSpec::None);
        assert_eq!(c.galerkin.transport, TransportMode::SemiLagrangian);
        assert_eq!(c.forcing, ForcingSpec::None);
        assert!(c.initial.regularize);
    }

    #[test]
    fn misspelled_key_is_named_with_line() {
        let src = MINIMAL.replace("mu = 0.1", "viscoity = 0.1");
        match SimConfig::from_toml(&src) {
            Err(Error::Config { key, line, .. }) => {
                assert_eq!(key, "viscoity");
                assert_eq!(line, Some(14));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn missing_key_is_named() {
        let src = MINIMAL.replace("dt = 0.01\n", "");
        match SimConfig::from_toml(&src) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "dt"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_value_is_located() {
        let src = MINIMAL.replace("kappa = 1.0", "kappa = -1.0");
        match SimConfig::from_toml(&src) {
            Err(Error::Config { key, line, .. }) => {
                assert_eq!(key, "fluid.kappa");
                assert_eq!(line, Some(15));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let c = SimConfig::from_toml(MINIMAL).unwrap();
        let again = SimConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
    }
}
