//! Run configuration: TOML parsing, defaults and validation with errors
//! anchored to the offending line of the source text.

use crate::elliptic::Backend;
use crate::grid::{Grid, GridError, GridSpec};
use crate::initial_data::InitialParams;
use crate::state::EnergyParams;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// first-order implicit-explicit Euler
    Euler,
    /// Crank-Nicolson diffusion with two-step explicit extrapolation
    CnAb2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Direct,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModesConfig {
    /// base azimuthal wavenumber `N`
    pub n: usize,
    /// truncation `K`
    pub k: usize,
}

impl Default for ModesConfig {
    fn default() -> Self {
        Self { n: 8, k: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    pub dt_max: f64,
    /// step cap of the first step; the cap grows by `dt_growth` per step up to `dt_max`
    pub dt_start: f64,
    pub dt_growth: f64,
    pub cfl: f64,
    pub scheme: Scheme,
    /// steps between diagnostic rows
    pub diag_every: usize,
    /// steps between snapshots; 0 keeps only the initial and final states
    pub snapshot_every: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t_final: 0.5,
            dt_max: 2.5e-3,
            dt_start: 1e-5,
            dt_growth: 1.1,
            cfl: 0.5,
            scheme: Scheme::Euler,
            diag_every: 10,
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub elliptic_tol: f64,
    pub div_tol: f64,
    pub backend: BackendKind,
    /// iteration cap of the iterative backend
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            elliptic_tol: 1e-10,
            div_tol: 1e-10,
            backend: BackendKind::Direct,
            max_iter: 20_000,
        }
    }
}

impl SolverConfig {
    pub fn backend(&self) -> Backend {
        match self.backend {
            BackendKind::Direct => Backend::Direct,
            BackendKind::Cg => Backend::Cg {
                max_iter: self.max_iter,
            },
        }
    }
}

/// Switches for the explicit terms; diffusion and pressure are always on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsFlags {
    /// all quadratic terms: transport, exchange, centrifugal and sources
    pub advection: bool,
    /// the `±2kN/r²` sine/cosine coupling inside each mode
    pub coupling: bool,
    /// `ξ/(1+r²)` forcing of the vertical momentum
    pub buoyancy: bool,
    /// add the extra `∂_r²` to the lead temperature diffusion
    pub temperature_extra_drr: bool,
}

impl Default for PhysicsFlags {
    fn default() -> Self {
        Self {
            advection: true,
            coupling: true,
            buoyancy: true,
            temperature_extra_drr: false,
        }
    }
}

impl PhysicsFlags {
    /// Pure diffusion: every explicit term off.
    pub fn diffusion_only() -> Self {
        Self {
            advection: false,
            coupling: false,
            buoyancy: false,
            temperature_extra_drr: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub modes: ModesConfig,
    pub time: TimeConfig,
    pub solver: SolverConfig,
    pub energy: EnergyParams,
    pub physics: PhysicsFlags,
    pub initial: InitialParams,
    pub output: OutputConfig,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{}{message}", line_prefix(*line))]
    Parse {
        line: Option<usize>,
        message: String,
    },
    #[error("{}[{section}] {key}: {message}", line_prefix(*line))]
    Invalid {
        line: Option<usize>,
        section: String,
        key: String,
        message: String,
    },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// Key blamed for a grid construction error.
fn grid_key(e: &GridError) -> &'static str {
    match e {
        GridError::NonPositiveExtent { r_max, .. } if !(*r_max > 0.0 && r_max.is_finite()) => {
            "r_max"
        }
        GridError::NonPositiveExtent { .. } => "z_max",
        GridError::TooFewNodes { nr, .. } if *nr < 8 => "nr",
        GridError::TooFewNodes { .. } => "nz",
        _ => "nr",
    }
}

fn line_prefix(line: Option<usize>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

impl ConfigError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Parse { line, .. } | ConfigError::Invalid { line, .. } => *line,
            ConfigError::Io { .. } => None,
        }
    }
}

/// 1-based line of `key = ...` inside `[section]` (or a nested table of it).
fn locate(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut section_line = None;
    for (n, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .trim_start_matches('[')
                .split(']')
                .next()
                .unwrap_or("")
                .trim();
            current = name.to_string();
            if current == format!("{section}.{key}") {
                return Some(n + 1);
            }
            if current == section && section_line.is_none() {
                section_line = Some(n + 1);
            }
            continue;
        }
        let in_section = current == section || current.starts_with(&format!("{section}."));
        if in_section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(n + 1);
                }
            }
        }
    }
    section_line
}

impl RunConfig {
    pub fn from_toml_str(src: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| ConfigError::Parse {
            line: e.span().map(|s| src[..s.start].matches('\n').count() + 1),
            message: e.message().to_string(),
        })?;
        cfg.validate_with_source(Some(src))?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&src)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_with_source(None)
    }

    pub fn build_grid(&self) -> Result<Grid, ConfigError> {
        Grid::from_spec(self.grid).map_err(|e| ConfigError::Invalid {
            line: None,
            section: "grid".into(),
            key: grid_key(&e).into(),
            message: e.to_string(),
        })
    }

    fn validate_with_source(&self, src: Option<&str>) -> Result<(), ConfigError> {
        let fail = |section: &str, key: &str, message: String| ConfigError::Invalid {
            line: src.and_then(|s| locate(s, section, key)),
            section: section.into(),
            key: key.into(),
            message,
        };
        let grid =
            Grid::from_spec(self.grid).map_err(|e| fail("grid", grid_key(&e), e.to_string()))?;
        if self.modes.n == 0 {
            return Err(fail(
                "modes",
                "n",
                "base wavenumber N must be at least 1".into(),
            ));
        }
        if self.modes.k == 0 {
            return Err(fail("modes", "k", "truncation K must be at least 1".into()));
        }
        let t = &self.time;
        if !(t.t_final >= 0.0 && t.t_final.is_finite()) {
            return Err(fail(
                "time",
                "t_final",
                format!("must be finite and non-negative, got {}", t.t_final),
            ));
        }
        if !(t.dt_max > 0.0 && t.dt_max.is_finite()) {
            return Err(fail(
                "time",
                "dt_max",
                format!("must be positive, got {}", t.dt_max),
            ));
        }
        if !(t.dt_start > 0.0 && t.dt_start.is_finite()) {
            return Err(fail(
                "time",
                "dt_start",
                format!("must be positive, got {}", t.dt_start),
            ));
        }
        if !(t.dt_growth >= 1.0 && t.dt_growth.is_finite()) {
            return Err(fail(
                "time",
                "dt_growth",
                format!("must be at least 1, got {}", t.dt_growth),
            ));
        }
        if !(t.cfl > 0.0 && t.cfl.is_finite()) {
            return Err(fail(
                "time",
                "cfl",
                format!("must be positive, got {}", t.cfl),
            ));
        }
        if t.diag_every == 0 {
            return Err(fail("time", "diag_every", "must be at least 1".into()));
        }
        let s = &self.solver;
        if !(s.elliptic_tol > 0.0 && s.elliptic_tol <= 1e-4) {
            return Err(fail(
                "solver",
                "elliptic_tol",
                format!("{} outside (0, 1e-4]", s.elliptic_tol),
            ));
        }
        if !(s.div_tol > 0.0 && s.div_tol.is_finite()) {
            return Err(fail(
                "solver",
                "div_tol",
                format!("must be positive, got {}", s.div_tol),
            ));
        }
        if s.max_iter == 0 {
            return Err(fail("solver", "max_iter", "must be at least 1".into()));
        }
        if let Err(e) = self.energy.check() {
            let key = match e {
                crate::state::ParamError::P(_) => "p",
                crate::state::ParamError::Beta { .. } => "beta_p",
                crate::state::ParamError::Alpha { .. } => "alpha_p",
            };
            return Err(fail("energy", key, e.to_string()));
        }
        if let Err(e) = self.initial.check(&grid) {
            let list = match &e {
                crate::initial_data::InitialError::BadWidth { list, .. }
                | crate::initial_data::InitialError::OuterRadius { list, .. }
                | crate::initial_data::InitialError::Vertical { list, .. }
                | crate::initial_data::InitialError::NegativeCenter { list, .. } => *list,
            };
            return Err(fail("initial", list, e.to_string()));
        }
        Ok(())
    }
}
