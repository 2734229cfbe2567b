//! Command-line front end: single runs, `N` sweeps, the self-check suite
//! and field dumps.

use crate::assembly::{assemble, min_samples};
use crate::check::run_checks;
use crate::config::RunConfig;
use crate::diagnostics::{scaling_fit, FitError};
use crate::grid::GridSpec;
use crate::io::write_field_dump;
use crate::state::DiagnosticsRecord;
use crate::timestepper::{run, RunError, RunOutput};
use clap::Parser;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(
    name = "bmodes",
    version,
    about = "Azimuthal-mode Boussinesq simulator"
)]
pub struct Cli {
    /// TOML run configuration (defaults apply when omitted)
    pub config: Option<PathBuf>,
    /// Output directory (overrides `[output] dir`)
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Override the base wavenumber N
    #[arg(long)]
    pub n: Option<usize>,
    /// Override the truncation K
    #[arg(long)]
    pub k: Option<usize>,
    /// Override the radial node count
    #[arg(long)]
    pub nr: Option<usize>,
    /// Override the axial node count
    #[arg(long)]
    pub nz: Option<usize>,
    /// Override the final time
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Run one simulation per N, e.g. `--sweep N=8,16,32,64`
    #[arg(long, value_name = "N=LIST")]
    pub sweep: Option<SweepSpec>,
    /// Run the built-in oracle and invariant checks and exit
    #[arg(long)]
    pub check: bool,
    /// Also write assembled physical fields of the final state
    #[arg(long)]
    pub dump_fields: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepSpec(pub Vec<usize>);

impl FromStr for SweepSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let list = s
            .strip_prefix("N=")
            .or_else(|| s.strip_prefix("n="))
            .ok_or_else(|| format!("expected N=<list>, got {s:?}"))?;
        let ns = list
            .split(',')
            .map(|v| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        if ns.len() < 2 {
            return Err("a sweep needs at least two values of N".into());
        }
        if ns.contains(&0) {
            return Err("N must be positive".into());
        }
        Ok(SweepSpec(ns))
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("{path}: {message}")]
    Write { path: String, message: String },
    #[error("run stopped early: {0}")]
    Incomplete(String),
    #[error("{0} of the self-checks failed")]
    Checks(usize),
    #[error(transparent)]
    Fit(#[from] FitError),
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Load the configuration and apply command-line overrides.
pub fn load_config(cli: &Cli) -> Result<RunConfig, RunError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    if let Some(n) = cli.n {
        cfg.modes.n = n;
    }
    if let Some(k) = cli.k {
        cfg.modes.k = k;
    }
    if let Some(nr) = cli.nr {
        cfg.grid.nr = nr;
    }
    if let Some(nz) = cli.nz {
        cfg.grid.nz = nz;
    }
    if let Some(t) = cli.t_final {
        cfg.time.t_final = t;
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct GridInfo {
    #[serde(flatten)]
    pub spec: GridSpec,
    pub dr: f64,
    pub dz: f64,
}

/// Provenance written next to every run's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub program: &'static str,
    pub version: &'static str,
    pub config: RunConfig,
    pub config_toml: String,
    pub grid: GridInfo,
    pub n: usize,
    pub k: usize,
    /// No randomness enters a run; kept for the record format.
    pub seeds: Vec<u64>,
    pub wall_time_s: f64,
    pub steps: usize,
    pub rows: usize,
    pub t_reached: f64,
    pub complete: bool,
    pub failure: Option<String>,
}

fn manifest(cfg: &RunConfig, out: &RunOutput, wall: f64) -> Manifest {
    let g = &out.final_state.grid;
    Manifest {
        program: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        config_toml: cfg.to_toml_string(),
        grid: GridInfo {
            spec: g.spec(),
            dr: g.dr,
            dz: g.dz,
        },
        n: cfg.modes.n,
        k: cfg.modes.k,
        seeds: Vec::new(),
        wall_time_s: wall,
        steps: out.steps,
        rows: out.record.rows.len(),
        t_reached: out.final_state.t,
        complete: out.complete,
        failure: out.failure.clone(),
    }
}

/// One run with outputs, manifest and optional field dump.
pub fn run_single(cfg: &RunConfig, dump_fields: bool) -> Result<RunOutput, CliError> {
    let start = Instant::now();
    let out = run(cfg)?;
    let wall = start.elapsed().as_secs_f64();
    if let Some(dir) = &cfg.output.dir {
        let m = manifest(cfg, &out, wall);
        let json = serde_json::to_string_pretty(&m).expect("manifest serializes");
        write_file(&dir.join("manifest.json"), &json)?;
        if dump_fields {
            let s = &out.final_state;
            let a =
                assemble(s, min_samples(s.k_trunc).max(4 * s.k_trunc + 4)).expect("enough samples");
            let path = dir.join("fields.bin");
            write_field_dump(&path, &s.grid, &a, s.t).map_err(|e| CliError::Write {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        }
    }
    Ok(out)
}

/// Per-`N` summary of a sweep member.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    /// `‖u‖_{L^5_T L^5}`
    pub u_l5: f64,
    /// `‖u^θ‖_{L^5_T L^5}`
    pub u_theta_l5: f64,
    /// `u_theta_l5 / u_l5`
    pub swirl_ratio: f64,
    /// `sup_t ‖(U^r, U^θ, U^z)‖_{L^3}`
    pub lead_l3_sup: f64,
    /// `sup_t Σ_{k≥2} (kN)^{2β_p} ‖r^{1-3/p} ϖ_k‖^p_{L^p}`
    pub varpi_tail_sup: f64,
    /// `sup_t ‖r^{1-3/p} ϖ_1‖^p_{L^p}`
    pub varpi_1_sup: f64,
    pub complete: bool,
}

impl SweepRow {
    pub fn from_record(n: usize, rec: &DiagnosticsRecord, beta_p: f64, complete: bool) -> Self {
        let last = rec.last();
        let u_l5 = last.map(|r| r.u_l5_acc.powf(0.2)).unwrap_or(0.0);
        let u_theta_l5 = last.map(|r| r.u_theta_l5_acc.powf(0.2)).unwrap_or(0.0);
        let sup = |f: &dyn Fn(&crate::state::DiagnosticsRow) -> f64| {
            rec.rows.iter().map(f).fold(0.0, f64::max)
        };
        let tail = |row: &crate::state::DiagnosticsRow| {
            row.varpi
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, v)| (((i + 1) * n) as f64).powf(2.0 * beta_p) * v)
                .sum::<f64>()
        };
        SweepRow {
            n,
            u_l5,
            u_theta_l5,
            swirl_ratio: if u_l5 > 0.0 { u_theta_l5 / u_l5 } else { 0.0 },
            lead_l3_sup: sup(&|r| r.lead_l3_u),
            varpi_tail_sup: sup(&tail),
            varpi_1_sup: sup(&|r| r.varpi.first().copied().unwrap_or(0.0)),
            complete,
        }
    }
}

/// Fitted log-log slope next to its reference value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Slope {
    pub quantity: &'static str,
    pub slope: Option<f64>,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub slopes: Vec<Slope>,
    pub failures: Vec<(usize, String)>,
}

impl SweepReport {
    pub fn build(rows: Vec<SweepRow>, alpha_p: f64, failures: Vec<(usize, String)>) -> Self {
        let fit = |f: fn(&SweepRow) -> f64| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.complete)
                .map(|r| (r.n as f64, f(r)))
                .collect();
            scaling_fit(&pts).ok()
        };
        let slopes = vec![
            Slope {
                quantity: "u_L5",
                slope: fit(|r| r.u_l5),
                reference: -0.2,
            },
            Slope {
                quantity: "swirl_ratio",
                slope: fit(|r| r.swirl_ratio),
                reference: -0.5,
            },
            Slope {
                quantity: "varpi_tail_sup",
                slope: fit(|r| r.varpi_tail_sup),
                reference: -2.0 * alpha_p,
            },
            Slope {
                quantity: "lead_L3_sup",
                slope: fit(|r| r.lead_l3_sup),
                reference: 0.0,
            },
        ];
        SweepReport {
            rows,
            slopes,
            failures,
        }
    }

    pub fn slope(&self, quantity: &str) -> Option<f64> {
        self.slopes
            .iter()
            .find(|s| s.quantity == quantity)
            .and_then(|s| s.slope)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "N,u_L5,u_theta_L5,swirl_ratio,lead_L3_sup,varpi_tail_sup,varpi_1_sup,complete\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
                r.n,
                r.u_l5,
                r.u_theta_l5,
                r.swirl_ratio,
                r.lead_l3_sup,
                r.varpi_tail_sup,
                r.varpi_1_sup,
                r.complete
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>6} {:>12} {:>12} {:>12} {:>12} {:>12}",
            "N", "u_L5", "swirl", "lead_L3", "varpi_k>=2", "varpi_1"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>6} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e}{}",
                r.n,
                r.u_l5,
                r.swirl_ratio,
                r.lead_l3_sup,
                r.varpi_tail_sup,
                r.varpi_1_sup,
                if r.complete { "" } else { "  (incomplete)" }
            );
        }
        for sl in &self.slopes {
            match sl.slope {
                Some(v) => {
                    let _ = writeln!(
                        s,
                        "slope {:<15} {:>9.4}   reference {:>8.4}",
                        sl.quantity, v, sl.reference
                    );
                }
                None => {
                    let _ = writeln!(
                        s,
                        "slope {:<15} {:>9}   reference {:>8.4}",
                        sl.quantity, "n/a", sl.reference
                    );
                }
            }
        }
        for (n, e) in &self.failures {
            let _ = writeln!(s, "N = {n} failed: {e}");
        }
        s
    }
}

/// One run per `N`; failures are recorded and the sweep continues.
pub fn run_sweep(cfg: &RunConfig, ns: &[usize]) -> Result<SweepReport, CliError> {
    let mut rows = Vec::with_capacity(ns.len());
    let mut failures = Vec::new();
    for &n in ns {
        let mut c = cfg.clone();
        c.modes.n = n;
        c.output.dir = cfg.output.dir.as_ref().map(|d| d.join(format!("N{n}")));
        eprintln!("sweep: N = {n}");
        match run_single(&c, false) {
            Ok(out) => {
                if let Some(f) = &out.failure {
                    failures.push((n, f.clone()));
                }
                rows.push(SweepRow::from_record(
                    n,
                    &out.record,
                    cfg.energy.beta_p,
                    out.complete,
                ));
            }
            Err(e) => failures.push((n, e.to_string())),
        }
    }
    let report = SweepReport::build(rows, cfg.energy.alpha_p, failures);
    if let Some(dir) = &cfg.output.dir {
        create_dir(dir)?;
        write_file(&dir.join("sweep.csv"), &report.to_csv())?;
        write_file(&dir.join("sweep.txt"), &report.summary())?;
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write_file(&dir.join("sweep.json"), &json)?;
    }
    Ok(report)
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn main_with(cli: Cli) -> i32 {
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Run(RunError::Config(_)) => 2,
                _ => 1,
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if cli.check {
        let cfg = match &cli.config {
            Some(_) => load_config(cli)?,
            None => RunConfig::default(),
        };
        let results = run_checks(cfg.solver.div_tol);
        let mut failed = 0;
        for r in &results {
            println!(
                "{} {}: {}",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.detail
            );
            failed += usize::from(!r.passed);
        }
        return if failed == 0 {
            Ok(())
        } else {
            Err(CliError::Checks(failed))
        };
    }
    let cfg = load_config(cli)?;
    if let Some(SweepSpec(ns)) = &cli.sweep {
        let report = run_sweep(&cfg, ns)?;
        print!("{}", report.summary());
        return Ok(());
    }
    let out = run_single(&cfg, cli.dump_fields)?;
    if let Some(last) = out.record.last() {
        println!(
            "t = {:.6}  steps = {}  E_p = {:.6e}  D = {:.6e}  |u|_L2 = {:.6e}  div = {:.2e}",
            last.t, out.steps, last.e_p, last.d, last.u_l2, last.div_max
        );
    }
    match out.failure {
        Some(f) => Err(CliError::Incomplete(f)),
        None => Ok(()),
    }
}
