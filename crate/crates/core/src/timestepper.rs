//! Implicit-explicit time stepping of the lead and mode systems with a
//! pressure projection per family.
//!
//! Every evolved field obeys `∂_t u = (L_r + ∂_z²) u + E(u)` up to a
//! pressure gradient, where `L_r` is a radial tridiagonal operator (the
//! radial part of `Δ̃`, the `c/r²` penalties and the temperature `L̃`) and
//! `E` collects the explicit terms. The implicit part is solved through
//! [`Elliptic::solve_helmholtz`].

use crate::assembly::assembled_norms;
use crate::config::{ConfigError, PhysicsFlags, RunConfig, Scheme, TimeConfig};
use crate::diagnostics::{component_norms, energy_functionals, EnergyAccumulator};
use crate::elliptic::{Elliptic, EllipticError};
use crate::grid::{Grid, Parity, RadialOp, ScalarField, Tridiag};
use crate::initial_data::{init_state, make_stream_data, InitialError};
use crate::io::{write_csv, write_snapshot, IoError};
use crate::nonlinear::{self, Prepared};
use crate::state::{
    DiagnosticsRecord, DiagnosticsRow, EnergyParams, LeadField, ModeField, SourceSet, SpectralState,
};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("pressure solve failed for {family} family of mode {k} at t = {t}: {source}")]
    Elliptic {
        family: &'static str,
        k: usize,
        t: f64,
        source: EllipticError,
    },
    #[error("non-finite value in {field} at t = {t}")]
    NonFinite { field: String, t: f64 },
    #[error("time step {0} must be positive and finite")]
    BadStep(f64),
}

/// One evolved scalar: a lead field or field `f` of mode `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Lead(LeadField),
    Mode(usize, ModeField),
}

impl Slot {
    /// Every evolved slot of a `K`-mode state in a fixed order.
    pub fn all(k_trunc: usize) -> Vec<Slot> {
        let mut v: Vec<Slot> = LeadField::EVOLVED.iter().map(|&f| Slot::Lead(f)).collect();
        for k in 1..=k_trunc {
            v.extend(ModeField::EVOLVED.iter().map(|&f| Slot::Mode(k, f)));
        }
        v
    }

    pub fn parity(self) -> Parity {
        match self {
            Slot::Lead(f) => f.parity(),
            Slot::Mode(..) => Parity::Odd,
        }
    }

    pub fn of(self, s: &SpectralState) -> &ScalarField {
        match self {
            Slot::Lead(f) => s.lead.field(f),
            Slot::Mode(k, f) => s.mode(k).field(f),
        }
    }

    pub fn of_mut(self, s: &mut SpectralState) -> &mut ScalarField {
        match self {
            Slot::Lead(f) => s.lead.field_mut(f),
            Slot::Mode(k, f) => s.mode_mut(k).field_mut(f),
        }
    }

    pub fn in_set(self, set: &SourceSet) -> &ScalarField {
        match self {
            Slot::Lead(f) => set.lead.for_field(f).expect("evolved field"),
            Slot::Mode(k, f) => set.modes[k - 1].for_field(f).expect("evolved field"),
        }
    }

    pub fn in_set_mut(self, set: &mut SourceSet) -> &mut ScalarField {
        match self {
            Slot::Lead(f) => set.lead.for_field_mut(f).expect("evolved field"),
            Slot::Mode(k, f) => set.modes[k - 1].for_field_mut(f).expect("evolved field"),
        }
    }

    /// Coefficient `c` of the `-c/r²` term and whether `L̃` acts.
    fn penalty(self, n: usize) -> (f64, bool) {
        match self {
            Slot::Lead(LeadField::Ur | LeadField::Utheta) => (1.0, false),
            Slot::Lead(LeadField::Xi) => (0.0, true),
            Slot::Lead(_) => (0.0, false),
            Slot::Mode(k, f) => {
                let m2 = ((k * n) as f64).powi(2);
                match f {
                    ModeField::Ur | ModeField::Vr | ModeField::Utheta | ModeField::Vtheta => {
                        (1.0 + m2, false)
                    }
                    ModeField::Xi | ModeField::Zeta => (m2, true),
                    _ => (m2, false),
                }
            }
        }
    }
}

/// Radial part `L_r` of the implicit operator of `slot`.
pub fn spatial_radial(grid: &Grid, slot: Slot, n: usize, flags: &PhysicsFlags) -> Tridiag {
    let parity = slot.parity();
    let mut t = grid.radial(RadialOp::LapR, parity);
    let (c, ltilde) = slot.penalty(n);
    if c != 0.0 {
        let r = grid.r();
        t.add_diagonal(|j| -c / (r[j] * r[j]));
    }
    if ltilde {
        t.axpy(-1.0, &grid.radial(RadialOp::LTilde, parity));
    }
    if flags.temperature_extra_drr && slot == Slot::Lead(LeadField::Xi) {
        t.axpy(1.0, &grid.radial(RadialOp::Drr, parity));
    }
    t
}

/// `(L_r + ∂_z²) u` for the field in `slot`.
pub fn apply_spatial(
    grid: &Grid,
    slot: Slot,
    n: usize,
    flags: &PhysicsFlags,
    u: &ScalarField,
) -> ScalarField {
    let mut out = grid.apply_radial(u, &spatial_radial(grid, slot, n, flags));
    out.add_assign(&grid.d_zz(u));
    out.clear_z_walls();
    out
}

fn set_axpy(dst: &mut SourceSet, a: f64, src: &SourceSet) {
    for slot in Slot::all(dst.modes.len()) {
        slot.in_set_mut(dst).axpy(a, slot.in_set(src));
    }
}

/// Explicit terms `E(u)` of every evolved equation. `src` overrides the
/// quadratic mode sources when given.
pub fn explicit_terms(
    s: &SpectralState,
    flags: &PhysicsFlags,
    src: Option<&SourceSet>,
) -> SourceSet {
    let g = &s.grid;
    let mut e = SourceSet::zeros(g, s.modes.len());
    if !(flags.advection || flags.coupling || flags.buoyancy) {
        return e;
    }
    let p = Prepared::new(s);
    let c = nonlinear::linear_couplings_prepared(&p);
    if flags.advection {
        match src {
            Some(src) => set_axpy(&mut e, -1.0, src),
            None => {
                let own = SourceSet {
                    lead: nonlinear::lead_sources_prepared(&p),
                    modes: nonlinear::mode_sources_prepared(&p),
                };
                set_axpy(&mut e, -1.0, &own);
            }
        }
        set_axpy(&mut e, -1.0, &c.bilinear);
    }
    if flags.coupling {
        set_axpy(&mut e, -1.0, &c.linear);
    }
    if flags.buoyancy {
        set_axpy(&mut e, 1.0, &c.buoyancy);
    }
    e
}

/// Full non-pressure tendency `(L_r + ∂_z²) u + E(u)`.
pub fn tendency(s: &SpectralState, flags: &PhysicsFlags, src: Option<&SourceSet>) -> SourceSet {
    let mut t = explicit_terms(s, flags, src);
    for slot in Slot::all(s.modes.len()) {
        let lu = apply_spatial(&s.grid, slot, s.n, flags, slot.of(s));
        slot.in_set_mut(&mut t).add_assign(&lu);
    }
    t
}

/// Time step from the advective speed bound.
pub fn cfl_dt(s: &SpectralState, cfg: &RunConfig) -> f64 {
    let g = &s.grid;
    let mut vmax = 0.0_f64;
    for idx in 0..g.len() {
        let mut v = s.lead.u_r.values[idx].abs() + s.lead.u_z.values[idx].abs();
        for m in &s.modes {
            v += m.u_r.values[idx].abs()
                + m.u_z.values[idx].abs()
                + m.v_r.values[idx].abs()
                + m.v_z.values[idx].abs();
        }
        vmax = vmax.max(v);
    }
    cfl_formula(cfg.time.dt_max, cfg.time.cfl, g.dr.min(g.dz), vmax)
}

/// Start-up cap `dt_start · dt_growth^steps`, which resolves the fast
/// initial decay of high-wavenumber modes.
pub fn ramp_cap(t: &TimeConfig, steps: usize) -> f64 {
    let e = i32::try_from(steps).unwrap_or(i32::MAX);
    (t.dt_start * t.dt_growth.powi(e)).min(t.dt_max)
}

/// `min(dt_max, cfl · h / max(1e-12, v_max))`.
pub fn cfl_formula(dt_max: f64, cfl: f64, h: f64, vmax: f64) -> f64 {
    dt_max.min(cfl * h / vmax.max(1e-12))
}

/// Pressure potentials returned by [`project_state`]: lead `Π`, then
/// `(Q_k, R_k)` per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    pub lead: ScalarField,
    pub modes: Vec<(ScalarField, ScalarField)>,
}

/// Project the lead family and both families of every mode in place.
pub fn project_state(
    ell: &Elliptic,
    s: &mut SpectralState,
    tol: f64,
) -> Result<Potentials, StepError> {
    let t = s.t;
    let err = |family: &'static str, k: usize| {
        move |source| StepError::Elliptic {
            family,
            k,
            t,
            source,
        }
    };
    let lead = {
        let l = &mut s.lead;
        ell.project_in_place(&mut l.u_r, None, &mut l.u_z, 0, tol)
            .map_err(err("lead", 0))?
    };
    let n = s.n;
    let mut modes = Vec::with_capacity(s.modes.len());
    for m in &mut s.modes {
        let kn = m.k * n;
        let q = ell
            .project_in_place(&mut m.u_r, Some((&mut m.v_theta, 1.0)), &mut m.u_z, kn, tol)
            .map_err(err("U", m.k))?;
        let r = ell
            .project_in_place(
                &mut m.v_r,
                Some((&mut m.u_theta, -1.0)),
                &mut m.v_z,
                kn,
                tol,
            )
            .map_err(err("V", m.k))?;
        modes.push((q, r));
    }
    Ok(Potentials { lead, modes })
}

/// Largest discrete divergence over the lead and every mode family.
pub fn max_divergence(ell: &Elliptic, s: &SpectralState) -> f64 {
    let mut d = ell.divergence(&s.lead.u_r, None, &s.lead.u_z, 0).max_abs();
    for m in &s.modes {
        let kn = m.k * s.n;
        d = d.max(
            ell.divergence(&m.u_r, Some(&m.v_theta), &m.u_z, kn)
                .max_abs(),
        );
        let neg = m.u_theta.scaled(-1.0);
        d = d.max(ell.divergence(&m.v_r, Some(&neg), &m.v_z, kn).max_abs());
    }
    d
}

/// Subtract `G p` of the stored pressures from the explicit terms.
fn subtract_pressure_gradient(ell: &Elliptic, s: &SpectralState, e: &mut SourceSet) {
    let gl = ell.gradient(&s.lead.pi, 0);
    e.lead.h_r.axpy(-1.0, &gl.r);
    e.lead.h_z.axpy(-1.0, &gl.z);
    for (m, em) in s.modes.iter().zip(&mut e.modes) {
        let kn = m.k * s.n;
        let gq = ell.gradient(&m.q, kn);
        em.f_r.axpy(-1.0, &gq.r);
        em.g_theta.axpy(-1.0, &gq.theta);
        em.f_z.axpy(-1.0, &gq.z);
        let gr = ell.gradient(&m.r, kn);
        em.g_r.axpy(-1.0, &gr.r);
        em.f_theta.axpy(1.0, &gr.theta);
        em.g_z.axpy(-1.0, &gr.z);
    }
}

/// Stateful integrator; holds the solver context and the previous
/// explicit terms of the two-step variant.
#[derive(Debug, Clone)]
pub struct Stepper {
    ell: Elliptic,
    physics: PhysicsFlags,
    scheme: Scheme,
    tol: f64,
    prev: Option<(SourceSet, f64)>,
}

impl Stepper {
    pub fn new(grid: &Grid, cfg: &RunConfig) -> Self {
        Self {
            ell: Elliptic::new(grid).with_backend(cfg.solver.backend()),
            physics: cfg.physics,
            scheme: cfg.time.scheme,
            tol: cfg.solver.elliptic_tol,
            prev: None,
        }
    }

    pub fn elliptic(&self) -> &Elliptic {
        &self.ell
    }

    pub fn physics(&self) -> &PhysicsFlags {
        &self.physics
    }

    /// Implicit diffusion update without projection:
    /// Euler solves `(1/dt - L) u* = u/dt + E`, the two-step variant
    /// `(2/dt - L) u* = (2/dt + L) u + 2 E`.
    pub fn predictor(&self, s: &SpectralState, dt: f64, e: &SourceSet) -> SpectralState {
        let g = &s.grid;
        let mut out = s.clone();
        let (shift, explicit_weight) = match self.scheme {
            Scheme::Euler => (1.0 / dt, 1.0),
            Scheme::CnAb2 => (2.0 / dt, 2.0),
        };
        for slot in Slot::all(s.modes.len()) {
            let u = slot.of(s);
            let mut a = spatial_radial(g, slot, s.n, &self.physics);
            a.scale(-1.0);
            a.add_diagonal(|_| shift);
            let mut rhs = u.scaled(shift);
            if self.scheme == Scheme::CnAb2 {
                rhs.add_assign(&apply_spatial(g, slot, s.n, &self.physics, u));
            }
            rhs.axpy(explicit_weight, slot.in_set(e));
            rhs.clear_z_walls();
            *slot.of_mut(&mut out) = self.ell.solve_helmholtz(&rhs, &a);
        }
        out.t = s.t + dt;
        out
    }

    /// One step of size `dt`; pressures of the result are the gradient
    /// potentials divided by `dt`.
    pub fn step(&mut self, s: &SpectralState, dt: f64) -> Result<SpectralState, StepError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(StepError::BadStep(dt));
        }
        let mut e = explicit_terms(s, &self.physics, None);
        if self.scheme == Scheme::CnAb2 {
            let current = e.clone();
            if let Some((prev, dt_prev)) = &self.prev {
                let w = dt / dt_prev;
                for slot in Slot::all(s.modes.len()) {
                    let f = slot.in_set_mut(&mut e);
                    f.scale(1.0 + 0.5 * w);
                    f.axpy(-0.5 * w, slot.in_set(prev));
                }
            }
            self.prev = Some((current, dt));
            subtract_pressure_gradient(&self.ell, s, &mut e);
        }
        let mut next = self.predictor(s, dt, &e);
        let pots = project_state(&self.ell, &mut next, self.tol)?;
        let inv = 1.0 / dt;
        let incremental = self.scheme == Scheme::CnAb2;
        let store = |dst: &mut ScalarField, old: &ScalarField, phi: &ScalarField| {
            let mut p = phi.scaled(inv);
            if incremental {
                p.add_assign(old);
            }
            *dst = p;
        };
        store(&mut next.lead.pi, &s.lead.pi, &pots.lead);
        for ((m, old), (q, r)) in next.modes.iter_mut().zip(&s.modes).zip(&pots.modes) {
            store(&mut m.q, &old.q, q);
            store(&mut m.r, &old.r, r);
        }
        for v in next.validate() {
            if let crate::state::Violation::NonFinite { field } = v {
                return Err(StepError::NonFinite { field, t: next.t });
            }
        }
        Ok(next)
    }
}

/// One first-order step with a fresh integrator.
pub fn imex_step(s: &SpectralState, dt: f64, cfg: &RunConfig) -> Result<SpectralState, StepError> {
    let mut cfg = cfg.clone();
    cfg.time.scheme = Scheme::Euler;
    Stepper::new(&s.grid, &cfg).step(s, dt)
}

/// Everything produced by [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// States at the configured snapshot cadence (initial state first).
    pub snapshots: Vec<SpectralState>,
    pub record: DiagnosticsRecord,
    pub final_state: SpectralState,
    pub steps: usize,
    /// `false` when a step failed; outputs then stop at the last good state.
    pub complete: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("initial data: {0}")]
    Initial(#[from] InitialError),
    #[error("initial projection: {0}")]
    Projection(StepError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Status file written next to the outputs of [`run`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub complete: bool,
    pub failure: Option<String>,
    pub steps: usize,
    pub t_reached: f64,
    pub rows: usize,
    pub snapshots: Vec<String>,
}

/// Running integrals carried across steps.
#[derive(Debug, Clone, Copy, Default)]
struct Accumulators {
    energy: EnergyAccumulator,
    u_l5: f64,
    u_theta_l5: f64,
}

fn diagnostics_row(
    ell: &Elliptic,
    s: &SpectralState,
    params: &EnergyParams,
    acc: &mut Accumulators,
    dt_next: f64,
) -> DiagnosticsRow {
    let e = energy_functionals(s, params, &mut acc.energy, dt_next);
    let an = assembled_norms(s);
    let cn = component_norms(s, params.p);
    let row = DiagnosticsRow {
        t: s.t,
        e_p: e.e_p,
        cal_e_p: e.cal_e_p,
        d: e.d,
        lead_l3_u: cn.lead_l3_u,
        lead_l3_xi: cn.lead_l3_xi,
        div_max: max_divergence(ell, s),
        u_l2: an.u_l2,
        eta_l2: an.eta_l2,
        u_theta_l2: an.u_theta_l2,
        grad_u_l2: an.grad_u_l2,
        grad_eta_l2: an.grad_eta_l2,
        u_l5: an.u_l5_pow.powf(0.2),
        u_l5_acc: acc.u_l5,
        u_theta_l5_acc: acc.u_theta_l5,
        tail_fraction: e.tail_fraction,
        varpi: cn.varpi,
    };
    acc.u_l5 += dt_next * an.u_l5_pow;
    acc.u_theta_l5 += dt_next * an.u_theta_l5_pow;
    row
}

/// Advance the integrals without building a row.
fn accumulate(s: &SpectralState, params: &EnergyParams, acc: &mut Accumulators, dt: f64) {
    energy_functionals(s, params, &mut acc.energy, dt);
    let an = assembled_norms(s);
    acc.u_l5 += dt * an.u_l5_pow;
    acc.u_theta_l5 += dt * an.u_theta_l5_pow;
}

/// Initial state of a configuration: the stream-function tuple, projected
/// onto the discrete divergence-free space, with zero pressures.
pub fn initial_state(cfg: &RunConfig, ell: &Elliptic) -> Result<SpectralState, RunError> {
    let grid = cfg.build_grid()?;
    let tuple = make_stream_data(&grid, &cfg.initial)?;
    let mut s = init_state(&tuple, cfg.modes.n, cfg.modes.k, &grid);
    project_state(ell, &mut s, cfg.solver.elliptic_tol).map_err(RunError::Projection)?;
    s.lead.pi.fill(0.0);
    for m in &mut s.modes {
        m.q.fill(0.0);
        m.r.fill(0.0);
    }
    Ok(s)
}

/// Integrate from `t = 0` to `t_final` with CFL-limited steps, recording
/// diagnostics every `diag_every` steps and at the end, and writing the
/// record, snapshots and a status file when an output directory is set.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let grid = cfg.build_grid()?;
    let mut stepper = Stepper::new(&grid, cfg);
    let mut failure = None;
    let mut s = match initial_state(cfg, stepper.elliptic()) {
        Ok(s) => s,
        Err(RunError::Projection(e)) => {
            eprintln!("initial projection failed: {e}");
            failure = Some(e.to_string());
            init_state(
                &make_stream_data(&grid, &cfg.initial)?,
                cfg.modes.n,
                cfg.modes.k,
                &grid,
            )
        }
        Err(e) => return Err(e),
    };
    let params = cfg.energy;
    let t_final = cfg.time.t_final;
    let diag_every = cfg.time.diag_every.max(1);
    let snap_every = cfg.time.snapshot_every;
    let mut acc = Accumulators::default();
    let mut record = DiagnosticsRecord::default();
    let mut snapshots = vec![s.clone()];
    let mut steps = 0usize;
    while failure.is_none() {
        let remaining = t_final - s.t;
        let done = remaining <= 1e-12 * t_final.max(1.0);
        let dt = if done {
            0.0
        } else {
            cfl_dt(&s, cfg)
                .min(ramp_cap(&cfg.time, steps))
                .min(remaining)
        };
        if done || steps.is_multiple_of(diag_every) {
            let row = diagnostics_row(stepper.elliptic(), &s, &params, &mut acc, dt);
            record.push(row).expect("monotone time and dissipation");
        } else {
            accumulate(&s, &params, &mut acc, dt);
        }
        if done {
            break;
        }
        match stepper.step(&s, dt) {
            Ok(next) => s = next,
            Err(e) => {
                eprintln!("step {steps} failed: {e}");
                failure = Some(e.to_string());
                break;
            }
        }
        steps += 1;
        if snap_every > 0 && steps.is_multiple_of(snap_every) {
            snapshots.push(s.clone());
        }
    }
    if snapshots.last().map(|l| l.t) != Some(s.t) {
        snapshots.push(s.clone());
    }
    let out = RunOutput {
        snapshots,
        record,
        final_state: s,
        steps,
        complete: failure.is_none(),
        failure,
    };
    if let Some(dir) = &cfg.output.dir {
        write_outputs(dir, &out)?;
    }
    Ok(out)
}

/// Write `diagnostics.csv`, `record.json`, `snap_XXXXX.bin` files and
/// `status.json` into `dir`.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<(), IoError> {
    let err = |source| IoError::Io {
        path: dir.display().to_string(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(err)?;
    let k = out.final_state.k_trunc;
    write_csv(&dir.join("diagnostics.csv"), &out.record, k)?;
    let json = serde_json::to_string_pretty(&out.record).expect("record serializes");
    std::fs::write(dir.join("record.json"), json).map_err(err)?;
    let mut names = Vec::with_capacity(out.snapshots.len());
    for (i, snap) in out.snapshots.iter().enumerate() {
        let name = format!("snap_{i:05}.bin");
        write_snapshot(&dir.join(&name), snap)?;
        names.push(name);
    }
    let status = RunStatus {
        complete: out.complete,
        failure: out.failure.clone(),
        steps: out.steps,
        t_reached: out.final_state.t,
        rows: out.record.rows.len(),
        snapshots: names,
    };
    let json = serde_json::to_string_pretty(&status).expect("status serializes");
    std::fs::write(dir.join("status.json"), json).map_err(err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial_data::{init_state, make_stream_data, Bump, InitialParams};

    fn cfg_for(g: &Grid, n: usize, k: usize) -> RunConfig {
        let mut c = RunConfig::default();
        c.grid = g.spec();
        c.modes.n = n;
        c.modes.k = k;
        c
    }

    fn bump(a: f64, r0: f64, z0: f64, w: f64) -> Bump {
        Bump {
            amplitude: a,
            r0,
            z0,
            width: w,
        }
    }

    #[test]
    fn cfl_examples() {
        assert!((cfl_formula(1.0, 0.5, 0.1, 1.0) - 0.05).abs() < 1e-15);
        let g = Grid::new(3.0, 3.0, 16, 33).unwrap();
        let c = cfg_for(&g, 2, 2);
        let mut s = SpectralState::zeros(&g, 2, 2);
        assert_eq!(cfl_dt(&s, &c), c.time.dt_max);
        s.modes[1].v_z = ScalarField::from_fn(&g, |r, _| 100.0 * r);
        let dt1 = cfl_dt(&s, &c);
        s.scale_by(2.0);
        let dt2 = cfl_dt(&s, &c);
        assert!(dt1 < c.time.dt_max);
        assert!((dt1 / dt2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_is_fixed_point() {
        let g = Grid::new(3.0, 3.0, 12, 17).unwrap();
        let c = cfg_for(&g, 3, 3);
        let s = SpectralState::zeros(&g, 3, 3);
        let mut st = Stepper::new(&g, &c);
        let mut cur = s.clone();
        for _ in 0..3 {
            cur = st.step(&cur, 0.01).unwrap();
        }
        cur.t = 0.0;
        assert_eq!(cur, s);
    }

    #[test]
    fn diffusion_only_first_order_in_dt() {
        let g = Grid::new(4.0, 4.0, 24, 33).unwrap();
        let mut c = cfg_for(&g, 2, 2);
        c.physics = PhysicsFlags::diffusion_only();
        let mut s0 = SpectralState::zeros(&g, 2, 2);
        s0.modes[1].u_theta =
            ScalarField::from_fn(&g, |r, z| r * r * (-(r - 1.5).powi(2) - z * z).exp());
        s0.modes[1].u_theta.clear_z_walls();
        let t_end = 0.05;
        let run = |steps: usize| {
            let st = Stepper::new(&g, &c);
            let dt = t_end / steps as f64;
            let zero = SourceSet::zeros(&g, 2);
            let mut s = s0.clone();
            for _ in 0..steps {
                s = st.predictor(&s, dt, &zero);
            }
            s.modes[1].u_theta.clone()
        };
        let diff = |a: &ScalarField, b: &ScalarField| g.inner(&a.sub(b), &a.sub(b)).sqrt();
        let (u1, u2) = (run(4), run(8));
        let (u16, u32) = (run(64), run(128));
        let ratio = diff(&u1, &u2) / diff(&u16, &u32);
        assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
        // the untouched fields stay zero
        assert!(run(4).max_abs() > 0.0);
    }

    #[test]
    fn step_leaves_divergence_free_state() {
        let g = Grid::new(3.0, 3.0, 24, 33).unwrap();
        let c = cfg_for(&g, 2, 3);
        let p = InitialParams {
            psi_a: vec![bump(0.5, 1.0, 0.0, 0.45)],
            chi_a: vec![bump(0.3, 1.2, 0.2, 0.4)],
            c: vec![bump(0.5, 1.0, 0.0, 0.4)],
            ..Default::default()
        };
        let t = make_stream_data(&g, &p).unwrap();
        let mut s = init_state(&t, 2, 3, &g);
        let mut st = Stepper::new(&g, &c);
        project_state(st.elliptic(), &mut s, 1e-10).unwrap();
        for _ in 0..5 {
            s = st.step(&s, 1e-3).unwrap();
            let d = max_divergence(st.elliptic(), &s);
            assert!(d <= c.solver.div_tol, "divergence {d}");
        }
        assert!(s.modes[1].u_r.max_abs() > 0.0, "mode 2 excited");
        assert!(s.lead.u_z.max_abs() > 0.0, "lead excited");
    }

    #[test]
    fn invariant_subspace_is_preserved() {
        let g = Grid::new(3.0, 3.0, 16, 25).unwrap();
        let c = cfg_for(&g, 4, 3);
        let p = InitialParams {
            psi_b: vec![bump(1.0, 1.0, 0.0, 0.45)],
            d: vec![bump(1.0, 1.0, 0.3, 0.4)],
            ..Default::default()
        };
        let t = make_stream_data(&g, &p).unwrap();
        let mut s = init_state(&t, 4, 3, &g);
        let mut st = Stepper::new(&g, &c);
        project_state(st.elliptic(), &mut s, 1e-10).unwrap();
        for _ in 0..10 {
            s = st.step(&s, 2e-3).unwrap();
        }
        for m in &s.modes {
            for f in [&m.u_r, &m.u_z, &m.v_theta, &m.q, &m.xi] {
                assert_eq!(f.max_abs(), 0.0, "mode {}", m.k);
            }
        }
        assert!(s.modes[1].v_r.max_abs() > 0.0);
    }

    #[test]
    fn two_step_scheme_is_second_order_for_diffusion() {
        let g = Grid::new(4.0, 4.0, 24, 33).unwrap();
        let mut c = cfg_for(&g, 2, 1);
        c.physics = PhysicsFlags::diffusion_only();
        c.time.scheme = Scheme::CnAb2;
        let mut s0 = SpectralState::zeros(&g, 2, 1);
        s0.lead.u_theta = ScalarField::from_fn(&g, |r, z| r * (-(r - 1.0).powi(2) - z * z).exp());
        s0.lead.u_theta.clear_z_walls();
        let run = |steps: usize| {
            let mut st = Stepper::new(&g, &c);
            let dt = 0.1 / steps as f64;
            let mut s = s0.clone();
            for _ in 0..steps {
                s = st.step(&s, dt).unwrap();
            }
            s.lead.u_theta
        };
        let diff = |a: &ScalarField, b: &ScalarField| g.inner(&a.sub(b), &a.sub(b)).sqrt();
        let (a, b, cc) = (run(8), run(16), run(32));
        let ratio = diff(&a, &b) / diff(&b, &cc);
        assert!((ratio - 4.0).abs() < 0.6, "ratio {ratio}");
    }

    fn small_run_cfg() -> RunConfig {
        let g = Grid::new(3.0, 3.0, 12, 17).unwrap();
        let mut c = cfg_for(&g, 4, 2);
        c.time.t_final = 0.02;
        c.time.diag_every = 2;
        c.initial = InitialParams {
            psi_a: vec![bump(0.3, 1.2, 0.0, 0.4)],
            c: vec![bump(0.2, 1.2, 0.2, 0.4)],
            ..Default::default()
        };
        c
    }

    #[test]
    fn ramp_cap_grows_to_dt_max() {
        let t = TimeConfig::default();
        assert_eq!(ramp_cap(&t, 0), t.dt_start);
        assert!((ramp_cap(&t, 1) - t.dt_start * t.dt_growth).abs() < 1e-20);
        assert_eq!(ramp_cap(&t, 10_000), t.dt_max);
    }

    #[test]
    fn zero_tuple_run_has_zero_diagnostics() {
        let mut c = small_run_cfg();
        c.initial = InitialParams::default();
        let out = run(&c).unwrap();
        assert!(out.complete);
        for row in &out.record.rows {
            assert_eq!(
                (row.e_p, row.d, row.u_l2, row.eta_l2, row.u_l5_acc),
                (0.0, 0.0, 0.0, 0.0, 0.0)
            );
            assert!(row.varpi.iter().all(|&v| v == 0.0));
        }
        assert!((out.final_state.t - c.time.t_final).abs() < 1e-12);
    }

    #[test]
    fn run_writes_outputs_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small_run_cfg();
        c.output.dir = Some(dir.path().join("a"));
        let out = run(&c).unwrap();
        assert!(out.complete && out.steps > 0);
        assert!(out.record.rows.len() >= 2);
        for name in [
            "diagnostics.csv",
            "record.json",
            "status.json",
            "snap_00000.bin",
        ] {
            assert!(dir.path().join("a").join(name).exists(), "{name}");
        }
        c.output.dir = Some(dir.path().join("b"));
        run(&c).unwrap();
        let read = |d: &str| std::fs::read(dir.path().join(d).join("diagnostics.csv")).unwrap();
        assert_eq!(read("a"), read("b"));
        let status: RunStatus = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("a/status.json")).unwrap(),
        )
        .unwrap();
        assert!(status.complete && status.failure.is_none());
    }

    #[test]
    fn solver_failure_marks_run_incomplete() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small_run_cfg();
        c.solver.backend = crate::config::BackendKind::Cg;
        c.solver.max_iter = 1;
        c.output.dir = Some(dir.path().to_path_buf());
        match run(&c) {
            Ok(out) => {
                assert!(!out.complete && out.failure.is_some());
                let status: RunStatus = serde_json::from_str(
                    &std::fs::read_to_string(dir.path().join("status.json")).unwrap(),
                )
                .unwrap();
                assert!(!status.complete);
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}
