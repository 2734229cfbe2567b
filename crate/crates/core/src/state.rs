//! Solution representation: the axisymmetric lead coefficients, the
//! truncated family of `sin(kNθ)` / `cos(kNθ)` coefficients, energy
//! parameters, evaluated source terms and the diagnostics record.

use crate::grid::{Grid, Parity, ScalarField};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Axisymmetric (θ-independent) coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadState {
    pub u_r: ScalarField,
    pub u_theta: ScalarField,
    pub u_z: ScalarField,
    pub pi: ScalarField,
    pub xi: ScalarField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LeadField {
    Ur,
    Utheta,
    Uz,
    Pi,
    Xi,
}

impl LeadField {
    pub const ALL: [LeadField; 5] = [
        LeadField::Ur,
        LeadField::Utheta,
        LeadField::Uz,
        LeadField::Pi,
        LeadField::Xi,
    ];
    pub const EVOLVED: [LeadField; 4] = [
        LeadField::Ur,
        LeadField::Utheta,
        LeadField::Uz,
        LeadField::Xi,
    ];

    pub fn parity(self) -> Parity {
        match self {
            LeadField::Ur | LeadField::Utheta => Parity::Odd,
            LeadField::Uz | LeadField::Pi | LeadField::Xi => Parity::Even,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LeadField::Ur => "U_r",
            LeadField::Utheta => "U_theta",
            LeadField::Uz => "U_z",
            LeadField::Pi => "Pi",
            LeadField::Xi => "xi",
        }
    }
}

impl LeadState {
    pub fn zeros(grid: &Grid) -> Self {
        let z = ScalarField::zeros(grid);
        Self {
            u_r: z.clone(),
            u_theta: z.clone(),
            u_z: z.clone(),
            pi: z.clone(),
            xi: z,
        }
    }

    pub fn field(&self, f: LeadField) -> &ScalarField {
        match f {
            LeadField::Ur => &self.u_r,
            LeadField::Utheta => &self.u_theta,
            LeadField::Uz => &self.u_z,
            LeadField::Pi => &self.pi,
            LeadField::Xi => &self.xi,
        }
    }

    pub fn field_mut(&mut self, f: LeadField) -> &mut ScalarField {
        match f {
            LeadField::Ur => &mut self.u_r,
            LeadField::Utheta => &mut self.u_theta,
            LeadField::Uz => &mut self.u_z,
            LeadField::Pi => &mut self.pi,
            LeadField::Xi => &mut self.xi,
        }
    }
}

/// Coefficients of harmonic `k`: `U`-type fields multiply `sin(kNθ)`,
/// `V`-type fields multiply `cos(kNθ)`. `q` and `r` are the matching
/// pressure coefficients, `xi` and `zeta` the temperature coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeState {
    pub k: usize,
    pub u_r: ScalarField,
    pub v_r: ScalarField,
    pub u_theta: ScalarField,
    pub v_theta: ScalarField,
    pub u_z: ScalarField,
    pub v_z: ScalarField,
    pub q: ScalarField,
    pub r: ScalarField,
    pub xi: ScalarField,
    pub zeta: ScalarField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeField {
    Ur,
    Vr,
    Utheta,
    Vtheta,
    Uz,
    Vz,
    Q,
    R,
    Xi,
    Zeta,
}

impl ModeField {
    pub const ALL: [ModeField; 10] = [
        ModeField::Ur,
        ModeField::Vr,
        ModeField::Utheta,
        ModeField::Vtheta,
        ModeField::Uz,
        ModeField::Vz,
        ModeField::Q,
        ModeField::R,
        ModeField::Xi,
        ModeField::Zeta,
    ];
    pub const EVOLVED: [ModeField; 8] = [
        ModeField::Ur,
        ModeField::Vr,
        ModeField::Utheta,
        ModeField::Vtheta,
        ModeField::Uz,
        ModeField::Vz,
        ModeField::Xi,
        ModeField::Zeta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModeField::Ur => "U_r",
            ModeField::Vr => "V_r",
            ModeField::Utheta => "U_theta",
            ModeField::Vtheta => "V_theta",
            ModeField::Uz => "U_z",
            ModeField::Vz => "V_z",
            ModeField::Q => "Q",
            ModeField::R => "R",
            ModeField::Xi => "xi",
            ModeField::Zeta => "zeta",
        }
    }
}

impl ModeState {
    pub fn zeros(grid: &Grid, k: usize) -> Self {
        let z = ScalarField::zeros(grid);
        Self {
            k,
            u_r: z.clone(),
            v_r: z.clone(),
            u_theta: z.clone(),
            v_theta: z.clone(),
            u_z: z.clone(),
            v_z: z.clone(),
            q: z.clone(),
            r: z.clone(),
            xi: z.clone(),
            zeta: z,
        }
    }

    pub fn field(&self, f: ModeField) -> &ScalarField {
        match f {
            ModeField::Ur => &self.u_r,
            ModeField::Vr => &self.v_r,
            ModeField::Utheta => &self.u_theta,
            ModeField::Vtheta => &self.v_theta,
            ModeField::Uz => &self.u_z,
            ModeField::Vz => &self.v_z,
            ModeField::Q => &self.q,
            ModeField::R => &self.r,
            ModeField::Xi => &self.xi,
            ModeField::Zeta => &self.zeta,
        }
    }

    pub fn field_mut(&mut self, f: ModeField) -> &mut ScalarField {
        match f {
            ModeField::Ur => &mut self.u_r,
            ModeField::Vr => &mut self.v_r,
            ModeField::Utheta => &mut self.u_theta,
            ModeField::Vtheta => &mut self.v_theta,
            ModeField::Uz => &mut self.u_z,
            ModeField::Vz => &mut self.v_z,
            ModeField::Q => &mut self.q,
            ModeField::R => &mut self.r,
            ModeField::Xi => &mut self.xi,
            ModeField::Zeta => &mut self.zeta,
        }
    }
}

/// Full solution snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    pub grid: Grid,
    /// Base azimuthal wavenumber `N`.
    pub n: usize,
    /// Truncation `K`; `modes` should hold `k = 1..=K`.
    pub k_trunc: usize,
    pub t: f64,
    pub lead: LeadState,
    pub modes: Vec<ModeState>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ZeroWavenumber,
    ZeroTruncation,
    ModeCount { expected: usize, got: usize },
    NonContiguous { position: usize, k: usize },
    Shape { field: String },
    NonFinite { field: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroWavenumber => write!(f, "base wavenumber N must be >= 1"),
            Violation::ZeroTruncation => write!(f, "truncation K must be >= 1"),
            Violation::ModeCount { expected, got } => {
                write!(f, "expected {expected} modes, found {got}")
            }
            Violation::NonContiguous { position, k } => {
                write!(
                    f,
                    "mode at position {position} has k = {k}, expected {}",
                    position + 1
                )
            }
            Violation::Shape { field } => write!(f, "field {field} does not match the grid"),
            Violation::NonFinite { field } => write!(f, "field {field} has non-finite values"),
        }
    }
}

impl SpectralState {
    pub fn zeros(grid: &Grid, n: usize, k_trunc: usize) -> Self {
        Self {
            grid: grid.clone(),
            n,
            k_trunc,
            t: 0.0,
            lead: LeadState::zeros(grid),
            modes: (1..=k_trunc).map(|k| ModeState::zeros(grid, k)).collect(),
        }
    }

    /// `kN` for mode `k`.
    #[inline]
    pub fn wavenumber(&self, k: usize) -> f64 {
        (k * self.n) as f64
    }

    pub fn mode(&self, k: usize) -> &ModeState {
        &self.modes[k - 1]
    }

    pub fn mode_mut(&mut self, k: usize) -> &mut ModeState {
        &mut self.modes[k - 1]
    }

    /// Every type invariant that can be checked without solving anything.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.n == 0 {
            out.push(Violation::ZeroWavenumber);
        }
        if self.k_trunc == 0 {
            out.push(Violation::ZeroTruncation);
        }
        if self.modes.len() != self.k_trunc {
            out.push(Violation::ModeCount {
                expected: self.k_trunc,
                got: self.modes.len(),
            });
        }
        for (pos, m) in self.modes.iter().enumerate() {
            if m.k != pos + 1 {
                out.push(Violation::NonContiguous {
                    position: pos,
                    k: m.k,
                });
            }
        }
        let mut check = |name: String, f: &ScalarField| {
            if self.grid.check(f).is_err() {
                out.push(Violation::Shape { field: name });
            } else if !f.is_finite() {
                out.push(Violation::NonFinite { field: name });
            }
        };
        for lf in LeadField::ALL {
            check(format!("lead.{}", lf.name()), self.lead.field(lf));
        }
        for m in &self.modes {
            for mf in ModeField::ALL {
                check(format!("mode{}.{}", m.k, mf.name()), m.field(mf));
            }
        }
        out
    }

    /// Largest absolute value over all evolved fields.
    pub fn scale(&self) -> f64 {
        let mut s = 0.0_f64;
        for lf in LeadField::EVOLVED {
            s = s.max(self.lead.field(lf).max_abs());
        }
        for m in &self.modes {
            for mf in ModeField::EVOLVED {
                s = s.max(m.field(mf).max_abs());
            }
        }
        s
    }

    /// Multiply every field (pressures included) by `a`.
    pub fn scale_by(&mut self, a: f64) {
        for lf in LeadField::ALL {
            self.lead.field_mut(lf).scale(a);
        }
        for m in &mut self.modes {
            for mf in ModeField::ALL {
                m.field_mut(mf).scale(a);
            }
        }
    }

    /// Copy of the state with the lead zeroed.
    pub fn modes_only(&self) -> Self {
        let mut s = self.clone();
        s.lead = LeadState::zeros(&self.grid);
        s
    }

    /// Copy of the state with every mode zeroed.
    pub fn lead_only(&self) -> Self {
        let mut s = self.clone();
        for m in &mut s.modes {
            *m = ModeState::zeros(&self.grid, m.k);
        }
        s
    }

    /// Pointwise average of two states on the same grid and truncation.
    pub fn midpoint(a: &Self, b: &Self) -> Self {
        let mut out = a.clone();
        for lf in LeadField::ALL {
            let f = out.lead.field_mut(lf);
            f.axpy(1.0, b.lead.field(lf));
            f.scale(0.5);
        }
        for (m, mb) in out.modes.iter_mut().zip(&b.modes) {
            for mf in ModeField::ALL {
                let f = m.field_mut(mf);
                f.axpy(1.0, mb.field(mf));
                f.scale(0.5);
            }
        }
        out.t = 0.5 * (a.t + b.t);
        out
    }
}

/// Exponent `p` and weight exponents of the weighted energy functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyParams {
    pub p: f64,
    pub alpha_p: f64,
    pub beta_p: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            p: 100.0 / 19.0,
            alpha_p: 1.0 / 30.0,
            beta_p: 17.0 / 16.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("p = {0} must lie in (5, 6)")]
    P(f64),
    #[error("beta_p = {beta_p} violates 1 < beta_p < (p - 1)/4 = {upper}")]
    Beta { beta_p: f64, upper: f64 },
    #[error("alpha_p = {alpha_p} violates 0 < 4 alpha_p < p - 3 - 2 beta_p = {upper}")]
    Alpha { alpha_p: f64, upper: f64 },
}

impl EnergyParams {
    pub fn check(&self) -> Result<(), ParamError> {
        if !(self.p > 5.0 && self.p < 6.0) {
            return Err(ParamError::P(self.p));
        }
        let upper = (self.p - 1.0) / 4.0;
        if !(self.beta_p > 1.0 && self.beta_p < upper) {
            return Err(ParamError::Beta {
                beta_p: self.beta_p,
                upper,
            });
        }
        let upper = self.p - 3.0 - 2.0 * self.beta_p;
        if !(4.0 * self.alpha_p > 0.0 && 4.0 * self.alpha_p < upper) {
            return Err(ParamError::Alpha {
                alpha_p: self.alpha_p,
                upper,
            });
        }
        Ok(())
    }
}

/// Lead-equation sources `H^r, H^θ, H^z, φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadSources {
    pub h_r: ScalarField,
    pub h_theta: ScalarField,
    pub h_z: ScalarField,
    pub phi: ScalarField,
}

/// Mode-`k` sources; `F`/`φ` feed the sine equations, `G`/`ψ` the cosine ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSources {
    pub k: usize,
    pub f_r: ScalarField,
    pub g_r: ScalarField,
    pub f_theta: ScalarField,
    pub g_theta: ScalarField,
    pub f_z: ScalarField,
    pub g_z: ScalarField,
    pub phi: ScalarField,
    pub psi: ScalarField,
}

impl ModeSources {
    pub fn zeros(grid: &Grid, k: usize) -> Self {
        let z = ScalarField::zeros(grid);
        Self {
            k,
            f_r: z.clone(),
            g_r: z.clone(),
            f_theta: z.clone(),
            g_theta: z.clone(),
            f_z: z.clone(),
            g_z: z.clone(),
            phi: z.clone(),
            psi: z,
        }
    }

    /// Source of the equation for evolved field `f`.
    pub fn for_field(&self, f: ModeField) -> Option<&ScalarField> {
        Some(match f {
            ModeField::Ur => &self.f_r,
            ModeField::Vr => &self.g_r,
            ModeField::Utheta => &self.f_theta,
            ModeField::Vtheta => &self.g_theta,
            ModeField::Uz => &self.f_z,
            ModeField::Vz => &self.g_z,
            ModeField::Xi => &self.phi,
            ModeField::Zeta => &self.psi,
            ModeField::Q | ModeField::R => return None,
        })
    }

    pub fn for_field_mut(&mut self, f: ModeField) -> Option<&mut ScalarField> {
        Some(match f {
            ModeField::Ur => &mut self.f_r,
            ModeField::Vr => &mut self.g_r,
            ModeField::Utheta => &mut self.f_theta,
            ModeField::Vtheta => &mut self.g_theta,
            ModeField::Uz => &mut self.f_z,
            ModeField::Vz => &mut self.g_z,
            ModeField::Xi => &mut self.phi,
            ModeField::Zeta => &mut self.psi,
            ModeField::Q | ModeField::R => return None,
        })
    }
}

impl LeadSources {
    pub fn zeros(grid: &Grid) -> Self {
        let z = ScalarField::zeros(grid);
        Self {
            h_r: z.clone(),
            h_theta: z.clone(),
            h_z: z.clone(),
            phi: z,
        }
    }

    pub fn for_field(&self, f: LeadField) -> Option<&ScalarField> {
        Some(match f {
            LeadField::Ur => &self.h_r,
            LeadField::Utheta => &self.h_theta,
            LeadField::Uz => &self.h_z,
            LeadField::Xi => &self.phi,
            LeadField::Pi => return None,
        })
    }

    pub fn for_field_mut(&mut self, f: LeadField) -> Option<&mut ScalarField> {
        Some(match f {
            LeadField::Ur => &mut self.h_r,
            LeadField::Utheta => &mut self.h_theta,
            LeadField::Uz => &mut self.h_z,
            LeadField::Xi => &mut self.phi,
            LeadField::Pi => return None,
        })
    }
}

/// Evaluated nonlinear coupling terms.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSet {
    pub lead: LeadSources,
    pub modes: Vec<ModeSources>,
}

impl SourceSet {
    pub fn zeros(grid: &Grid, k_trunc: usize) -> Self {
        Self {
            lead: LeadSources::zeros(grid),
            modes: (1..=k_trunc).map(|k| ModeSources::zeros(grid, k)).collect(),
        }
    }

    fn fields(&self) -> Vec<&ScalarField> {
        let mut v: Vec<&ScalarField> = LeadField::EVOLVED
            .iter()
            .filter_map(|&f| self.lead.for_field(f))
            .collect();
        for m in &self.modes {
            v.extend(ModeField::EVOLVED.iter().filter_map(|&f| m.for_field(f)));
        }
        v
    }

    pub fn max_abs(&self) -> f64 {
        self.fields().iter().fold(0.0, |m, f| m.max(f.max_abs()))
    }

    /// Multiply every source field by `a`.
    pub fn scale(&mut self, a: f64) {
        for &f in &LeadField::EVOLVED {
            if let Some(x) = self.lead.for_field_mut(f) {
                x.scale(a);
            }
        }
        for m in &mut self.modes {
            for &f in &ModeField::EVOLVED {
                if let Some(x) = m.for_field_mut(f) {
                    x.scale(a);
                }
            }
        }
    }

    /// Largest pointwise difference between two source sets of equal shape.
    pub fn max_abs_diff(&self, other: &SourceSet) -> f64 {
        let mut out = 0.0_f64;
        for (a, b) in self.fields().into_iter().zip(other.fields()) {
            for (x, y) in a.values.iter().zip(&b.values) {
                out = out.max((x - y).abs());
            }
        }
        out
    }
}

/// One recorded diagnostics interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub e_p: f64,
    pub cal_e_p: f64,
    pub d: f64,
    pub lead_l3_u: f64,
    pub lead_l3_xi: f64,
    pub div_max: f64,
    pub u_l2: f64,
    pub eta_l2: f64,
    pub u_theta_l2: f64,
    pub grad_u_l2: f64,
    pub grad_eta_l2: f64,
    pub u_l5: f64,
    /// `∫_0^t ‖u‖_{L^5}^5 dt'` (left endpoint rule).
    pub u_l5_acc: f64,
    /// `∫_0^t ‖u^θ‖_{L^5}^5 dt'`.
    pub u_theta_l5_acc: f64,
    /// Share of the `k = K` terms in the instantaneous part of `E_p`.
    pub tail_fraction: f64,
    /// `‖r^{1-3/p} ϖ_k‖_{L^p}^p` for `k = 1..=K`.
    pub varpi: Vec<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecordError {
    #[error("diagnostics time {t} does not follow previous time {prev}")]
    NonIncreasingTime { prev: f64, t: f64 },
    #[error("dissipation integral decreased from {prev} to {d}")]
    DecreasingDissipation { prev: f64, d: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub rows: Vec<DiagnosticsRow>,
}

impl DiagnosticsRecord {
    pub fn push(&mut self, row: DiagnosticsRow) -> Result<(), RecordError> {
        if let Some(last) = self.rows.last() {
            if !(row.t > last.t) {
                return Err(RecordError::NonIncreasingTime {
                    prev: last.t,
                    t: row.t,
                });
            }
            if row.d < last.d {
                return Err(RecordError::DecreasingDissipation {
                    prev: last.d,
                    d: row.d,
                });
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn last(&self) -> Option<&DiagnosticsRow> {
        self.rows.last()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(2.0, 2.0, 8, 9).unwrap()
    }

    #[test]
    fn zero_state_is_valid() {
        let s = SpectralState::zeros(&grid(), 4, 3);
        assert!(s.validate().is_empty());
        assert_eq!(s.scale(), 0.0);
    }

    #[test]
    fn non_contiguous_modes_reported_once() {
        let g = grid();
        let mut s = SpectralState::zeros(&g, 4, 3);
        s.modes[2].k = 4;
        let v = s.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(matches!(
            v[0],
            Violation::NonContiguous { position: 2, k: 4 }
        ));
    }

    #[test]
    fn non_finite_and_shape_violations() {
        let g = grid();
        let mut s = SpectralState::zeros(&g, 1, 1);
        s.modes[0].xi.values[3] = f64::NAN;
        s.lead.u_z = ScalarField::zeros(&Grid::new(2.0, 2.0, 9, 9).unwrap());
        let v = s.validate();
        assert_eq!(v.len(), 2);
        s.n = 0;
        assert!(s.validate().contains(&Violation::ZeroWavenumber));
    }

    #[test]
    fn default_energy_params_satisfy_inequalities() {
        let e = EnergyParams::default();
        assert!(e.check().is_ok());
        // 1 < 17/16 = 1.0625 < 81/76
        assert!(e.beta_p < 81.0 / 76.0 && 81.0 / 76.0 - e.beta_p < 0.0034);
        let slack = e.p - 3.0 - 2.0 * e.beta_p - 4.0 * e.alpha_p;
        assert!(slack > 0.0 && slack < 0.005, "{slack}");
    }

    #[test]
    fn energy_params_rejections() {
        let mut e = EnergyParams::default();
        e.beta_p = 0.5;
        assert!(matches!(e.check(), Err(ParamError::Beta { .. })));
        let mut e = EnergyParams::default();
        e.alpha_p = 0.05;
        assert!(matches!(e.check(), Err(ParamError::Alpha { .. })));
        let mut e = EnergyParams::default();
        e.p = 6.5;
        assert!(matches!(e.check(), Err(ParamError::P(_))));
    }

    #[test]
    fn record_rejects_time_reversal_and_decreasing_d() {
        let row = |t: f64, d: f64| DiagnosticsRow {
            t,
            e_p: 0.0,
            cal_e_p: 0.0,
            d,
            lead_l3_u: 0.0,
            lead_l3_xi: 0.0,
            div_max: 0.0,
            u_l2: 0.0,
            eta_l2: 0.0,
            u_theta_l2: 0.0,
            grad_u_l2: 0.0,
            grad_eta_l2: 0.0,
            u_l5: 0.0,
            u_l5_acc: 0.0,
            u_theta_l5_acc: 0.0,
            tail_fraction: 0.0,
            varpi: vec![],
        };
        let mut rec = DiagnosticsRecord::default();
        rec.push(row(0.0, 0.0)).unwrap();
        rec.push(row(0.1, 1.0)).unwrap();
        assert!(rec.push(row(0.1, 2.0)).is_err());
        assert!(rec.push(row(0.2, 0.5)).is_err());
        assert_eq!(rec.rows.len(), 2);
    }
}
