//! Quadratic coupling terms of the lead and mode systems.
//!
//! Convention for the mode sums: with `a = k1`, `b = k2`, the products that
//! come from `sin(a) cos(b)` are collected in `s1`, those from
//! `cos(a) sin(b)` in `s2`, `sin(a) sin(b)` in `c1` and `cos(a) cos(b)` in
//! `c2`. The sine sources are then `½(s1 + s2)` for `a + b = k`,
//! `½(s1 - s2)` for `a - b = k` and `½(s2 - s1)` for `b - a = k`; the cosine
//! sources are `½(c2 - c1)` for `a + b = k` and `½(c1 + c2)` for
//! `|a - b| = k`.

use crate::grid::{Grid, Parity, ScalarField};
use crate::state::{LeadField, LeadSources, ModeField, ModeSources, SourceSet, SpectralState};
use std::f64::consts::PI;
use thiserror::Error;

/// Number of evolved fields per mode, ordered as [`ModeField::EVOLVED`].
const NF: usize = 8;
const UR: usize = 0;
const VR: usize = 1;
const UT: usize = 2;
const VT: usize = 3;
const UZ: usize = 4;
const VZ: usize = 5;
const XI: usize = 6;
const ZE: usize = 7;

/// Lead fields ordered as [`LeadField::EVOLVED`].
const LR: usize = 0;
const LT: usize = 1;
const LZ: usize = 2;
const LX: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle needs at least {min} angular samples for K = {k}, got {m}")]
    TooFewSamples { m: usize, min: usize, k: usize },
}

/// Values and first derivatives of every evolved field, computed once and
/// shared between the source and coupling evaluations.
pub struct Prepared<'a> {
    pub state: &'a SpectralState,
    lead: [[Vec<f64>; 3]; 4],
    modes: Vec<[[Vec<f64>; 3]; NF]>,
}

fn with_derivs(grid: &Grid, f: &ScalarField, parity: Parity) -> [Vec<f64>; 3] {
    [
        f.values.clone(),
        grid.d_r(f, parity).values,
        grid.d_z(f).values,
    ]
}

impl<'a> Prepared<'a> {
    pub fn new(state: &'a SpectralState) -> Self {
        let g = &state.grid;
        let lead = LeadField::EVOLVED.map(|f| with_derivs(g, state.lead.field(f), f.parity()));
        let modes = state
            .modes
            .iter()
            .map(|m| ModeField::EVOLVED.map(|f| with_derivs(g, m.field(f), Parity::Odd)))
            .collect();
        Self { state, lead, modes }
    }
}

/// Per-point copy of one mode: `[value, d_r, d_z]` for each evolved field.
#[derive(Clone, Copy, Default)]
struct Pt {
    v: [f64; NF],
    dr: [f64; NF],
    dz: [f64; NF],
}

fn gather(p: &Prepared, idx: usize, out: &mut [Pt]) {
    for (m, slot) in p.modes.iter().zip(out.iter_mut()) {
        for f in 0..NF {
            slot.v[f] = m[f][0][idx];
            slot.dr[f] = m[f][1][idx];
            slot.dz[f] = m[f][2][idx];
        }
    }
}

#[inline]
fn temp_weight(r: f64) -> f64 {
    2.0 * r / (1.0 + r * r)
}

/// `H^r, H^θ, H^z, φ` of the lead system, sums truncated at `K`.
pub fn lead_sources(s: &SpectralState) -> LeadSources {
    lead_sources_prepared(&Prepared::new(s))
}

pub fn lead_sources_prepared(p: &Prepared) -> LeadSources {
    let s = p.state;
    let g = &s.grid;
    let kk = s.modes.len();
    let mut out = LeadSources::zeros(g);
    let mut pts = vec![Pt::default(); kk];
    for j in 0..g.nr {
        let r = g.r()[j];
        let ir = 1.0 / r;
        let w = temp_weight(r);
        for i in 0..g.nz {
            let idx = g.idx(j, i);
            gather(p, idx, &mut pts);
            let (mut hr, mut ht, mut hz, mut ph) = (0.0, 0.0, 0.0, 0.0);
            for (n, m) in pts.iter().enumerate() {
                let kn = s.wavenumber(n + 1) * ir;
                let tu = |f: usize| m.v[UR] * m.dr[f] + m.v[UZ] * m.dz[f];
                let tv = |f: usize| m.v[VR] * m.dr[f] + m.v[VZ] * m.dz[f];
                hr += 0.5 * (tu(UR) + tv(VR) - kn * m.v[UT] * m.v[VR] + kn * m.v[VT] * m.v[UR])
                    - 0.5 * (ir * m.v[UT] * m.v[UT] + ir * m.v[VT] * m.v[VT]);
                ht += 0.5 * (tu(UT) + tv(VT))
                    + 0.5 * (ir * m.v[UR] * m.v[UT] + ir * m.v[VR] * m.v[VT]);
                hz += 0.5 * (tu(UZ) + tv(VZ) - kn * m.v[UT] * m.v[VZ] + kn * m.v[VT] * m.v[UZ]);
                ph += 0.5 * (tu(XI) + tv(ZE) - kn * m.v[UT] * m.v[ZE] + kn * m.v[VT] * m.v[XI])
                    - 0.5 * (w * m.v[UR] * m.v[XI] + w * m.v[VR] * m.v[ZE]);
            }
            out.h_r.values[idx] = hr;
            out.h_theta.values[idx] = ht;
            out.h_z.values[idx] = hz;
            out.phi.values[idx] = ph;
        }
    }
    out
}

/// `F_k, G_k, φ_k, ψ_k` for `k = 1..=K`.
pub fn mode_sources(s: &SpectralState) -> Vec<ModeSources> {
    mode_sources_prepared(&Prepared::new(s))
}

/// The four `(s1, s2, c1, c2)` groups of pair `(a, b)` for the target
/// components `r, θ, z, η` at one point.
#[inline]
fn pair_groups(a: &Pt, b: &Pt, bn: f64, ir: f64, w: f64) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for (c, o) in out.iter_mut().enumerate() {
        let (ui, vi) = (2 * c, 2 * c + 1);
        let t_u_vb = a.v[UR] * b.dr[vi] + a.v[UZ] * b.dz[vi];
        let t_v_ub = a.v[VR] * b.dr[ui] + a.v[VZ] * b.dz[ui];
        let t_u_ub = a.v[UR] * b.dr[ui] + a.v[UZ] * b.dz[ui];
        let t_v_vb = a.v[VR] * b.dr[vi] + a.v[VZ] * b.dz[vi];
        o[0] = t_u_vb + bn * a.v[UT] * b.v[ui];
        o[1] = t_v_ub - bn * a.v[VT] * b.v[vi];
        o[2] = t_u_ub - bn * a.v[UT] * b.v[vi];
        o[3] = t_v_vb + bn * a.v[VT] * b.v[ui];
    }
    // centrifugal products in the r equation
    out[0][0] -= ir * a.v[UT] * b.v[VT];
    out[0][1] -= ir * a.v[VT] * b.v[UT];
    out[0][2] -= ir * a.v[UT] * b.v[UT];
    out[0][3] -= ir * a.v[VT] * b.v[VT];
    // u^r u^θ / r in the θ equation
    out[1][0] += ir * a.v[UR] * b.v[VT];
    out[1][1] += ir * a.v[VR] * b.v[UT];
    out[1][2] += ir * a.v[UR] * b.v[UT];
    out[1][3] += ir * a.v[VR] * b.v[VT];
    // temperature weight products
    out[3][0] -= w * a.v[UR] * b.v[ZE];
    out[3][1] -= w * a.v[VR] * b.v[XI];
    out[3][2] -= w * a.v[UR] * b.v[XI];
    out[3][3] -= w * a.v[VR] * b.v[ZE];
    out
}

pub fn mode_sources_prepared(p: &Prepared) -> Vec<ModeSources> {
    let s = p.state;
    let g = &s.grid;
    let kk = s.modes.len();
    let mut out: Vec<ModeSources> = (1..=kk).map(|k| ModeSources::zeros(g, k)).collect();
    let mut pts = vec![Pt::default(); kk];
    // sine and cosine accumulators per k and component
    let mut fs = vec![[0.0_f64; 4]; kk + 1];
    let mut gs = vec![[0.0_f64; 4]; kk + 1];
    for j in 0..g.nr {
        let r = g.r()[j];
        let ir = 1.0 / r;
        let w = temp_weight(r);
        for i in 0..g.nz {
            let idx = g.idx(j, i);
            gather(p, idx, &mut pts);
            fs.iter_mut().for_each(|x| *x = [0.0; 4]);
            gs.iter_mut().for_each(|x| *x = [0.0; 4]);
            for a in 1..=kk {
                for b in 1..=kk {
                    let sum = a + b;
                    let d = a.abs_diff(b);
                    if sum > kk && d == 0 {
                        continue;
                    }
                    let bn = s.wavenumber(b) * ir;
                    let grp = pair_groups(&pts[a - 1], &pts[b - 1], bn, ir, w);
                    if sum <= kk {
                        for c in 0..4 {
                            fs[sum][c] += grp[c][0] + grp[c][1];
                            gs[sum][c] += grp[c][3] - grp[c][2];
                        }
                    }
                    if d >= 1 {
                        for c in 0..4 {
                            let sgn = if a > b { 1.0 } else { -1.0 };
                            fs[d][c] += sgn * (grp[c][0] - grp[c][1]);
                            gs[d][c] += grp[c][2] + grp[c][3];
                        }
                    }
                }
            }
            for (k, o) in out.iter_mut().enumerate() {
                let (f, gg) = (&fs[k + 1], &gs[k + 1]);
                o.f_r.values[idx] = 0.5 * f[0];
                o.g_r.values[idx] = 0.5 * gg[0];
                o.f_theta.values[idx] = 0.5 * f[1];
                o.g_theta.values[idx] = 0.5 * gg[1];
                o.f_z.values[idx] = 0.5 * f[2];
                o.g_z.values[idx] = 0.5 * gg[2];
                o.phi.values[idx] = 0.5 * f[3];
                o.psi.values[idx] = 0.5 * gg[3];
            }
        }
    }
    out
}

/// Both families of sources from one set of derivatives.
pub fn sources(s: &SpectralState) -> SourceSet {
    let p = Prepared::new(s);
    SourceSet {
        lead: lead_sources_prepared(&p),
        modes: mode_sources_prepared(&p),
    }
}

/// Lead-mode interaction terms, split by how they scale with the state.
///
/// `bilinear` and `linear` carry the sign they have on the left-hand side
/// of the evolution equations; `buoyancy` carries its right-hand-side sign.
/// The time derivative of each evolved field therefore receives
/// `-bilinear - linear + buoyancy - source`.
#[derive(Debug, Clone, PartialEq)]
pub struct Couplings {
    /// Lead transport of every field, `Ũ_k·∇̃(lead)`, exchange, centrifugal
    /// and temperature-weight products, and the lead self-interaction.
    pub bilinear: SourceSet,
    /// The `±2kN/r²` terms coupling sine and cosine components of one mode.
    pub linear: SourceSet,
    /// `ξ/(1+r²)` forcing of the vertical momentum equations.
    pub buoyancy: SourceSet,
}

pub fn linear_couplings(s: &SpectralState) -> Couplings {
    linear_couplings_prepared(&Prepared::new(s))
}

pub fn linear_couplings_prepared(p: &Prepared) -> Couplings {
    let s = p.state;
    let g = &s.grid;
    let kk = s.modes.len();
    let mut bil = SourceSet::zeros(g, kk);
    let mut lin = SourceSet::zeros(g, kk);
    let mut buo = SourceSet::zeros(g, kk);
    let mut pts = vec![Pt::default(); kk];
    for j in 0..g.nr {
        let r = g.r()[j];
        let ir = 1.0 / r;
        let w = temp_weight(r);
        let damp = 1.0 / (1.0 + r * r);
        for i in 0..g.nz {
            let idx = g.idx(j, i);
            gather(p, idx, &mut pts);
            let lv = |f: usize| p.lead[f][0][idx];
            let ldr = |f: usize| p.lead[f][1][idx];
            let ldz = |f: usize| p.lead[f][2][idx];
            let (ur, ut, uz, xi) = (lv(LR), lv(LT), lv(LZ), lv(LX));
            let a_lead = |f: usize| ur * ldr(f) + uz * ldz(f);

            bil.lead.h_r.values[idx] = a_lead(LR) - ir * ut * ut;
            bil.lead.h_theta.values[idx] = a_lead(LT) + ir * ur * ut;
            bil.lead.h_z.values[idx] = a_lead(LZ);
            bil.lead.phi.values[idx] = a_lead(LX) - w * ur * xi;
            buo.lead.h_z.values[idx] = damp * xi;

            for (n, m) in pts.iter().enumerate() {
                let k = n + 1;
                let kn = s.wavenumber(k) * ir;
                let kn2 = 2.0 * s.wavenumber(k) * ir * ir;
                let a = |f: usize| ur * m.dr[f] + uz * m.dz[f];
                let tu = |f: usize| m.v[UR] * ldr(f) + m.v[UZ] * ldz(f);
                let tv = |f: usize| m.v[VR] * ldr(f) + m.v[VZ] * ldz(f);
                let v = &m.v;

                let b = &mut bil.modes[n];
                b.f_r.values[idx] = a(UR) + tu(LR) - kn * ut * v[VR] - 2.0 * ir * v[UT] * ut;
                b.g_r.values[idx] = a(VR) + tv(LR) + kn * ut * v[UR] - 2.0 * ir * ut * v[VT];
                b.f_theta.values[idx] =
                    a(UT) + tu(LT) - kn * ut * v[VT] + ir * (ur * v[UT] + v[UR] * ut);
                b.g_theta.values[idx] =
                    a(VT) + tv(LT) + kn * ut * v[UT] + ir * (ur * v[VT] + v[VR] * ut);
                b.f_z.values[idx] = a(UZ) + tu(LZ) - kn * ut * v[VZ];
                b.g_z.values[idx] = a(VZ) + tv(LZ) + kn * ut * v[UZ];
                b.phi.values[idx] =
                    a(XI) + tu(LX) - kn * ut * v[ZE] - w * ur * v[XI] - w * v[UR] * xi;
                b.psi.values[idx] =
                    a(ZE) + tv(LX) + kn * ut * v[XI] - w * ur * v[ZE] - w * v[VR] * xi;

                let l = &mut lin.modes[n];
                l.f_r.values[idx] = -kn2 * v[VT];
                l.g_r.values[idx] = kn2 * v[UT];
                l.f_theta.values[idx] = kn2 * v[VR];
                l.g_theta.values[idx] = -kn2 * v[UR];

                let q = &mut buo.modes[n];
                q.f_z.values[idx] = damp * v[XI];
                q.g_z.values[idx] = damp * v[ZE];
            }
        }
    }
    Couplings {
        bilinear: bil,
        linear: lin,
        buoyancy: buo,
    }
}

/// Minimum number of angular samples for alias-free projection of
/// quadratic products of a `K`-mode series.
pub fn min_oracle_samples(k: usize) -> usize {
    3 * k + 1
}

/// Transform-based evaluation of the mode sources: sample the modes-only
/// fields at `m` values of `φ = Nθ`, form the quadratic terms of the
/// physical-space equations and project back onto `1, sin kφ, cos kφ`.
pub fn pseudospectral_oracle(s: &SpectralState, m: usize) -> Result<SourceSet, OracleError> {
    project_quadratic(&s.modes_only(), m)
}

/// Same transform applied to the full state (lead included). Its lead part
/// equals `H + bilinear(lead)` and its mode part `F/G + bilinear(mode)`.
pub fn project_quadratic(s: &SpectralState, m: usize) -> Result<SourceSet, OracleError> {
    let kk = s.modes.len();
    let min = min_oracle_samples(kk);
    if m < min {
        return Err(OracleError::TooFewSamples { m, min, k: kk });
    }
    Ok(project_quadratic_unchecked(s, m))
}

/// Projection without the sample-count guard; used to measure aliasing.
pub fn project_quadratic_unchecked(s: &SpectralState, m: usize) -> SourceSet {
    let g = &s.grid;
    let kk = s.modes.len();
    let nbase = s.n as f64;

    // coefficient fields with derivatives: [component][coefficient][value/dr/dz]
    // component order r, θ, z, η; coefficient 0 is the lead, then (U_k, V_k).
    let lead_f = [
        LeadField::Ur,
        LeadField::Utheta,
        LeadField::Uz,
        LeadField::Xi,
    ];
    let mode_f = [
        (ModeField::Ur, ModeField::Vr),
        (ModeField::Utheta, ModeField::Vtheta),
        (ModeField::Uz, ModeField::Vz),
        (ModeField::Xi, ModeField::Zeta),
    ];
    let mut coef: Vec<Vec<[Vec<f64>; 3]>> = Vec::with_capacity(4);
    for c in 0..4 {
        let mut v = Vec::with_capacity(2 * kk + 1);
        let lf = lead_f[c];
        v.push(with_derivs(g, s.lead.field(lf), lf.parity()));
        for md in &s.modes {
            v.push(with_derivs(g, md.field(mode_f[c].0), Parity::Odd));
            v.push(with_derivs(g, md.field(mode_f[c].1), Parity::Odd));
        }
        coef.push(v);
    }

    let phis: Vec<f64> = (0..m).map(|jj| 2.0 * PI * jj as f64 / m as f64).collect();
    let sin_t: Vec<Vec<f64>> = phis
        .iter()
        .map(|&ph| (0..=kk).map(|k| (k as f64 * ph).sin()).collect())
        .collect();
    let cos_t: Vec<Vec<f64>> = phis
        .iter()
        .map(|&ph| (0..=kk).map(|k| (k as f64 * ph).cos()).collect())
        .collect();

    let mut out = SourceSet::zeros(g, kk);
    let mf = m as f64;
    for j in 0..g.nr {
        let r = g.r()[j];
        let w = temp_weight(r);
        for i in 0..g.nz {
            let idx = g.idx(j, i);
            let mut mean = [0.0_f64; 4];
            let mut sn = vec![[0.0_f64; 4]; kk + 1];
            let mut cs = vec![[0.0_f64; 4]; kk + 1];
            for jj in 0..m {
                let (st, ct) = (&sin_t[jj], &cos_t[jj]);
                // value, d_r, d_z and d_θ of each component
                let mut val = [[0.0_f64; 4]; 4];
                for c in 0..4 {
                    let cf = &coef[c];
                    let mut acc = [cf[0][0][idx], cf[0][1][idx], cf[0][2][idx], 0.0];
                    for k in 1..=kk {
                        let (u, v) = (&cf[2 * k - 1], &cf[2 * k]);
                        let (sk, ck) = (st[k], ct[k]);
                        for d in 0..3 {
                            acc[d] += u[d][idx] * sk + v[d][idx] * ck;
                        }
                        acc[3] += nbase * k as f64 * (u[0][idx] * ck - v[0][idx] * sk);
                    }
                    val[c] = acc;
                }
                let (ur, ut, uz) = (val[0][0], val[1][0], val[2][0]);
                let adv = |c: usize| ur * val[c][1] + uz * val[c][2] + ut / r * val[c][3];
                let nl = [
                    adv(0) - ut * ut / r,
                    adv(1) + ur * ut / r,
                    adv(2),
                    adv(3) - w * ur * val[3][0],
                ];
                for c in 0..4 {
                    mean[c] += nl[c];
                    for k in 1..=kk {
                        sn[k][c] += nl[c] * st[k];
                        cs[k][c] += nl[c] * ct[k];
                    }
                }
            }
            out.lead.h_r.values[idx] = mean[0] / mf;
            out.lead.h_theta.values[idx] = mean[1] / mf;
            out.lead.h_z.values[idx] = mean[2] / mf;
            out.lead.phi.values[idx] = mean[3] / mf;
            for (n, o) in out.modes.iter_mut().enumerate() {
                let (a, b) = (&sn[n + 1], &cs[n + 1]);
                o.f_r.values[idx] = 2.0 * a[0] / mf;
                o.g_r.values[idx] = 2.0 * b[0] / mf;
                o.f_theta.values[idx] = 2.0 * a[1] / mf;
                o.g_theta.values[idx] = 2.0 * b[1] / mf;
                o.f_z.values[idx] = 2.0 * a[2] / mf;
                o.g_z.values[idx] = 2.0 * b[2] / mf;
                o.phi.values[idx] = 2.0 * a[3] / mf;
                o.psi.values[idx] = 2.0 * b[3] / mf;
            }
        }
    }
    out
}

/// Elementwise `a + b` for two source sets of equal shape.
pub fn add_sets(a: &SourceSet, b: &SourceSet) -> SourceSet {
    let mut out = a.clone();
    for f in LeadField::EVOLVED {
        if let (Some(o), Some(x)) = (out.lead.for_field_mut(f), b.lead.for_field(f)) {
            o.add_assign(x);
        }
    }
    for (o, x) in out.modes.iter_mut().zip(&b.modes) {
        for f in ModeField::EVOLVED {
            if let (Some(oo), Some(xx)) = (o.for_field_mut(f), x.for_field(f)) {
                oo.add_assign(xx);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::ModeState;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Grid {
        Grid::new(2.0, 2.0, 10, 12).unwrap()
    }

    fn random_state(g: &Grid, n: usize, k: usize, seed: u64, with_lead: bool) -> SpectralState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = SpectralState::zeros(g, n, k);
        let mut fill = |f: &mut ScalarField| {
            for v in &mut f.values {
                *v = rng.random_range(-1.0..1.0);
            }
        };
        if with_lead {
            for lf in LeadField::EVOLVED {
                fill(s.lead.field_mut(lf));
            }
        }
        for m in &mut s.modes {
            for mf in ModeField::EVOLVED {
                fill(m.field_mut(mf));
            }
        }
        s
    }

    fn rel(a: &SourceSet, b: &SourceSet) -> f64 {
        a.max_abs_diff(b) / b.max_abs().max(1e-300)
    }

    #[test]
    fn zero_state_gives_zero_sources() {
        let s = SpectralState::zeros(&grid(), 3, 4);
        let src = sources(&s);
        assert_eq!(src.max_abs(), 0.0);
        let c = linear_couplings(&s);
        assert_eq!(
            c.bilinear.max_abs() + c.linear.max_abs() + c.buoyancy.max_abs(),
            0.0
        );
        assert_eq!(pseudospectral_oracle(&s, 20).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn single_swirl_mode() {
        let g = grid();
        let n = 3;
        let mut s = SpectralState::zeros(&g, n, 3);
        s.modes[0].u_theta = ScalarField::from_fn(&g, |r, z| r * (-r * r - z * z).exp());
        let src = sources(&s);
        let gg = &s.modes[0].u_theta;
        for j in 0..g.nr {
            let r = g.r()[j];
            for i in 0..g.nz {
                let v = gg.at(j, i);
                assert!((src.lead.h_r.at(j, i) + v * v / (2.0 * r)).abs() < 1e-15);
                assert!(
                    (src.modes[1].f_theta.at(j, i) - n as f64 / (2.0 * r) * v * v).abs() < 1e-14
                );
                assert!((src.modes[1].g_r.at(j, i) - v * v / (2.0 * r)).abs() < 1e-15);
            }
        }
        assert_eq!(
            src.lead.h_theta.max_abs() + src.lead.h_z.max_abs() + src.lead.phi.max_abs(),
            0.0
        );
        for (k, m) in src.modes.iter().enumerate() {
            for f in ModeField::EVOLVED {
                let expect_nonzero = k == 1 && matches!(f, ModeField::Utheta | ModeField::Vr);
                if !expect_nonzero {
                    assert_eq!(
                        m.for_field(f).unwrap().max_abs(),
                        0.0,
                        "k={} {:?}",
                        k + 1,
                        f
                    );
                }
            }
        }
        let orc = pseudospectral_oracle(&s, 16).unwrap();
        assert!(rel(&src, &orc) < 1e-13);
    }

    #[test]
    fn oracle_matches_convolution() {
        let g = grid();
        for (seed, (n, k)) in [(2, 2), (4, 4), (3, 5)].into_iter().enumerate() {
            let s = random_state(&g, n, k, seed as u64, true);
            let src = sources(&s);
            let orc = pseudospectral_oracle(&s, 4 * k + 4).unwrap();
            assert!(rel(&src, &orc) < 1e-12, "N={n} K={k}: {}", rel(&src, &orc));
        }
    }

    #[test]
    fn full_projection_is_sources_plus_bilinear() {
        let g = grid();
        let s = random_state(&g, 2, 3, 11, true);
        let full = project_quadratic(&s, 16).unwrap();
        let c = linear_couplings(&s);
        let expect = add_sets(&sources(&s), &c.bilinear);
        assert!(rel(&expect, &full) < 1e-12, "{}", rel(&expect, &full));
    }

    #[test]
    fn too_few_samples_rejected_and_aliasing_visible() {
        let g = grid();
        let s = random_state(&g, 2, 4, 5, false);
        assert!(matches!(
            pseudospectral_oracle(&s, 12),
            Err(OracleError::TooFewSamples { min: 13, .. })
        ));
        let good = pseudospectral_oracle(&s, 20).unwrap();
        let aliased = project_quadratic_unchecked(&s.modes_only(), 8);
        assert!(rel(&aliased, &good) > 1e-3);
    }

    #[test]
    fn support_of_sources() {
        let g = grid();
        let mut s = random_state(&g, 2, 7, 9, false);
        for m in s.modes.iter_mut().skip(2) {
            *m = ModeState::zeros(&g, m.k);
        }
        let src = mode_sources(&s);
        for m in src.iter().skip(4) {
            for f in ModeField::EVOLVED {
                assert_eq!(m.for_field(f).unwrap().max_abs(), 0.0);
            }
        }
        assert!(src[3].f_r.max_abs() > 0.0);
    }

    #[test]
    fn coupling_examples() {
        let g = grid();
        let n = 2;
        // lead swirl h and mode V_1^r = w
        let mut s = SpectralState::zeros(&g, n, 2);
        s.lead.u_theta = ScalarField::from_fn(&g, |r, z| r * (-z * z).exp());
        s.modes[0].v_r = ScalarField::from_fn(&g, |r, z| r * (1.0 + z));
        let c = linear_couplings(&s);
        for j in 0..g.nr {
            let r = g.r()[j];
            for i in 0..g.nz {
                let h = s.lead.u_theta.at(j, i);
                let wv = s.modes[0].v_r.at(j, i);
                assert!((c.bilinear.modes[0].f_r.at(j, i) + n as f64 / r * h * wv).abs() < 1e-14);
            }
        }
        // buoyancy
        let mut s = SpectralState::zeros(&g, n, 2);
        s.modes[0].xi = ScalarField::from_fn(&g, |r, z| r * (-z * z).exp());
        let c = linear_couplings(&s);
        for j in 0..g.nr {
            let r = g.r()[j];
            for i in 0..g.nz {
                let q = s.modes[0].xi.at(j, i);
                assert!((c.buoyancy.modes[0].f_z.at(j, i) - q / (1.0 + r * r)).abs() < 1e-15);
            }
        }
        assert_eq!(c.bilinear.max_abs(), 0.0);
    }

    #[test]
    fn zero_lead_leaves_only_intra_mode_terms() {
        let g = grid();
        let s = random_state(&g, 2, 3, 3, false);
        let c = linear_couplings(&s);
        assert!(c.linear.max_abs() > 0.0);
        assert!(c.buoyancy.max_abs() > 0.0);
        assert_eq!(c.bilinear.max_abs(), 0.0);
    }

    #[test]
    fn scaling_by_category() {
        let g = grid();
        let s = random_state(&g, 3, 3, 21, true);
        let lam = 3.0;
        let mut s2 = s.clone();
        s2.scale_by(lam);
        let (a, b) = (sources(&s), sources(&s2));
        let mut a2 = a.clone();
        for f in LeadField::EVOLVED {
            if let Some(x) = a2.lead.for_field_mut(f) {
                x.scale(lam * lam);
            }
        }
        for m in &mut a2.modes {
            for f in ModeField::EVOLVED {
                m.for_field_mut(f).unwrap().scale(lam * lam);
            }
        }
        assert!(rel(&b, &a2) < 1e-13);
        let (c1, c2) = (linear_couplings(&s), linear_couplings(&s2));
        let ratio = |x: &SourceSet, y: &SourceSet| y.max_abs() / x.max_abs();
        assert!((ratio(&c1.bilinear, &c2.bilinear) - lam * lam).abs() < 1e-10);
        assert!((ratio(&c1.linear, &c2.linear) - lam).abs() < 1e-12);
        assert!((ratio(&c1.buoyancy, &c2.buoyancy) - lam).abs() < 1e-12);
    }
}
