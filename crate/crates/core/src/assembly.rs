//! Physical fields from the spectral state: angular synthesis, assembled
//! norms and the residual of the original three-dimensional system.

use crate::grid::{Grid, Parity, ScalarField};
use crate::state::{LeadField, ModeField, SpectralState};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("{got} angular samples, need at least {need}")]
    TooFewSamples { got: usize, need: usize },
    #[error("snapshots differ in {0}")]
    Mismatch(&'static str),
    #[error("time step {0} must be positive")]
    BadStep(f64),
}

/// Physical component assembled from a lead field and mode pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    R,
    Theta,
    Z,
    Pressure,
    Eta,
}

impl Component {
    pub const ALL: [Component; 5] = [
        Component::R,
        Component::Theta,
        Component::Z,
        Component::Pressure,
        Component::Eta,
    ];

    fn lead(self) -> LeadField {
        match self {
            Component::R => LeadField::Ur,
            Component::Theta => LeadField::Utheta,
            Component::Z => LeadField::Uz,
            Component::Pressure => LeadField::Pi,
            Component::Eta => LeadField::Xi,
        }
    }

    /// `(sine, cosine)` coefficient fields.
    fn pair(self) -> (ModeField, ModeField) {
        match self {
            Component::R => (ModeField::Ur, ModeField::Vr),
            Component::Theta => (ModeField::Utheta, ModeField::Vtheta),
            Component::Z => (ModeField::Uz, ModeField::Vz),
            Component::Pressure => (ModeField::Q, ModeField::R),
            Component::Eta => (ModeField::Xi, ModeField::Zeta),
        }
    }
}

/// `f(θ) = lead + Σ_k (sine_k sin(kNθ) + cosine_k cos(kNθ))`.
pub fn synthesize(s: &SpectralState, c: Component, theta: f64) -> ScalarField {
    let mut out = s.lead.field(c.lead()).clone();
    let (fs, fc) = c.pair();
    for m in &s.modes {
        let ph = s.wavenumber(m.k) * theta;
        out.axpy(ph.sin(), m.field(fs));
        out.axpy(ph.cos(), m.field(fc));
    }
    out
}

/// `∂_θ f(θ)`.
pub fn synthesize_dtheta(s: &SpectralState, c: Component, theta: f64) -> ScalarField {
    let mut out = ScalarField::zeros(&s.grid);
    let (fs, fc) = c.pair();
    for m in &s.modes {
        let kn = s.wavenumber(m.k);
        let ph = kn * theta;
        out.axpy(kn * ph.cos(), m.field(fs));
        out.axpy(-kn * ph.sin(), m.field(fc));
    }
    out
}

/// Fields sampled at `θ_j = 2πj/(M N)`, one period of the ansatz.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub thetas: Vec<f64>,
    pub u_r: Vec<ScalarField>,
    pub u_theta: Vec<ScalarField>,
    pub u_z: Vec<ScalarField>,
    pub pi: Vec<ScalarField>,
    pub eta: Vec<ScalarField>,
    pub rho: Vec<ScalarField>,
}

pub fn min_samples(k_trunc: usize) -> usize {
    2 * k_trunc + 2
}

pub fn assemble(s: &SpectralState, m_theta: usize) -> Result<Assembled, AssemblyError> {
    let need = min_samples(s.k_trunc);
    if m_theta < need {
        return Err(AssemblyError::TooFewSamples { got: m_theta, need });
    }
    let thetas: Vec<f64> = (0..m_theta)
        .map(|j| 2.0 * PI * j as f64 / (m_theta * s.n) as f64)
        .collect();
    let all = |c| {
        thetas
            .iter()
            .map(|&t| synthesize(s, c, t))
            .collect::<Vec<_>>()
    };
    let eta = all(Component::Eta);
    let rho = eta
        .iter()
        .map(|e| {
            let mut r = e.clone();
            r.mul_radial(&s.grid, |r| 1.0 / (1.0 + r * r));
            r
        })
        .collect();
    Ok(Assembled {
        u_r: all(Component::R),
        u_theta: all(Component::Theta),
        u_z: all(Component::Z),
        pi: all(Component::Pressure),
        eta,
        rho,
        thetas,
    })
}

/// Norms of the assembled velocity `u` and temperature variable `η`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AssembledNorms {
    pub u_l2: f64,
    pub eta_l2: f64,
    pub u_theta_l2: f64,
    pub grad_u_l2: f64,
    pub grad_eta_l2: f64,
    /// `‖u‖^5_{L^5}`
    pub u_l5_pow: f64,
    /// `‖u^θ‖^5_{L^5}`
    pub u_theta_l5_pow: f64,
}

/// Values and `(∂_r, ∂_z, ∂_θ)` of one component at one angle.
struct Jet {
    v: ScalarField,
    r: ScalarField,
    z: ScalarField,
    t: ScalarField,
}

/// Coefficient fields with their meridional derivatives.
struct Prepared {
    coef: ScalarField,
    dr: ScalarField,
    dz: ScalarField,
}

fn prepare(g: &Grid, f: &ScalarField, parity: Parity) -> Prepared {
    Prepared {
        coef: f.clone(),
        dr: g.d_r(f, parity),
        dz: g.d_z(f),
    }
}

struct ComponentCoefs {
    lead: Prepared,
    modes: Vec<(f64, Prepared, Prepared)>,
}

fn component_coefs(s: &SpectralState, c: Component) -> ComponentCoefs {
    let g = &s.grid;
    let lf = c.lead();
    let (fs, fc) = c.pair();
    ComponentCoefs {
        lead: prepare(g, s.lead.field(lf), lf.parity()),
        modes: s
            .modes
            .iter()
            .map(|m| {
                (
                    s.wavenumber(m.k),
                    prepare(g, m.field(fs), Parity::Odd),
                    prepare(g, m.field(fc), Parity::Odd),
                )
            })
            .collect(),
    }
}

fn jet(g: &Grid, c: &ComponentCoefs, theta: f64) -> Jet {
    let mut j = Jet {
        v: c.lead.coef.clone(),
        r: c.lead.dr.clone(),
        z: c.lead.dz.clone(),
        t: ScalarField::zeros(g),
    };
    for (kn, u, v) in &c.modes {
        let (sn, cs) = (kn * theta).sin_cos();
        j.v.axpy(sn, &u.coef);
        j.v.axpy(cs, &v.coef);
        j.r.axpy(sn, &u.dr);
        j.r.axpy(cs, &v.dr);
        j.z.axpy(sn, &u.dz);
        j.z.axpy(cs, &v.dz);
        j.t.axpy(kn * cs, &u.coef);
        j.t.axpy(-kn * sn, &v.coef);
    }
    j
}

/// Norms by angular quadrature with `4K + 4` samples over one period.
pub fn assembled_norms(s: &SpectralState) -> AssembledNorms {
    let g = &s.grid;
    let m = 4 * s.k_trunc + 4;
    let coefs: Vec<ComponentCoefs> = [Component::R, Component::Theta, Component::Z, Component::Eta]
        .iter()
        .map(|&c| component_coefs(s, c))
        .collect();
    // accumulated per node, then integrated
    let mut acc = vec![[0.0_f64; 7]; g.len()];
    for l in 0..m {
        let theta = 2.0 * PI * l as f64 / (m * s.n) as f64;
        let [jr, jt, jz, je]: [Jet; 4] = [
            jet(g, &coefs[0], theta),
            jet(g, &coefs[1], theta),
            jet(g, &coefs[2], theta),
            jet(g, &coefs[3], theta),
        ];
        for j in 0..g.nr {
            let ir = 1.0 / g.r()[j];
            for i in 0..g.nz {
                let k = g.idx(j, i);
                let (ur, ut, uz) = (jr.v.values[k], jt.v.values[k], jz.v.values[k]);
                let u2 = ur * ur + ut * ut + uz * uz;
                let eta = je.v.values[k];
                let mer = |q: &Jet| q.r.values[k].powi(2) + q.z.values[k].powi(2);
                let grad_u = mer(&jr)
                    + mer(&jt)
                    + mer(&jz)
                    + ir * ir
                        * ((jr.t.values[k] - ut).powi(2)
                            + (jt.t.values[k] + ur).powi(2)
                            + jz.t.values[k].powi(2));
                let grad_eta = mer(&je) + (ir * je.t.values[k]).powi(2);
                let a = &mut acc[k];
                a[0] += u2;
                a[1] += eta * eta;
                a[2] += ut * ut;
                a[3] += grad_u;
                a[4] += grad_eta;
                a[5] += u2 * u2 * u2.sqrt();
                a[6] += ut.abs().powi(5);
            }
        }
    }
    let mut tot = [0.0_f64; 7];
    for j in 0..g.nr {
        for i in 0..g.nz {
            let w = g.weight(j, i) / m as f64;
            for (t, a) in tot.iter_mut().zip(&acc[g.idx(j, i)]) {
                *t += w * a;
            }
        }
    }
    AssembledNorms {
        u_l2: tot[0].sqrt(),
        eta_l2: tot[1].sqrt(),
        u_theta_l2: tot[2].sqrt(),
        grad_u_l2: tot[3].sqrt(),
        grad_eta_l2: tot[4].sqrt(),
        u_l5_pow: tot[5],
        u_theta_l5_pow: tot[6],
    }
}

/// `‖u‖_{L²}` from the coefficients alone.
pub fn plancherel_u_l2(s: &SpectralState) -> f64 {
    let g = &s.grid;
    let sq = |f: &ScalarField| g.inner(f, f);
    let l = &s.lead;
    let mut total = sq(&l.u_r) + sq(&l.u_theta) + sq(&l.u_z);
    for m in &s.modes {
        total += 0.5
            * (sq(&m.u_r) + sq(&m.u_theta) + sq(&m.u_z) + sq(&m.v_r) + sq(&m.v_theta) + sq(&m.v_z));
    }
    total.sqrt()
}

// ---------------------------------------------------------------------------
// residual of the Cartesian system

/// Sub-region of the meridional plane where the residual is measured, as
/// fractions of `R` and `Zmax`.
pub const RESIDUAL_REGION: f64 = 0.8;

/// Full-circle samples `[l][node]` of a scalar.
type Circle = Vec<Vec<f64>>;

fn circle(s: &SpectralState, c: Component, thetas: &[f64]) -> Circle {
    thetas.iter().map(|&t| synthesize(s, c, t).values).collect()
}

/// `(∂_θ f, ∂_θ² f)` by FFT along the circle at every node.
fn theta_derivatives(f: &Circle, planner: &mut FftPlanner<f64>) -> (Circle, Circle) {
    let l = f.len();
    let npts = f[0].len();
    let fwd = planner.plan_fft_forward(l);
    let inv = planner.plan_fft_inverse(l);
    let mut d1 = vec![vec![0.0; npts]; l];
    let mut d2 = vec![vec![0.0; npts]; l];
    let mut buf = vec![Complex::new(0.0, 0.0); l];
    let mut b2 = buf.clone();
    for p in 0..npts {
        for (q, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(f[q][p], 0.0);
        }
        fwd.process(&mut buf);
        for q in 0..l {
            let m = if q <= l / 2 {
                q as f64
            } else {
                q as f64 - l as f64
            };
            let nyquist = l.is_multiple_of(2) && q == l / 2;
            b2[q] = buf[q] * (-m * m);
            buf[q] = if nyquist {
                Complex::new(0.0, 0.0)
            } else {
                buf[q] * Complex::new(0.0, m)
            };
        }
        inv.process(&mut buf);
        inv.process(&mut b2);
        for q in 0..l {
            d1[q][p] = buf[q].re / l as f64;
            d2[q][p] = b2[q].re / l as f64;
        }
    }
    (d1, d2)
}

/// Fourth-order `(∂_r, ∂_r²)` at node `(j, i)` of sample `q`, with ghost
/// values across the axis taken from the opposite sample.
fn radial_derivs(g: &Grid, f: &Circle, q: usize, j: usize, i: usize) -> (f64, f64) {
    let l = f.len();
    let opp = (q + l / 2) % l;
    let at = |jj: isize| -> f64 {
        if jj >= 0 {
            f[q][g.idx(jj as usize, i)]
        } else {
            f[opp][g.idx((-jj - 1) as usize, i)]
        }
    };
    let j = j as isize;
    let (m2, m1, c0, p1, p2) = (at(j - 2), at(j - 1), at(j), at(j + 1), at(j + 2));
    let h = g.dr;
    (
        (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h),
        (-m2 + 16.0 * m1 - 30.0 * c0 + 16.0 * p1 - p2) / (12.0 * h * h),
    )
}

fn z_derivs(g: &Grid, f: &[f64], j: usize, i: usize) -> (f64, f64) {
    let at = |ii: usize| f[g.idx(j, ii)];
    let (m2, m1, c0, p1, p2) = (at(i - 2), at(i - 1), at(i), at(i + 1), at(i + 2));
    let h = g.dz;
    (
        (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h),
        (-m2 + 16.0 * m1 - 30.0 * c0 + 16.0 * p1 - p2) / (12.0 * h * h),
    )
}

/// Number of full-circle samples used by [`pde_residual`].
pub fn residual_samples(s: &SpectralState) -> usize {
    let top = s.k_trunc * s.n + 1;
    let mut l = 4 * top + 4;
    if l % 2 == 1 {
        l += 1;
    }
    l
}

/// `L²` norm over [`RESIDUAL_REGION`] of the momentum and temperature
/// residuals of the Cartesian system, with time derivatives from the two
/// snapshots, all other terms at their midpoint, and the pressure of
/// `next`.
pub fn pde_residual(
    prev: &SpectralState,
    next: &SpectralState,
    dt: f64,
) -> Result<f64, AssemblyError> {
    if prev.n != next.n {
        return Err(AssemblyError::Mismatch("N"));
    }
    if prev.k_trunc != next.k_trunc {
        return Err(AssemblyError::Mismatch("K"));
    }
    if prev.grid != next.grid {
        return Err(AssemblyError::Mismatch("grid"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(AssemblyError::BadStep(dt));
    }
    let g = &prev.grid;
    let mid = SpectralState::midpoint(prev, next);
    let l = residual_samples(prev);
    let thetas: Vec<f64> = (0..l).map(|q| 2.0 * PI * q as f64 / l as f64).collect();
    let (sn, cs): (Vec<f64>, Vec<f64>) = thetas.iter().map(|t| t.sin_cos()).unzip();

    // Cartesian components (x, y, z, η) on the circle
    let cart = |s: &SpectralState| -> [Circle; 4] {
        let ur = circle(s, Component::R, &thetas);
        let ut = circle(s, Component::Theta, &thetas);
        let mut ux = ur.clone();
        let mut uy = ur.clone();
        for q in 0..l {
            for p in 0..g.len() {
                ux[q][p] = ur[q][p] * cs[q] - ut[q][p] * sn[q];
                uy[q][p] = ur[q][p] * sn[q] + ut[q][p] * cs[q];
            }
        }
        [
            ux,
            uy,
            circle(s, Component::Z, &thetas),
            circle(s, Component::Eta, &thetas),
        ]
    };
    let c0 = cart(prev);
    let c1 = cart(next);
    let cm = cart(&mid);
    let ur_m = circle(&mid, Component::R, &thetas);
    let ut_m = circle(&mid, Component::Theta, &thetas);
    let pres = circle(next, Component::Pressure, &thetas);

    let mut planner = FftPlanner::new();
    let dth: Vec<(Circle, Circle)> = cm
        .iter()
        .map(|f| theta_derivatives(f, &mut planner))
        .collect();
    let (p_th, _) = theta_derivatives(&pres, &mut planner);

    let r_lim = RESIDUAL_REGION * g.r_max;
    let z_lim = RESIDUAL_REGION * g.z_max;
    let mut total = 0.0;
    for j in 0..g.nr {
        let r = g.r()[j];
        if r > r_lim || j + 2 >= g.nr {
            continue;
        }
        let ir = 1.0 / r;
        let damp = 1.0 / (1.0 + r * r);
        for i in 2..g.nz - 2 {
            if g.z()[i].abs() > z_lim {
                continue;
            }
            let p = g.idx(j, i);
            let mut node = 0.0;
            for q in 0..l {
                let (ur, ut, uz) = (ur_m[q][p], ut_m[q][p], cm[2][q][p]);
                let mut res = [0.0_f64; 4];
                for c in 0..4 {
                    let (fr, frr) = radial_derivs(g, &cm[c], q, j, i);
                    let (fz, fzz) = z_derivs(g, &cm[c][q], j, i);
                    let (ft, ftt) = (dth[c].0[q][p], dth[c].1[q][p]);
                    let adv = ur * fr + ut * ir * ft + uz * fz;
                    let lap = frr + ir * fr + ir * ir * ftt + fzz;
                    res[c] = (c1[c][q][p] - c0[c][q][p]) / dt + adv - lap;
                }
                let (pr, _) = radial_derivs(g, &pres, q, j, i);
                let (pz, _) = z_derivs(g, &pres[q], j, i);
                let pt = p_th[q][p];
                res[0] += cs[q] * pr - sn[q] * ir * pt;
                res[1] += sn[q] * pr + cs[q] * ir * pt;
                res[2] += pz;
                let eta = cm[3][q][p];
                res[2] -= damp * eta;
                let (er, _) = radial_derivs(g, &cm[3], q, j, i);
                res[3] += -2.0 * r * ur * eta * damp
                    + 4.0 * r * er * damp
                    + 4.0 * (1.0 - r * r) * damp * damp * eta;
                node += res.iter().map(|v| v * v).sum::<f64>();
            }
            total += g.weight(j, i) * node / l as f64;
        }
    }
    Ok(total.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(g: &Grid, n: usize, k: usize, seed: u64) -> SpectralState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = SpectralState::zeros(g, n, k);
        let bump = |rng: &mut ChaCha8Rng| {
            let a: f64 = rng.random_range(-1.0..1.0);
            let r0: f64 = rng.random_range(0.5..2.0);
            let z0: f64 = rng.random_range(-1.0..1.0);
            let mut f = ScalarField::from_fn(g, |r, z| {
                a * r * (-(r - r0).powi(2) - (z - z0).powi(2)).exp()
            });
            f.clear_z_walls();
            f
        };
        for lf in LeadField::ALL {
            *s.lead.field_mut(lf) = bump(&mut rng);
        }
        for m in 0..k {
            for mf in ModeField::ALL {
                *s.modes[m].field_mut(mf) = bump(&mut rng);
            }
        }
        s
    }

    #[test]
    fn zero_state_assembles_to_zero() {
        let g = Grid::new(4.0, 4.0, 16, 17).unwrap();
        let s = SpectralState::zeros(&g, 3, 2);
        let a = assemble(&s, 6).unwrap();
        assert!(a.u_r.iter().chain(&a.rho).all(|f| f.max_abs() == 0.0));
        assert_eq!(assembled_norms(&s), AssembledNorms::default());
        assert_eq!(pde_residual(&s, &s, 0.1).unwrap(), 0.0);
        assert!(matches!(
            assemble(&s, 5),
            Err(AssemblyError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn quarter_period_picks_sine_coefficient() {
        let g = Grid::new(4.0, 4.0, 16, 17).unwrap();
        let s = random_state(&g, 3, 1, 1);
        let f = synthesize(&s, Component::R, PI / 6.0);
        let mut want = s.lead.u_r.clone();
        want.add_assign(&s.modes[0].u_r);
        assert!(f.sub(&want).max_abs() < 1e-14);
    }

    #[test]
    fn plancherel_identity() {
        let g = Grid::new(4.0, 4.0, 24, 33).unwrap();
        for seed in 0..4 {
            let s = random_state(&g, 2, 3, seed);
            let a = assembled_norms(&s).u_l2;
            let b = plancherel_u_l2(&s);
            assert!(((a - b) / b).abs() < 1e-12, "{a} {b}");
            let asm = assemble(&s, 4 * 3 + 4).unwrap();
            let m = asm.thetas.len() as f64;
            let mut q = 0.0;
            for l in 0..asm.thetas.len() {
                q += g.inner(&asm.u_r[l], &asm.u_r[l])
                    + g.inner(&asm.u_theta[l], &asm.u_theta[l])
                    + g.inner(&asm.u_z[l], &asm.u_z[l]);
            }
            assert!(((q / m).sqrt() - b).abs() < 1e-12 * b);
        }
    }

    #[test]
    fn rho_is_damped_eta() {
        let g = Grid::new(4.0, 4.0, 16, 17).unwrap();
        let s = random_state(&g, 2, 2, 9);
        let a = assemble(&s, 8).unwrap();
        for l in 0..8 {
            for (j, &r) in g.r().iter().enumerate() {
                let (e, rho) = (a.eta[l].at(j, 5), a.rho[l].at(j, 5));
                assert!((rho - e / (1.0 + r * r)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gaussian_gradient_norm() {
        let g = Grid::new(5.0, 5.0, 160, 321).unwrap();
        let mut s = SpectralState::zeros(&g, 2, 1);
        s.lead.u_z = ScalarField::from_fn(&g, |r, z| (-r * r - z * z).exp());
        let got = assembled_norms(&s).grad_u_l2.powi(2);
        let want = 1.5 * PI * (PI / 2.0).sqrt();
        assert!(((got - want) / want).abs() < 2e-3, "{got} vs {want}");
    }

    #[test]
    fn swirl_gradient_matches_cylindrical_identity() {
        // u = f(r, z) e_θ has |∇u|² = (∂_r f)² + (∂_z f)² + f²/r²
        let g = Grid::new(5.0, 5.0, 64, 129).unwrap();
        let mut s = SpectralState::zeros(&g, 2, 1);
        s.lead.u_theta = ScalarField::from_fn(&g, |r, z| r * (-r * r - z * z).exp());
        let f = &s.lead.u_theta;
        let fr = g.d_r(f, Parity::Odd);
        let fz = g.d_z(f);
        let mut over_r = f.clone();
        over_r.mul_radial(&g, |r| 1.0 / r);
        let want = g.inner(&fr, &fr) + g.inner(&fz, &fz) + g.inner(&over_r, &over_r);
        let got = assembled_norms(&s).grad_u_l2.powi(2);
        assert!(((got - want) / want).abs() < 1e-12);
    }

    #[test]
    fn residual_rejects_mismatch() {
        let g = Grid::new(4.0, 4.0, 16, 17).unwrap();
        let a = SpectralState::zeros(&g, 2, 2);
        let b = SpectralState::zeros(&g, 3, 2);
        assert_eq!(pde_residual(&a, &b, 0.1), Err(AssemblyError::Mismatch("N")));
        let c = SpectralState::zeros(&g, 2, 3);
        assert_eq!(pde_residual(&a, &c, 0.1), Err(AssemblyError::Mismatch("K")));
    }

    #[test]
    fn residual_of_steady_heat_profile_is_small() {
        // η = e^{-r²-z²} at rest: the residual is the temperature operator
        // applied to η, compared with a direct evaluation
        let g = Grid::new(5.0, 5.0, 64, 129).unwrap();
        let mut s = SpectralState::zeros(&g, 2, 1);
        s.lead.xi = ScalarField::from_fn(&g, |r, z| (-r * r - z * z).exp());
        let got = pde_residual(&s, &s, 1.0).unwrap();
        let op = |r: f64, z: f64| {
            let e = (-r * r - z * z).exp();
            let lap = (4.0 * r * r - 4.0 + 4.0 * z * z - 2.0) * e;
            let d = 1.0 / (1.0 + r * r);
            let temp = -lap + 4.0 * r * (-2.0 * r * e) * d + 4.0 * (1.0 - r * r) * d * d * e;
            (temp, -d * e)
        };
        let mut want = 0.0;
        for (j, &r) in g.r().iter().enumerate() {
            for (i, &z) in g.z().iter().enumerate() {
                if r > 4.0 || j + 2 >= g.nr || z.abs() > 4.0 || i < 2 || i + 2 >= g.nz {
                    continue;
                }
                let (a, b) = op(r, z);
                want += g.weight(j, i) * (a * a + b * b);
            }
        }
        let want = want.sqrt();
        assert!(((got - want) / want).abs() < 1e-5, "{got} vs {want}");
    }
}
