//! Admissible generator tuples `(a^r, a^θ, a^z, b^r, b^θ, b^z, c, d)` and
//! their installation into mode 1.
//!
//! Velocity generators come from stream functions `ψ`:
//! `a^r = ∂_z ψ_a`, `a^z = -(1/r) ∂_r (r ψ_a)` and likewise for `b`, which
//! makes both compatibility identities hold exactly. Swirl is added through
//! potentials `χ`: `a^θ = r ∂_z χ_a` is balanced by `b^z += χ_a`, and
//! `b^θ = -r ∂_z χ_b` by `a^z += χ_b`.
//!
//! Every profile is `A r² exp(-((r-r0)² + (z-z0)²)/w²)`, so fields vanish to
//! second order at the axis.

use crate::grid::{Grid, Parity, ScalarField};
use crate::state::SpectralState;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of widths a bump must keep from the outer walls.
pub const SUPPORT_WIDTHS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub amplitude: f64,
    pub r0: f64,
    pub z0: f64,
    pub width: f64,
}

impl Bump {
    /// `(value, ∂_r, ∂_z)` of `A r² G` with `G` the Gaussian factor.
    fn eval(&self, r: f64, z: f64) -> (f64, f64, f64) {
        let w2 = self.width * self.width;
        let (dr, dz) = (r - self.r0, z - self.z0);
        let g = self.amplitude * (-(dr * dr + dz * dz) / w2).exp();
        let v = r * r * g;
        (v, g * (2.0 * r - 2.0 * r * r * dr / w2), -2.0 * dz / w2 * v)
    }

    /// `(1/r) ∂_r (r · value)`.
    fn radial_div(&self, r: f64, z: f64) -> f64 {
        let (v, d, _) = self.eval(r, z);
        d + v / r
    }
}

/// Bump lists for every generator potential.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialParams {
    pub psi_a: Vec<Bump>,
    pub psi_b: Vec<Bump>,
    pub chi_a: Vec<Bump>,
    pub chi_b: Vec<Bump>,
    pub c: Vec<Bump>,
    pub d: Vec<Bump>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitialError {
    #[error("{list}[{index}]: width must be positive, got {width}")]
    BadWidth {
        list: &'static str,
        index: usize,
        width: f64,
    },
    #[error("{list}[{index}]: support r0 + {SUPPORT_WIDTHS} w = {reach} exceeds R = {r_max}")]
    OuterRadius {
        list: &'static str,
        index: usize,
        reach: f64,
        r_max: f64,
    },
    #[error("{list}[{index}]: support |z0| + {SUPPORT_WIDTHS} w = {reach} exceeds Zmax = {z_max}")]
    Vertical {
        list: &'static str,
        index: usize,
        reach: f64,
        z_max: f64,
    },
    #[error("{list}[{index}]: r0 = {r0} must be non-negative")]
    NegativeCenter {
        list: &'static str,
        index: usize,
        r0: f64,
    },
}

impl InitialParams {
    fn lists(&self) -> [(&'static str, &Vec<Bump>); 6] {
        [
            ("psi_a", &self.psi_a),
            ("psi_b", &self.psi_b),
            ("chi_a", &self.chi_a),
            ("chi_b", &self.chi_b),
            ("c", &self.c),
            ("d", &self.d),
        ]
    }

    /// Reject bumps whose effective support reaches the boundary bands.
    pub fn check(&self, grid: &Grid) -> Result<(), InitialError> {
        for (list, bumps) in self.lists() {
            for (index, b) in bumps.iter().enumerate() {
                if !(b.width > 0.0) {
                    return Err(InitialError::BadWidth {
                        list,
                        index,
                        width: b.width,
                    });
                }
                if b.r0 < 0.0 {
                    return Err(InitialError::NegativeCenter {
                        list,
                        index,
                        r0: b.r0,
                    });
                }
                let reach = b.r0 + SUPPORT_WIDTHS * b.width;
                if reach > grid.r_max {
                    return Err(InitialError::OuterRadius {
                        list,
                        index,
                        reach,
                        r_max: grid.r_max,
                    });
                }
                let reach = b.z0.abs() + SUPPORT_WIDTHS * b.width;
                if reach > grid.z_max {
                    return Err(InitialError::Vertical {
                        list,
                        index,
                        reach,
                        z_max: grid.z_max,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.lists()
            .iter()
            .all(|(_, l)| l.iter().all(|b| b.amplitude == 0.0))
    }
}

/// The eight generator functions.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialTuple {
    pub a_r: ScalarField,
    pub a_theta: ScalarField,
    pub a_z: ScalarField,
    pub b_r: ScalarField,
    pub b_theta: ScalarField,
    pub b_z: ScalarField,
    pub c: ScalarField,
    pub d: ScalarField,
}

impl InitialTuple {
    pub fn zeros(grid: &Grid) -> Self {
        let z = ScalarField::zeros(grid);
        Self {
            a_r: z.clone(),
            a_theta: z.clone(),
            a_z: z.clone(),
            b_r: z.clone(),
            b_theta: z.clone(),
            b_z: z.clone(),
            c: z.clone(),
            d: z,
        }
    }

    fn fields_mut(&mut self) -> [&mut ScalarField; 8] {
        [
            &mut self.a_r,
            &mut self.a_theta,
            &mut self.a_z,
            &mut self.b_r,
            &mut self.b_theta,
            &mut self.b_z,
            &mut self.c,
            &mut self.d,
        ]
    }
}

fn sum_over(bumps: &[Bump], r: f64, z: f64, f: impl Fn(&Bump, f64, f64) -> f64) -> f64 {
    bumps.iter().map(|b| f(b, r, z)).sum()
}

/// Build a compatible tuple from bump parameters.
pub fn make_stream_data(grid: &Grid, p: &InitialParams) -> Result<InitialTuple, InitialError> {
    p.check(grid)?;
    let val = |b: &Bump, r: f64, z: f64| b.eval(r, z).0;
    let dz = |b: &Bump, r: f64, z: f64| b.eval(r, z).2;
    let rdiv = |b: &Bump, r: f64, z: f64| b.radial_div(r, z);
    let mut t = InitialTuple {
        a_r: ScalarField::from_fn(grid, |r, z| sum_over(&p.psi_a, r, z, dz)),
        a_theta: ScalarField::from_fn(grid, |r, z| r * sum_over(&p.chi_a, r, z, dz)),
        a_z: ScalarField::from_fn(grid, |r, z| {
            -sum_over(&p.psi_a, r, z, rdiv) + sum_over(&p.chi_b, r, z, val)
        }),
        b_r: ScalarField::from_fn(grid, |r, z| sum_over(&p.psi_b, r, z, dz)),
        b_theta: ScalarField::from_fn(grid, |r, z| -r * sum_over(&p.chi_b, r, z, dz)),
        b_z: ScalarField::from_fn(grid, |r, z| {
            -sum_over(&p.psi_b, r, z, rdiv) + sum_over(&p.chi_a, r, z, val)
        }),
        c: ScalarField::from_fn(grid, |r, z| sum_over(&p.c, r, z, val)),
        d: ScalarField::from_fn(grid, |r, z| sum_over(&p.d, r, z, val)),
    };
    for f in t.fields_mut() {
        f.clear_z_walls();
    }
    Ok(t)
}

/// L² norms of the two discrete compatibility expressions
/// `∂_r a^r + a^r/r + ∂_z a^z + b^θ/r` and `∂_r b^r + b^r/r + ∂_z b^z - a^θ/r`.
pub fn compatibility_residual(grid: &Grid, t: &InitialTuple) -> (f64, f64) {
    let expr = |fr: &ScalarField, fz: &ScalarField, extra: &ScalarField, sign: f64| {
        let mut e = grid.d_r(fr, Parity::Odd);
        let mut over_r = fr.clone();
        over_r.axpy(sign, extra);
        over_r.mul_radial(grid, |r| 1.0 / r);
        e.add_assign(&over_r);
        e.add_assign(&grid.d_z(fz));
        grid.lp_norm_weighted(&e, 0.0, 2.0).expect("p = 2 is valid")
    };
    (
        expr(&t.a_r, &t.a_z, &t.b_theta, 1.0),
        expr(&t.b_r, &t.b_z, &t.a_theta, -1.0),
    )
}

/// Mode-1 initial state: `(U_1^r, V_1^r, U_1^θ, V_1^θ, U_1^z, V_1^z, ξ_1, ζ_1)
/// = (a^r, b^r, a^θ/N, b^θ/N, a^z, b^z, c, d)`, everything else zero.
pub fn init_state(t: &InitialTuple, n: usize, k: usize, grid: &Grid) -> SpectralState {
    let mut s = SpectralState::zeros(grid, n, k);
    let inv_n = 1.0 / n.max(1) as f64;
    let m = &mut s.modes[0];
    m.u_r = t.a_r.clone();
    m.v_r = t.b_r.clone();
    m.u_theta = t.a_theta.scaled(inv_n);
    m.v_theta = t.b_theta.scaled(inv_n);
    m.u_z = t.a_z.clone();
    m.v_z = t.b_z.clone();
    m.xi = t.c.clone();
    m.zeta = t.d.clone();
    s
}
