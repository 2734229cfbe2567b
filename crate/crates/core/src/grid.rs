//! Axis-offset cylindrical `(r, z)` grid, finite-difference operators and
//! the weighted quadrature used for every norm in the crate.
//!
//! Radial nodes sit at `r_j = (j + 1/2) dr`, so no node lies on the axis and
//! `1/r` factors are always finite. Vertical nodes are uniform on
//! `[-Zmax, Zmax]` and include both end points, which carry the homogeneous
//! Dirichlet value of every evolved field.
//!
//! Ghost values used by the stencils:
//! * axis (`r = -dr/2`): `f_{-1} = ±f_0` according to the field [`Parity`];
//! * outer wall (`r = R + dr/2`): `f_n = -f_{n-1}` (odd reflection, Dirichlet);
//! * top/bottom (`z = ±(Zmax + dz)`): odd reflection about the wall value.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid extents must be positive and finite (R = {r_max}, Zmax = {z_max})")]
    NonPositiveExtent { r_max: f64, z_max: f64 },
    #[error("grid needs at least 8 nodes per direction (nr = {nr}, nz = {nz})")]
    TooFewNodes { nr: usize, nz: usize },
    #[error("field shape {got:?} does not match grid shape {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("L^p exponent must satisfy p >= 1, got {0}")]
    InvalidExponent(f64),
}

/// Reflection parity across the axis `r = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

/// The four numbers that determine a grid; this is what gets serialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub r_max: f64,
    pub z_max: f64,
    pub nr: usize,
    pub nz: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            r_max: 3.0,
            z_max: 3.0,
            nr: 64,
            nz: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub nr: usize,
    pub nz: usize,
    pub r_max: f64,
    pub z_max: f64,
    pub dr: f64,
    pub dz: f64,
    r: Vec<f64>,
    z: Vec<f64>,
}

impl Grid {
    pub fn new(r_max: f64, z_max: f64, nr: usize, nz: usize) -> Result<Self, GridError> {
        if !(r_max > 0.0 && z_max > 0.0 && r_max.is_finite() && z_max.is_finite()) {
            return Err(GridError::NonPositiveExtent { r_max, z_max });
        }
        if nr < 8 || nz < 8 {
            return Err(GridError::TooFewNodes { nr, nz });
        }
        let dr = r_max / nr as f64;
        let dz = 2.0 * z_max / (nz - 1) as f64;
        let r = (0..nr).map(|j| (j as f64 + 0.5) * dr).collect();
        let z = (0..nz).map(|i| -z_max + i as f64 * dz).collect();
        Ok(Self {
            nr,
            nz,
            r_max,
            z_max,
            dr,
            dz,
            r,
            z,
        })
    }

    pub fn from_spec(spec: GridSpec) -> Result<Self, GridError> {
        Self::new(spec.r_max, spec.z_max, spec.nr, spec.nz)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            r_max: self.r_max,
            z_max: self.z_max,
            nr: self.nr,
            nz: self.nz,
        }
    }

    #[inline]
    pub fn r(&self) -> &[f64] {
        &self.r
    }

    #[inline]
    pub fn z(&self) -> &[f64] {
        &self.z
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nr * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, j: usize, i: usize) -> usize {
        j * self.nz + i
    }

    /// Whether vertical index `i` is a top/bottom wall node.
    #[inline]
    pub fn is_z_wall(&self, i: usize) -> bool {
        i == 0 || i + 1 == self.nz
    }

    pub fn check(&self, f: &ScalarField) -> Result<(), GridError> {
        if f.nr == self.nr && f.nz == self.nz {
            Ok(())
        } else {
            Err(GridError::ShapeMismatch {
                expected: (self.nr, self.nz),
                got: (f.nr, f.nz),
            })
        }
    }

    /// Quadrature weight of node `(j, i)` for `∫_{R^3} f dx` of an
    /// axisymmetric `f`: `2π r_j dr` (midpoint) times the trapezoid weight in z.
    #[inline]
    pub fn weight(&self, j: usize, i: usize) -> f64 {
        let wz = if self.is_z_wall(i) {
            0.5 * self.dz
        } else {
            self.dz
        };
        2.0 * PI * self.r[j] * self.dr * wz
    }

    /// `∫_{R^3} f dx` for an axisymmetric field.
    pub fn integrate(&self, f: &ScalarField) -> f64 {
        let mut total = 0.0;
        for j in 0..self.nr {
            let row = &f.values[j * self.nz..(j + 1) * self.nz];
            let mut s = 0.5 * (row[0] + row[self.nz - 1]);
            for v in &row[1..self.nz - 1] {
                s += v;
            }
            total += s * self.r[j];
        }
        total * 2.0 * PI * self.dr * self.dz
    }

    /// `∫_{R^3} r^a |f|^p dx`, i.e. `‖r^{a/p} f‖_{L^p}^p`.
    pub fn weighted_power_integral(&self, f: &ScalarField, r_exp: f64, p: f64) -> f64 {
        let mut total = 0.0;
        for j in 0..self.nr {
            let rw = self.r[j].powf(r_exp);
            let row = &f.values[j * self.nz..(j + 1) * self.nz];
            let mut s = 0.0;
            for (i, v) in row.iter().enumerate() {
                let w = if self.is_z_wall(i) { 0.5 } else { 1.0 };
                s += w * v.abs().powf(p);
            }
            total += s * rw * self.r[j];
        }
        total * 2.0 * PI * self.dr * self.dz
    }

    /// `‖r^a f‖_{L^p(R^3)}` for an axisymmetric `f`.
    pub fn lp_norm_weighted(&self, f: &ScalarField, a: f64, p: f64) -> Result<f64, GridError> {
        if !(p >= 1.0) {
            return Err(GridError::InvalidExponent(p));
        }
        self.check(f)?;
        Ok(self.weighted_power_integral(f, a * p, p).powf(1.0 / p))
    }

    /// `‖r^{1/2} f‖_{L^6} + ‖f‖_{L^2} + ‖(∂_r f, ∂_z f)‖_{L^2} + ‖r^{-1} f‖_{L^2}`.
    pub fn m_norm(&self, f: &ScalarField, df_r: &ScalarField, df_z: &ScalarField) -> f64 {
        let l6 = self.weighted_power_integral(f, 3.0, 6.0).powf(1.0 / 6.0);
        let l2 = self.weighted_power_integral(f, 0.0, 2.0).sqrt();
        let grad = (self.weighted_power_integral(df_r, 0.0, 2.0)
            + self.weighted_power_integral(df_z, 0.0, 2.0))
        .sqrt();
        let inv_r = self.weighted_power_integral(f, -2.0, 2.0).sqrt();
        l6 + l2 + grad + inv_r
    }

    /// `⟨f, g⟩ = ∫ f g dx`.
    pub fn inner(&self, f: &ScalarField, g: &ScalarField) -> f64 {
        let mut total = 0.0;
        for j in 0..self.nr {
            let mut s = 0.0;
            for i in 0..self.nz {
                let w = if self.is_z_wall(i) { 0.5 } else { 1.0 };
                let k = j * self.nz + i;
                s += w * f.values[k] * g.values[k];
            }
            total += s * self.r[j];
        }
        total * 2.0 * PI * self.dr * self.dz
    }

    pub fn apply(&self, f: &ScalarField, op: DiffOp, parity: Parity) -> ScalarField {
        match op {
            DiffOp::Dr => self.apply_radial(f, &self.radial(RadialOp::Dr, parity)),
            DiffOp::Drr => self.apply_radial(f, &self.radial(RadialOp::Drr, parity)),
            DiffOp::Dz => self.d_z(f),
            DiffOp::Dzz => self.d_zz(f),
            DiffOp::Lap => {
                let mut out = self.apply_radial(f, &self.radial(RadialOp::LapR, parity));
                out.add_assign(&self.d_zz(f));
                out
            }
            DiffOp::LTilde => self.apply_radial(f, &self.radial(RadialOp::LTilde, parity)),
        }
    }

    pub fn d_r(&self, f: &ScalarField, parity: Parity) -> ScalarField {
        self.apply(f, DiffOp::Dr, parity)
    }

    pub fn d_z(&self, f: &ScalarField) -> ScalarField {
        let nz = self.nz;
        let inv = 0.5 / self.dz;
        let mut out = ScalarField::zeros(self);
        for j in 0..self.nr {
            let src = &f.values[j * nz..(j + 1) * nz];
            let dst = &mut out.values[j * nz..(j + 1) * nz];
            // odd reflection about the wall value
            dst[0] = (src[1] - src[0]) / self.dz;
            dst[nz - 1] = (src[nz - 1] - src[nz - 2]) / self.dz;
            for i in 1..nz - 1 {
                dst[i] = (src[i + 1] - src[i - 1]) * inv;
            }
        }
        out
    }

    pub fn d_zz(&self, f: &ScalarField) -> ScalarField {
        let nz = self.nz;
        let inv = 1.0 / (self.dz * self.dz);
        let mut out = ScalarField::zeros(self);
        for j in 0..self.nr {
            let src = &f.values[j * nz..(j + 1) * nz];
            let dst = &mut out.values[j * nz..(j + 1) * nz];
            for i in 1..nz - 1 {
                dst[i] = (src[i + 1] - 2.0 * src[i] + src[i - 1]) * inv;
            }
        }
        out
    }

    pub fn apply_radial(&self, f: &ScalarField, st: &Tridiag) -> ScalarField {
        let (nr, nz) = (self.nr, self.nz);
        let mut out = ScalarField::zeros(self);
        for j in 0..nr {
            let (lo, di, up) = (st.lo[j], st.di[j], st.up[j]);
            for i in 0..nz {
                let mut v = di * f.values[j * nz + i];
                if j > 0 {
                    v += lo * f.values[(j - 1) * nz + i];
                }
                if j + 1 < nr {
                    v += up * f.values[(j + 1) * nz + i];
                }
                out.values[j * nz + i] = v;
            }
        }
        out
    }

    /// Tridiagonal coefficients of a radial operator with the ghost values
    /// folded in. Every radial derivative in the crate goes through here, so
    /// explicit evaluation and implicit solves share one discretization.
    pub fn radial(&self, op: RadialOp, parity: Parity) -> Tridiag {
        let n = self.nr;
        let dr = self.dr;
        let s = parity.sign();
        let mut t = Tridiag::zeros(n);
        match op {
            RadialOp::Dr => {
                let h = 0.5 / dr;
                for j in 0..n {
                    t.lo[j] = -h;
                    t.up[j] = h;
                }
                t.di[0] += -s * h;
                t.lo[0] = 0.0;
                t.di[n - 1] += -h;
                t.up[n - 1] = 0.0;
            }
            RadialOp::Drr => {
                let h = 1.0 / (dr * dr);
                for j in 0..n {
                    t.lo[j] = h;
                    t.di[j] = -2.0 * h;
                    t.up[j] = h;
                }
                t.di[0] += s * h;
                t.lo[0] = 0.0;
                t.di[n - 1] -= h;
                t.up[n - 1] = 0.0;
            }
            RadialOp::LapR => {
                // (1/r) ∂_r (r ∂_r f) in flux form; the axis flux vanishes.
                for j in 0..n {
                    let rj = self.r[j];
                    let r_lo = rj - 0.5 * dr;
                    let r_up = rj + 0.5 * dr;
                    let c = 1.0 / (rj * dr * dr);
                    t.lo[j] = if j == 0 { 0.0 } else { r_lo * c };
                    t.up[j] = r_up * c;
                    t.di[j] = -(r_lo * c + r_up * c);
                }
                // ghost f_n = -f_{n-1}
                t.di[n - 1] -= t.up[n - 1];
                t.up[n - 1] = 0.0;
            }
            RadialOp::LTilde => {
                let d = self.radial(RadialOp::Dr, parity);
                for j in 0..n {
                    let r = self.r[j];
                    let a = 4.0 * r / (1.0 + r * r);
                    let b = 4.0 * (1.0 - r * r) / ((1.0 + r * r) * (1.0 + r * r));
                    t.lo[j] = a * d.lo[j];
                    t.di[j] = a * d.di[j] + b;
                    t.up[j] = a * d.up[j];
                }
            }
        }
        t
    }
}

/// Differential operators available through [`Grid::apply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffOp {
    /// `∂_r`
    Dr,
    /// plain `∂_r²`
    Drr,
    /// `∂_z`
    Dz,
    /// `∂_z²`
    Dzz,
    /// `Δ̃ = ∂_r² + r⁻¹∂_r + ∂_z²`
    Lap,
    /// `L̃ = 4r/(1+r²) ∂_r + 4(1−r²)/(1+r²)²`
    LTilde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadialOp {
    Dr,
    Drr,
    /// radial part of `Δ̃`
    LapR,
    LTilde,
}

/// Three diagonals of a radial operator, one entry per radial node.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiag {
    pub lo: Vec<f64>,
    pub di: Vec<f64>,
    pub up: Vec<f64>,
}

impl Tridiag {
    pub fn zeros(n: usize) -> Self {
        Self {
            lo: vec![0.0; n],
            di: vec![0.0; n],
            up: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.di.len()
    }

    pub fn is_empty(&self) -> bool {
        self.di.is_empty()
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Tridiag) {
        for j in 0..self.len() {
            self.lo[j] += a * other.lo[j];
            self.di[j] += a * other.di[j];
            self.up[j] += a * other.up[j];
        }
    }

    pub fn scale(&mut self, a: f64) {
        for j in 0..self.len() {
            self.lo[j] *= a;
            self.di[j] *= a;
            self.up[j] *= a;
        }
    }

    pub fn add_diagonal(&mut self, d: impl Fn(usize) -> f64) {
        for j in 0..self.len() {
            self.di[j] += d(j);
        }
    }
}

/// An axisymmetric real function sampled on the grid, stored row-major with
/// the z index fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub nr: usize,
    pub nz: usize,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            nr: grid.nr,
            nz: grid.nz,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for &r in grid.r() {
            for &z in grid.z() {
                values.push(f(r, z));
            }
        }
        Self {
            nr: grid.nr,
            nz: grid.nz,
            values,
        }
    }

    #[inline]
    pub fn at(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.nz + i]
    }

    #[inline]
    pub fn set(&mut self, j: usize, i: usize, v: f64) {
        self.values[j * self.nz + i] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    pub fn add_assign(&mut self, other: &ScalarField) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &ScalarField) {
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn fill(&mut self, v: f64) {
        self.values.iter_mut().for_each(|x| *x = v);
    }

    /// Zero the top and bottom wall rows.
    pub fn clear_z_walls(&mut self) {
        let nz = self.nz;
        for j in 0..self.nr {
            self.values[j * nz] = 0.0;
            self.values[j * nz + nz - 1] = 0.0;
        }
    }

    /// Pointwise multiply by a radial profile.
    pub fn mul_radial(&mut self, grid: &Grid, f: impl Fn(f64) -> f64) {
        for (j, &r) in grid.r().iter().enumerate() {
            let c = f(r);
            for v in &mut self.values[j * self.nz..(j + 1) * self.nz] {
                *v *= c;
            }
        }
    }
}

/// A meridional vector `U^r e_r + U^z e_z`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeridionalVector {
    pub r_comp: ScalarField,
    pub z_comp: ScalarField,
}

impl MeridionalVector {
    pub fn new(r_comp: ScalarField, z_comp: ScalarField) -> Result<Self, GridError> {
        if r_comp.nr != z_comp.nr || r_comp.nz != z_comp.nz {
            return Err(GridError::ShapeMismatch {
                expected: (r_comp.nr, r_comp.nz),
                got: (z_comp.nr, z_comp.nz),
            });
        }
        Ok(Self { r_comp, z_comp })
    }
}
