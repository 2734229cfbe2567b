//! The singular cylindrical operator `𝓛_m = -(∂_r² + r⁻¹∂_r + ∂_z²) + m²/r²`,
//! the discrete gradient/divergence pair of each mode family and the
//! pressure projection built on them.
//!
//! Unknowns live on every radial node and on the interior `z` nodes; the
//! wall rows are Dirichlet zeros. Two discretizations of `𝓛_m` are offered:
//!
//! * [`Stencil::Compact`]: flux-form radial Laplacian plus the 3-point
//!   `∂_z²`, the operator used by the implicit diffusion solves;
//! * [`Stencil::Projection`]: `-D_m G_m` with `D_m` the exact adjoint of
//!   `G_m` in the `r`-weighted inner product, which makes the projection
//!   exact to solver precision.
//!
//! Both are solved directly: an orthogonal eigenbasis diagonalizes the
//! `z` part, leaving one banded radial system per `z` eigenmode. A Jacobi
//! preconditioned conjugate gradient backend is available for comparison.

use crate::config::PhysicsFlags;
use crate::diagnostics::{scaling_fit, FitError};
use crate::grid::{Grid, GridError, Parity, RadialOp, ScalarField, Tridiag};
use crate::state::{SourceSet, SpectralState};
use crate::timestepper::tendency;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EllipticError {
    #[error("tolerance {0} outside (0, 1e-4]")]
    InvalidTolerance(f64),
    #[error("right-hand side is not finite")]
    NonFiniteRhs,
    #[error(
        "solver did not converge: relative residual {achieved:.3e} after {iterations} iterations"
    )]
    NonConvergence { achieved: f64, iterations: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    Compact,
    Projection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Direct,
    Cg { max_iter: usize },
}

/// One `𝓛_m g = rhs` problem.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticProblem {
    pub m: usize,
    pub rhs: ScalarField,
    pub tolerance: f64,
}

impl EllipticProblem {
    pub fn new(m: usize, rhs: ScalarField, tolerance: f64) -> Result<Self, EllipticError> {
        if !(tolerance > 0.0 && tolerance <= 1e-4) {
            return Err(EllipticError::InvalidTolerance(tolerance));
        }
        Ok(Self { m, rhs, tolerance })
    }
}

/// Axis-cell weight factor of the `m = 0` projection pair.
pub const AXIS_WEIGHT_M0: f64 = 9.0 / 7.0;

/// Axis parity of a pressure-like scalar of azimuthal order `m`.
pub fn scalar_parity(m: usize) -> Parity {
    if m == 0 {
        Parity::Even
    } else {
        Parity::Odd
    }
}

/// Orthogonal eigenbasis of a symmetric `z` operator on interior nodes.
#[derive(Debug, Clone)]
struct ZBasis {
    vecs: DMatrix<f64>,
    vals: Vec<f64>,
    /// the operator itself
    lz: DMatrix<f64>,
}

/// A discrete vector in one mode family, `w = (w^r, w^θ, w^z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyVector {
    pub r: ScalarField,
    pub theta: ScalarField,
    pub z: ScalarField,
}

/// Solver context for one grid: caches the `z` eigenbases.
#[derive(Debug, Clone)]
pub struct Elliptic {
    grid: Grid,
    compact: ZBasis,
    wide: ZBasis,
    pub backend: Backend,
}

impl Elliptic {
    pub fn new(grid: &Grid) -> Self {
        let nzi = grid.nz - 2;
        let dz = grid.dz;
        // -∂_z² with Dirichlet walls: discrete sine basis
        let h = (nzi + 1) as f64;
        let norm = (2.0 / h).sqrt();
        let vecs = DMatrix::from_fn(nzi, nzi, |i, l| {
            norm * (PI * (i + 1) as f64 * (l + 1) as f64 / h).sin()
        });
        let vals = (0..nzi)
            .map(|l| {
                let s = (PI * (l + 1) as f64 / (2.0 * h)).sin();
                4.0 * s * s / (dz * dz)
            })
            .collect();
        let lz = DMatrix::from_fn(nzi, nzi, |i, l| {
            if i == l {
                2.0 / (dz * dz)
            } else if i.abs_diff(l) == 1 {
                -1.0 / (dz * dz)
            } else {
                0.0
            }
        });
        let compact = ZBasis { vecs, vals, lz };

        // G_zᵀ G_z for the centered gradient with zero walls
        let gz = DMatrix::from_fn(nzi, nzi, |i, l| {
            if l == i + 1 {
                0.5 / dz
            } else if i == l + 1 {
                -0.5 / dz
            } else {
                0.0
            }
        });
        let lz = gz.transpose() * &gz;
        let eig = SymmetricEigen::new(lz.clone());
        let wide = ZBasis {
            vals: eig.eigenvalues.iter().map(|v| v.max(0.0)).collect(),
            vecs: eig.eigenvectors,
            lz,
        };
        Self {
            grid: grid.clone(),
            compact,
            wide,
            backend: Backend::Direct,
        }
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    // ---------------------------------------------------------------------
    // gradient / divergence

    fn grad_r_stencil(&self, m: usize) -> Tridiag {
        self.grid.radial(RadialOp::Dr, scalar_parity(m))
    }

    /// Radial quadrature weights `W` of the projection pair. For `m = 0` the
    /// axis cell carries `9/7 r_0`, which makes both `G_r` (even potential)
    /// and `D_r` (odd `w^r`) consistent in the first row.
    pub fn projection_weights(&self, m: usize) -> Vec<f64> {
        let mut w = self.grid.r().to_vec();
        if m == 0 {
            w[0] *= AXIS_WEIGHT_M0;
        }
        w
    }

    /// `⟨a, b⟩_W`, the inner product in which `D_m = -G_mᵀ`.
    pub fn projection_inner(&self, a: &ScalarField, b: &ScalarField, m: usize) -> f64 {
        let g = &self.grid;
        let w = self.projection_weights(m);
        let mut total = 0.0;
        for (j, wj) in w.iter().enumerate() {
            let mut s = 0.0;
            for i in 0..g.nz {
                let k = g.idx(j, i);
                let zw = if g.is_z_wall(i) { 0.5 } else { 1.0 };
                s += zw * a.values[k] * b.values[k];
            }
            total += wj * s;
        }
        total * 2.0 * PI * g.dr * g.dz
    }

    /// `-W⁻¹ G_rᵀ W`.
    fn div_r_stencil(&self, m: usize) -> Tridiag {
        let g = self.grad_r_stencil(m);
        let w = self.projection_weights(m);
        let n = self.grid.nr;
        let mut d = Tridiag::zeros(n);
        for j in 0..n {
            d.di[j] = -g.di[j];
            if j > 0 {
                d.lo[j] = -g.up[j - 1] * w[j - 1] / w[j];
            }
            if j + 1 < n {
                d.up[j] = -g.lo[j + 1] * w[j + 1] / w[j];
            }
        }
        d
    }

    /// Centered `∂_z` on interior rows with the wall values taken as zero;
    /// wall rows of the output are zero.
    fn interior_dz(&self, f: &ScalarField) -> ScalarField {
        let g = &self.grid;
        let nz = g.nz;
        let h = 0.5 / g.dz;
        let mut out = ScalarField::zeros(g);
        for j in 0..g.nr {
            let src = &f.values[j * nz..(j + 1) * nz];
            let dst = &mut out.values[j * nz..(j + 1) * nz];
            for i in 1..nz - 1 {
                let up = if i + 1 < nz - 1 { src[i + 1] } else { 0.0 };
                let lo = if i > 1 { src[i - 1] } else { 0.0 };
                dst[i] = (up - lo) * h;
            }
        }
        out
    }

    /// `G_m Q = (∂_r Q, (m/r) Q, ∂_z Q)` on interior rows.
    pub fn gradient(&self, q: &ScalarField, m: usize) -> FamilyVector {
        let g = &self.grid;
        let mut r = g.apply_radial(q, &self.grad_r_stencil(m));
        r.clear_z_walls();
        let mut theta = q.clone();
        theta.mul_radial(g, |rr| m as f64 / rr);
        theta.clear_z_walls();
        let z = self.interior_dz(q);
        FamilyVector { r, theta, z }
    }

    /// `D_m w = D_r w^r - (m/r) w^θ + D_z w^z`, the negative adjoint of
    /// [`Self::gradient`]. Wall rows of `w` are ignored.
    pub fn divergence(
        &self,
        wr: &ScalarField,
        wt: Option<&ScalarField>,
        wz: &ScalarField,
        m: usize,
    ) -> ScalarField {
        let g = &self.grid;
        let mut out = g.apply_radial(wr, &self.div_r_stencil(m));
        if let Some(wt) = wt {
            for (j, &rr) in g.r().iter().enumerate() {
                let c = m as f64 / rr;
                for i in 0..g.nz {
                    out.values[j * g.nz + i] -= c * wt.values[j * g.nz + i];
                }
            }
        }
        out.add_assign(&self.interior_dz(wz));
        out.clear_z_walls();
        out
    }

    /// Apply the chosen discretization of `𝓛_m`.
    pub fn apply_lm(&self, q: &ScalarField, m: usize, stencil: Stencil) -> ScalarField {
        let g = &self.grid;
        let mut q = q.clone();
        q.clear_z_walls();
        match stencil {
            Stencil::Projection => {
                let w = self.gradient(&q, m);
                let mut out = self.divergence(&w.r, Some(&w.theta), &w.z, m);
                out.scale(-1.0);
                out
            }
            Stencil::Compact => {
                let mut a = g.radial(RadialOp::LapR, scalar_parity(m));
                a.scale(-1.0);
                let m2 = (m * m) as f64;
                let r = g.r().to_vec();
                a.add_diagonal(|j| m2 / (r[j] * r[j]));
                let mut out = g.apply_radial(&q, &a);
                out.axpy(-1.0, &g.d_zz(&q));
                out.clear_z_walls();
                out
            }
        }
    }

    // ---------------------------------------------------------------------
    // solves

    /// Solve `𝓛_m g = rhs` with Dirichlet walls and axis parity by `m`.
    pub fn solve_lm(
        &self,
        p: &EllipticProblem,
        stencil: Stencil,
    ) -> Result<ScalarField, EllipticError> {
        if !p.rhs.is_finite() {
            return Err(EllipticError::NonFiniteRhs);
        }
        if !(p.tolerance > 0.0 && p.tolerance <= 1e-4) {
            return Err(EllipticError::InvalidTolerance(p.tolerance));
        }
        let mut rhs = p.rhs.clone();
        rhs.clear_z_walls();
        let bnorm = self.weighted_norm(&rhs);
        if bnorm == 0.0 {
            return Ok(ScalarField::zeros(&self.grid));
        }
        let sol = match self.backend {
            Backend::Direct => match stencil {
                Stencil::Compact => {
                    let mut a = self.grid.radial(RadialOp::LapR, scalar_parity(p.m));
                    a.scale(-1.0);
                    let m2 = (p.m * p.m) as f64;
                    let r = self.grid.r().to_vec();
                    a.add_diagonal(|j| m2 / (r[j] * r[j]));
                    self.solve_helmholtz(&rhs, &a)
                }
                Stencil::Projection => self.solve_projection_direct(&rhs, p.m),
            },
            Backend::Cg { max_iter } => {
                return self.solve_cg(&rhs, p.m, stencil, p.tolerance, max_iter)
            }
        };
        let res = self.apply_lm(&sol, p.m, stencil).sub(&rhs);
        let rel = self.weighted_norm(&res) / bnorm;
        if !(rel <= p.tolerance) {
            return Err(EllipticError::NonConvergence {
                achieved: rel,
                iterations: 1,
            });
        }
        Ok(sol)
    }

    fn weighted_norm(&self, f: &ScalarField) -> f64 {
        self.grid.inner(f, f).sqrt()
    }

    fn to_z_modes(&self, f: &ScalarField, basis: &ZBasis) -> DMatrix<f64> {
        let g = &self.grid;
        let nzi = g.nz - 2;
        let a = DMatrix::from_fn(g.nr, nzi, |j, i| f.values[j * g.nz + i + 1]);
        a * &basis.vecs
    }

    fn from_z_modes(&self, hat: &DMatrix<f64>, basis: &ZBasis) -> ScalarField {
        let g = &self.grid;
        let a = hat * basis.vecs.transpose();
        let mut out = ScalarField::zeros(g);
        for j in 0..g.nr {
            for i in 0..g.nz - 2 {
                out.values[j * g.nz + i + 1] = a[(j, i)];
            }
        }
        out
    }

    /// Solve `(A_r - ∂_z²) u = f` where `A_r` is a radial tridiagonal
    /// operator (shifts, `1/r²` terms, `L̃` included by the caller).
    pub fn solve_helmholtz(&self, f: &ScalarField, a_r: &Tridiag) -> ScalarField {
        let mut hat = self.to_z_modes(f, &self.compact);
        let n = self.grid.nr;
        let mut col = vec![0.0; n];
        let mut work = vec![0.0; n];
        for l in 0..hat.ncols() {
            let lam = self.compact.vals[l];
            for j in 0..n {
                col[j] = hat[(j, l)];
            }
            thomas(a_r, lam, &mut col, &mut work);
            for j in 0..n {
                hat[(j, l)] = col[j];
            }
        }
        self.from_z_modes(&hat, &self.compact)
    }

    /// `B = G_rᵀ W G_r` as (diagonal, first, second) super-diagonals.
    fn radial_band(&self, m: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.grid.nr;
        let w = self.projection_weights(m);
        let gr = self.grad_r_stencil(m);
        // B = G_rᵀ W G_r, symmetric pentadiagonal: (diag, first, second)
        let mut b0 = vec![0.0; n];
        let mut b1 = vec![0.0; n];
        let mut b2 = vec![0.0; n];
        for i in 0..n {
            let mut cols: [(usize, f64); 3] = [(usize::MAX, 0.0); 3];
            if i > 0 {
                cols[0] = (i - 1, gr.lo[i]);
            }
            cols[1] = (i, gr.di[i]);
            if i + 1 < n {
                cols[2] = (i + 1, gr.up[i]);
            }
            for &(a, va) in &cols {
                if a == usize::MAX {
                    continue;
                }
                for &(b, vb) in &cols {
                    if b == usize::MAX || b < a {
                        continue;
                    }
                    let v = w[i] * va * vb;
                    match b - a {
                        0 => b0[a] += v,
                        1 => b1[a] += v,
                        2 => b2[a] += v,
                        _ => unreachable!(),
                    }
                }
            }
        }
        (b0, b1, b2)
    }

    /// The matrix factorized by the direct projection solver, applied to
    /// `q`: `W⁻¹[(B + m² W/r²) Q + W Q (G_zᵀ G_z)]`. Assembled independently
    /// of [`Self::gradient`] and [`Self::divergence`].
    pub fn apply_assembled_projection(&self, q: &ScalarField, m: usize) -> ScalarField {
        let g = &self.grid;
        let n = g.nr;
        let nz = g.nz;
        let r = g.r();
        let w = self.projection_weights(m);
        let (b0, b1, b2) = self.radial_band(m);
        let m2 = (m * m) as f64;
        let qi = DMatrix::from_fn(n, nz - 2, |j, i| q.values[j * nz + i + 1]);
        let zpart = &qi * &self.wide.lz;
        let mut out = ScalarField::zeros(g);
        for j in 0..n {
            for i in 0..nz - 2 {
                let mut v = (b0[j] + w[j] * m2 / (r[j] * r[j])) * qi[(j, i)];
                if j >= 1 {
                    v += b1[j - 1] * qi[(j - 1, i)];
                }
                if j >= 2 {
                    v += b2[j - 2] * qi[(j - 2, i)];
                }
                if j + 1 < n {
                    v += b1[j] * qi[(j + 1, i)];
                }
                if j + 2 < n {
                    v += b2[j] * qi[(j + 2, i)];
                }
                out.values[j * nz + i + 1] = v / w[j] + zpart[(j, i)];
            }
        }
        out
    }

    fn solve_projection_direct(&self, f: &ScalarField, m: usize) -> ScalarField {
        let g = &self.grid;
        let n = g.nr;
        let r = g.r();
        let w = self.projection_weights(m);
        let (b0, b1, b2) = self.radial_band(m);
        let m2 = (m * m) as f64;
        let mut hat = self.to_z_modes(f, &self.wide);
        let mut diag = vec![0.0; n];
        let mut col = vec![0.0; n];
        let mut fac = PentaFactor::new(n);
        for l in 0..hat.ncols() {
            let lam = self.wide.vals[l];
            for j in 0..n {
                diag[j] = b0[j] + w[j] * (m2 / (r[j] * r[j]) + lam);
                col[j] = w[j] * hat[(j, l)];
            }
            fac.factor(&diag, &b1, &b2);
            fac.solve(&mut col);
            for j in 0..n {
                hat[(j, l)] = col[j];
            }
        }
        self.from_z_modes(&hat, &self.wide)
    }

    /// Jacobi-preconditioned conjugate gradient on the `r`-weighted system.
    fn solve_cg(
        &self,
        f: &ScalarField,
        m: usize,
        stencil: Stencil,
        tol: f64,
        max_iter: usize,
    ) -> Result<ScalarField, EllipticError> {
        let g = &self.grid;
        let diag = self.lm_diagonal(m, stencil);
        let wdot = |a: &ScalarField, b: &ScalarField| match stencil {
            Stencil::Projection => self.projection_inner(a, b, m),
            Stencil::Compact => g.inner(a, b),
        };
        let bnorm = wdot(f, f).sqrt();
        let mut x = ScalarField::zeros(g);
        let mut res = f.clone();
        let precond = |v: &ScalarField| {
            let mut z = v.clone();
            for j in 0..g.nr {
                for i in 0..g.nz {
                    z.values[j * g.nz + i] /= diag[j];
                }
            }
            z.clear_z_walls();
            z
        };
        let mut z = precond(&res);
        let mut p = z.clone();
        let mut rz = wdot(&res, &z);
        let mut rel = 1.0;
        for it in 0..max_iter {
            let ap = self.apply_lm(&p, m, stencil);
            let alpha = rz / wdot(&p, &ap);
            x.axpy(alpha, &p);
            res.axpy(-alpha, &ap);
            rel = wdot(&res, &res).sqrt() / bnorm;
            if rel <= tol {
                return Ok(x);
            }
            z = precond(&res);
            let rz_new = wdot(&res, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pv, zv) in p.values.iter_mut().zip(&z.values) {
                *pv = zv + beta * *pv;
            }
            if !rel.is_finite() {
                return Err(EllipticError::NonConvergence {
                    achieved: rel,
                    iterations: it + 1,
                });
            }
        }
        Err(EllipticError::NonConvergence {
            achieved: rel,
            iterations: max_iter,
        })
    }

    /// Diagonal of `𝓛_m` per radial index on interior rows away from the walls.
    fn lm_diagonal(&self, m: usize, stencil: Stencil) -> Vec<f64> {
        let g = &self.grid;
        let i0 = g.nz / 2;
        (0..g.nr)
            .map(|j| {
                let mut e = ScalarField::zeros(g);
                e.set(j, i0, 1.0);
                self.apply_lm(&e, m, stencil).at(j, i0)
            })
            .collect()
    }

    // ---------------------------------------------------------------------
    // projection

    /// Remove the gradient part of `(wr, σ·wt, wz)` in place and return the
    /// potential `Q` with `𝓛_m Q = -D_m w`. `theta_sign` is `σ`; the field
    /// passed as `wt` is updated as `wt -= σ (m/r) Q`.
    pub fn project_in_place(
        &self,
        wr: &mut ScalarField,
        wt: Option<(&mut ScalarField, f64)>,
        wz: &mut ScalarField,
        m: usize,
        tol: f64,
    ) -> Result<ScalarField, EllipticError> {
        let g = &self.grid;
        let (div, theta) = match wt {
            Some((wt, sign)) => {
                let scaled = wt.scaled(sign);
                (self.divergence(wr, Some(&scaled), wz, m), Some((wt, sign)))
            }
            None => (self.divergence(wr, None, wz, m), None),
        };
        let mut rhs = div;
        rhs.scale(-1.0);
        if rhs.max_abs() == 0.0 {
            return Ok(ScalarField::zeros(g));
        }
        let prob = EllipticProblem {
            m,
            rhs,
            tolerance: tol,
        };
        let q = self.solve_lm(&prob, Stencil::Projection)?;
        let gq = self.gradient(&q, m);
        wr.axpy(-1.0, &gq.r);
        wz.axpy(-1.0, &gq.z);
        if let Some((wt, sign)) = theta {
            wt.axpy(-sign, &gq.theta);
        }
        Ok(q)
    }

    /// Pure form of the projection for the family `(w^r, w^θ, w^z)` of
    /// harmonic `k` with base wavenumber `n` (`k = 0` is the lead family,
    /// whose `w^θ` is ignored).
    pub fn project_family(
        &self,
        w: &FamilyVector,
        k: usize,
        n: usize,
        tol: f64,
    ) -> Result<(FamilyVector, ScalarField), EllipticError> {
        let mut out = w.clone();
        let m = k * n;
        let q = if k == 0 {
            self.project_in_place(&mut out.r, None, &mut out.z, 0, tol)?
        } else {
            self.project_in_place(&mut out.r, Some((&mut out.theta, 1.0)), &mut out.z, m, tol)?
        };
        Ok((out, q))
    }

    /// `Q̄` solving `𝓛_{kN} Q̄ = -(1/(1+r²)) ∂_z ξ_k`, the pressure response
    /// to the buoyancy forcing of mode `k`.
    pub fn buoyant_pressure_part(
        &self,
        k: usize,
        n: usize,
        xi_k: &ScalarField,
        tol: f64,
    ) -> Result<ScalarField, EllipticError> {
        let mut rhs = self.interior_dz(xi_k);
        rhs.mul_radial(&self.grid, |r| -1.0 / (1.0 + r * r));
        let prob = EllipticProblem {
            m: k * n,
            rhs,
            tolerance: tol,
        };
        self.solve_lm(&prob, Stencil::Projection)
    }
}

/// Fraction of `R` and `Zmax` over which the pressure identity is measured.
pub const IDENTITY_REGION: f64 = 0.8;

/// `∂_r w^r + w^r/r - (m/r) w^θ + ∂_z w^z` by plain central differences,
/// with `w^r` reflected by `parity` at the axis.
fn central_divergence(
    g: &Grid,
    wr: &ScalarField,
    wt: Option<&ScalarField>,
    wz: &ScalarField,
    m: usize,
    parity: Parity,
) -> ScalarField {
    let mut out = g.d_r(wr, parity);
    let mut over_r = wr.clone();
    over_r.mul_radial(g, |r| 1.0 / r);
    out.add_assign(&over_r);
    if let Some(wt) = wt {
        let mut t = wt.clone();
        t.mul_radial(g, |r| m as f64 / r);
        out.axpy(-1.0, &t);
    }
    out.add_assign(&g.d_z(wz));
    out.clear_z_walls();
    out
}

/// `L²(R³)` norm of `𝓛_m Q_k + div T_k` per family pair, where `𝓛_m` is
/// the compact discretization, `div` plain central differences and `T`
/// the non-pressure tendency of `s` built from `src` under `flags`. Entry
/// 0 is the lead `(Π, U^r, U^z)`; entry `k` combines the `Q_k` and `R_k`
/// families. On a state produced by a projection step this is
/// `O(h²) + O(dt)`.
pub fn pressure_identity_residual_with(
    ell: &Elliptic,
    s: &SpectralState,
    src: &SourceSet,
    flags: &PhysicsFlags,
) -> Vec<f64> {
    let g = &s.grid;
    let t = tendency(s, flags, Some(src));
    let (r_lim, z_lim) = (IDENTITY_REGION * g.r_max, IDENTITY_REGION * g.z_max);
    let norm = |f: &ScalarField| {
        let mut total = 0.0;
        for j in 0..g.nr {
            if g.r()[j] > r_lim {
                continue;
            }
            for i in 0..g.nz {
                if g.z()[i].abs() <= z_lim {
                    total += g.weight(j, i) * f.at(j, i).powi(2);
                }
            }
        }
        total
    };
    let mut out = Vec::with_capacity(s.modes.len() + 1);
    let mut lead = ell.apply_lm(&s.lead.pi, 0, Stencil::Projection);
    lead.add_assign(&central_divergence(
        g,
        &t.lead.h_r,
        None,
        &t.lead.h_z,
        0,
        Parity::Odd,
    ));
    out.push(norm(&lead).sqrt());
    for (m, tm) in s.modes.iter().zip(&t.modes) {
        let kn = m.k * s.n;
        let mut u = ell.apply_lm(&m.q, kn, Stencil::Projection);
        u.add_assign(&central_divergence(
            g,
            &tm.f_r,
            Some(&tm.g_theta),
            &tm.f_z,
            kn,
            Parity::Odd,
        ));
        let mut v = ell.apply_lm(&m.r, kn, Stencil::Projection);
        let neg = tm.f_theta.scaled(-1.0);
        v.add_assign(&central_divergence(
            g,
            &tm.g_r,
            Some(&neg),
            &tm.g_z,
            kn,
            Parity::Odd,
        ));
        out.push((norm(&u) + norm(&v)).sqrt());
    }
    out
}

/// [`pressure_identity_residual_with`] with every physical term enabled.
pub fn pressure_identity_residual(s: &SpectralState, src: &SourceSet) -> Vec<f64> {
    pressure_identity_residual_with(&Elliptic::new(&s.grid), s, src, &PhysicsFlags::default())
}

/// Weighted solve ratios `‖r^α 𝓛_m⁻¹(r^{β-2} f)‖_{L^p} / ‖f‖_{L^q}` over a
/// range of `m` and their log-log slope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayChart {
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub ms: Vec<usize>,
    pub ratios: Vec<f64>,
    pub slope: f64,
    /// `-(1 + 1/p - 1/q - ε)`
    pub reference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayParams {
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
}

impl Default for DecayParams {
    fn default() -> Self {
        Self {
            p: 4.0,
            q: 2.0,
            alpha: 0.0,
            beta: 0.75,
            epsilon: 0.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum DecayError {
    #[error(transparent)]
    Solve(#[from] EllipticError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Norm(#[from] GridError),
    #[error("source has zero L^q norm")]
    ZeroSource,
}

pub fn decay_chart(
    ell: &Elliptic,
    f: &ScalarField,
    ms: &[usize],
    params: DecayParams,
    tol: f64,
) -> Result<DecayChart, DecayError> {
    let g = &ell.grid;
    let DecayParams {
        p,
        q,
        alpha,
        beta,
        epsilon,
    } = params;
    let f_norm = g.lp_norm_weighted(f, 0.0, q)?;
    if f_norm == 0.0 {
        return Err(DecayError::ZeroSource);
    }
    let mut rhs = f.clone();
    rhs.mul_radial(g, |r| r.powf(beta - 2.0));
    rhs.clear_z_walls();
    let mut ratios = Vec::with_capacity(ms.len());
    for &m in ms {
        let prob = EllipticProblem::new(m, rhs.clone(), tol)?;
        let sol = ell.solve_lm(&prob, Stencil::Compact)?;
        ratios.push(g.lp_norm_weighted(&sol, alpha, p)? / f_norm);
    }
    let pts: Vec<(f64, f64)> = ms
        .iter()
        .zip(&ratios)
        .map(|(&m, &v)| (m as f64, v))
        .collect();
    Ok(DecayChart {
        p,
        q,
        alpha,
        beta,
        epsilon,
        ms: ms.to_vec(),
        slope: scaling_fit(&pts)?,
        ratios,
        reference: -(1.0 + 1.0 / p - 1.0 / q - epsilon),
    })
}

/// Tridiagonal solve of `(A + λ I) x = b` in place (Thomas algorithm).
fn thomas(a: &Tridiag, lam: f64, b: &mut [f64], c: &mut [f64]) {
    let n = b.len();
    let mut beta = a.di[0] + lam;
    b[0] /= beta;
    for j in 1..n {
        c[j] = a.up[j - 1] / beta;
        beta = a.di[j] + lam - a.lo[j] * c[j];
        b[j] = (b[j] - a.lo[j] * b[j - 1]) / beta;
    }
    for j in (0..n - 1).rev() {
        b[j] -= c[j + 1] * b[j + 1];
    }
}

/// `LDLᵀ` factorization of a symmetric pentadiagonal matrix.
struct PentaFactor {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl PentaFactor {
    fn new(n: usize) -> Self {
        Self {
            d: vec![0.0; n],
            l1: vec![0.0; n],
            l2: vec![0.0; n],
        }
    }

    /// `a0` diagonal, `a1[j] = A[j][j+1]`, `a2[j] = A[j][j+2]`.
    fn factor(&mut self, a0: &[f64], a1: &[f64], a2: &[f64]) {
        let n = a0.len();
        for j in 0..n {
            let l2 = if j >= 2 {
                a2[j - 2] / self.d[j - 2]
            } else {
                0.0
            };
            let l1 = if j >= 1 {
                let mut v = a1[j - 1];
                if j >= 2 {
                    v -= l2 * self.d[j - 2] * self.l1[j - 1];
                }
                v / self.d[j - 1]
            } else {
                0.0
            };
            let mut dj = a0[j];
            if j >= 1 {
                dj -= l1 * l1 * self.d[j - 1];
            }
            if j >= 2 {
                dj -= l2 * l2 * self.d[j - 2];
            }
            self.d[j] = dj;
            self.l1[j] = l1;
            self.l2[j] = l2;
        }
    }

    fn solve(&self, x: &mut [f64]) {
        let n = x.len();
        for j in 0..n {
            if j >= 1 {
                x[j] -= self.l1[j] * x[j - 1];
            }
            if j >= 2 {
                x[j] -= self.l2[j] * x[j - 2];
            }
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            if j + 1 < n {
                x[j] -= self.l1[j + 1] * x[j + 1];
            }
            if j + 2 < n {
                x[j] -= self.l2[j + 2] * x[j + 2];
            }
        }
    }
}

/// Convenience wrapper building a fresh context.
pub fn solve_lm(
    grid: &Grid,
    p: &EllipticProblem,
    stencil: Stencil,
) -> Result<ScalarField, EllipticError> {
    Elliptic::new(grid).solve_lm(p, stencil)
}
