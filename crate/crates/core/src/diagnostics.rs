//! Weighted energy functionals, component norms, divergence residual and
//! power-law fits.
//!
//! Every norm of a vector-valued bundle is taken componentwise:
//! `‖r^{1-3/p}(f, g)‖_{L^p}^p = ‖r^{1-3/p} f‖_{L^p}^p + ‖r^{1-3/p} g‖_{L^p}^p`.

use crate::elliptic::Elliptic;
use crate::grid::{Grid, Parity, ScalarField};
use crate::state::{EnergyParams, ModeState, SpectralState};
use crate::timestepper::max_divergence;
use thiserror::Error;

/// `‖r^{(p-3)/2} |f|^{p/2}‖²_{L²} = ‖r^{1-3/p} f‖^p_{L^p}`.
pub fn power_term(g: &Grid, f: &ScalarField, p: f64) -> f64 {
    g.weighted_power_integral(f, p - 3.0, p)
}

/// `∫ r^{p-3} |∇̃f|² |f|^{p-2} dx`.
pub fn gradient_term(g: &Grid, f: &ScalarField, parity: Parity, p: f64) -> f64 {
    let fr = g.d_r(f, parity);
    let fz = g.d_z(f);
    let mut total = 0.0;
    for j in 0..g.nr {
        let rw = g.r()[j].powf(p - 3.0);
        let mut s = 0.0;
        for i in 0..g.nz {
            let k = g.idx(j, i);
            let v = f.values[k].abs();
            if v == 0.0 {
                continue;
            }
            let grad2 = fr.values[k].powi(2) + fz.values[k].powi(2);
            s += g.weight(j, i) * grad2 * v.powf(p - 2.0);
        }
        total += rw * s;
    }
    total
}

/// `∫ r^{p-5} |f|^p dx`.
pub fn centrifugal_term(g: &Grid, f: &ScalarField, p: f64) -> f64 {
    g.weighted_power_integral(f, p - 5.0, p)
}

/// Time integrals of the functionals, advanced by the left-endpoint rule.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyAccumulator {
    pub e_p: f64,
    pub cal_e_p: f64,
    pub d: f64,
}

/// Functional values at one instant.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyValues {
    pub e_p: f64,
    pub cal_e_p: f64,
    pub d: f64,
    /// instantaneous part of `E_p` alone
    pub e_p_instant: f64,
    /// share of the instantaneous `E_p` carried by mode `K`
    pub tail_fraction: f64,
}

/// Weights `(meridional, azimuthal)` of mode `k`.
pub fn mode_weights(k: usize, n: usize, params: &EnergyParams) -> (f64, f64) {
    let p = params.p;
    if k == 1 {
        let nn = n as f64;
        (
            nn.powf(-2.0 * params.alpha_p),
            nn.powf(0.5 * p - 2.0 * params.alpha_p),
        )
    } else {
        let kn = (k * n) as f64;
        (
            kn.powf(2.0 * params.beta_p),
            kn.powf(0.5 * p + 2.0 * params.beta_p),
        )
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct ModeParts {
    e_inst: f64,
    e_rate: f64,
    cal_inst: f64,
    cal_rate: f64,
    d_rate: f64,
}

fn mode_parts(g: &Grid, m: &ModeState, n: usize, params: &EnergyParams) -> ModeParts {
    let p = params.p;
    let (wm, wt) = mode_weights(m.k, n, params);
    let kn2 = ((m.k * n) as f64).powi(2);
    let odd = Parity::Odd;
    let inst = |f: &ScalarField| power_term(g, f, p);
    let rate = |f: &ScalarField| gradient_term(g, f, odd, p) + kn2 * centrifugal_term(g, f, p);
    let meridional = [&m.u_r, &m.v_r, &m.u_z, &m.v_z];
    let azimuthal = [&m.u_theta, &m.v_theta];
    let temperature = [&m.xi, &m.zeta];
    let mut out = ModeParts::default();
    for f in meridional {
        out.e_inst += wm * inst(f);
        out.e_rate += wm * rate(f);
    }
    for f in azimuthal {
        out.e_inst += wt * inst(f);
        out.e_rate += wt * rate(f);
    }
    for f in temperature {
        out.cal_inst += wm * inst(f);
        out.cal_rate += wm * rate(f);
    }
    for f in meridional.iter().chain(azimuthal.iter()) {
        out.d_rate += g.weighted_power_integral(f, -3.0, 2.0);
    }
    out
}

/// `E_p`, `ℰ_p` and `D` at the state's time; then advance `acc` over the
/// next interval of length `dt` with the integrands at this state.
pub fn energy_functionals(
    s: &SpectralState,
    params: &EnergyParams,
    acc: &mut EnergyAccumulator,
    dt: f64,
) -> EnergyValues {
    let g = &s.grid;
    let parts: Vec<ModeParts> = s
        .modes
        .iter()
        .map(|m| mode_parts(g, m, s.n, params))
        .collect();
    let e_inst: f64 = parts.iter().map(|q| q.e_inst).sum();
    let cal_inst: f64 = parts.iter().map(|q| q.cal_inst).sum();
    let tail = parts.last().map(|q| q.e_inst).unwrap_or(0.0);
    let out = EnergyValues {
        e_p: e_inst + acc.e_p,
        cal_e_p: cal_inst + acc.cal_e_p,
        d: acc.d,
        e_p_instant: e_inst,
        tail_fraction: if e_inst > 0.0 { tail / e_inst } else { 0.0 },
    };
    for q in &parts {
        acc.e_p += dt * q.e_rate;
        acc.cal_e_p += dt * q.cal_rate;
        acc.d += dt * q.d_rate;
    }
    out
}

/// `‖r^{1-3/p} ϖ_k‖^p_{L^p}` per mode and the lead `L³` norms.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentNorms {
    pub varpi: Vec<f64>,
    pub lead_l3_u: f64,
    pub lead_l3_xi: f64,
}

pub fn component_norms(s: &SpectralState, p: f64) -> ComponentNorms {
    let g = &s.grid;
    let varpi = s
        .modes
        .iter()
        .map(|m| {
            let kn = s.wavenumber(m.k);
            let plain: f64 = [&m.u_r, &m.v_r, &m.u_z, &m.v_z, &m.xi, &m.zeta]
                .iter()
                .map(|f| power_term(g, f, p))
                .sum();
            let swirl: f64 = [&m.u_theta, &m.v_theta]
                .iter()
                .map(|f| power_term(g, f, p))
                .sum();
            plain + kn.powf(0.5 * p) * swirl
        })
        .collect();
    let l = &s.lead;
    let mag = ScalarField {
        nr: g.nr,
        nz: g.nz,
        values: (0..g.len())
            .map(|i| {
                (l.u_r.values[i].powi(2) + l.u_theta.values[i].powi(2) + l.u_z.values[i].powi(2))
                    .sqrt()
            })
            .collect(),
    };
    ComponentNorms {
        varpi,
        lead_l3_u: g.weighted_power_integral(&mag, 0.0, 3.0).cbrt(),
        lead_l3_xi: g.weighted_power_integral(&l.xi, 0.0, 3.0).cbrt(),
    }
}

/// Sup-norm of the discrete divergence over all families.
pub fn divergence_residual(s: &SpectralState) -> f64 {
    max_divergence(&Elliptic::new(&s.grid), s)
}

/// Same, reusing a solver context.
pub fn divergence_residual_with(ell: &Elliptic, s: &SpectralState) -> f64 {
    max_divergence(ell, s)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("value {value} at N = {n} is not positive")]
    NonPositive { n: f64, value: f64 },
    #[error("all N values coincide")]
    Degenerate,
}

/// Least-squares slope of `log(value)` against `log(N)`.
pub fn scaling_fit(points: &[(f64, f64)]) -> Result<f64, FitError> {
    if points.len() < 2 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    for &(n, value) in points {
        if !(value > 0.0) || !(n > 0.0) {
            return Err(FitError::NonPositive { n, value });
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(FitError::Degenerate);
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}
