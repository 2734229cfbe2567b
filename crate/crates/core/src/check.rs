//! Fast self-check suite behind `bmodes --check`: oracle equivalence,
//! projection identities, fixed points and closed forms on small grids.

use crate::assembly::{assembled_norms, plancherel_u_l2};
use crate::config::RunConfig;
use crate::diagnostics::{energy_functionals, EnergyAccumulator};
use crate::elliptic::{Elliptic, EllipticProblem, Stencil};
use crate::grid::{Grid, ScalarField};
use crate::initial_data::{init_state, make_stream_data, Bump, InitialParams};
use crate::nonlinear::{pseudospectral_oracle, sources};
use crate::state::{EnergyParams, LeadField, ModeField, SpectralState};
use crate::timestepper::{max_divergence, project_state, Stepper};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &'static str, value: f64, limit: f64) -> CheckResult {
    CheckResult {
        name,
        passed: value.is_finite() && value <= limit,
        detail: format!("{value:.3e} (limit {limit:.0e})"),
    }
}

fn random_field(g: &Grid, rng: &mut ChaCha8Rng) -> ScalarField {
    let mut f = ScalarField::zeros(g);
    for v in &mut f.values {
        *v = rng.random_range(-1.0..1.0);
    }
    f
}

/// State with uniformly random evolved fields.
pub fn random_state(g: &Grid, n: usize, k: usize, seed: u64) -> SpectralState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SpectralState::zeros(g, n, k);
    for f in LeadField::EVOLVED {
        *s.lead.field_mut(f) = random_field(g, &mut rng);
    }
    for m in &mut s.modes {
        for f in ModeField::EVOLVED {
            *m.field_mut(f) = random_field(g, &mut rng);
        }
    }
    s
}

fn demo_params() -> InitialParams {
    let b = |a: f64, r0: f64, z0: f64| {
        vec![Bump {
            amplitude: a,
            r0,
            z0,
            width: 0.4,
        }]
    };
    InitialParams {
        psi_a: b(0.2, 1.0, 0.0),
        psi_b: b(-0.1, 1.1, 0.2),
        chi_a: b(0.1, 1.0, -0.1),
        chi_b: b(0.05, 0.9, 0.1),
        c: b(0.1, 1.0, 0.0),
        d: b(0.05, 1.0, 0.1),
    }
}

fn oracle_equivalence() -> CheckResult {
    let g = Grid::new(2.0, 2.0, 12, 16).unwrap();
    let mut worst = 0.0_f64;
    for (seed, (n, k)) in [(2, 2), (4, 4)].into_iter().enumerate() {
        let s = random_state(&g, n, k, seed as u64);
        let a = sources(&s);
        let b = pseudospectral_oracle(&s, 4 * k + 4).expect("enough samples");
        worst = worst.max(a.max_abs_diff(&b) / b.max_abs().max(1e-300));
    }
    result(
        "convolution sources match pseudospectral oracle",
        worst,
        1e-12,
    )
}

fn adjointness() -> CheckResult {
    let g = Grid::new(2.0, 2.0, 12, 17).unwrap();
    let ell = Elliptic::new(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0_f64;
    for m in [0, 1, 4] {
        let mut q = random_field(&g, &mut rng);
        q.clear_z_walls();
        let (wr, wt, wz) = (
            random_field(&g, &mut rng),
            random_field(&g, &mut rng),
            random_field(&g, &mut rng),
        );
        let gq = ell.gradient(&q, m);
        let wt_opt = (m > 0).then_some(&wt);
        let mut lhs = ell.projection_inner(&gq.r, &wr, m) + ell.projection_inner(&gq.z, &wz, m);
        if m > 0 {
            lhs += ell.projection_inner(&gq.theta, &wt, m);
        }
        let rhs = -ell.projection_inner(&q, &ell.divergence(&wr, wt_opt, &wz, m), m);
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
        let a = ell.apply_lm(&q, m, Stencil::Projection);
        let b = ell.apply_assembled_projection(&q, m);
        worst = worst.max(a.sub(&b).max_abs() / b.max_abs());
    }
    result("gradient/divergence adjointness and D G = -L", worst, 1e-12)
}

fn projection_exactness(tol: f64) -> CheckResult {
    let g = Grid::new(3.0, 3.0, 16, 25).unwrap();
    let mut s = random_state(&g, 4, 2, 11);
    let ell = Elliptic::new(&g);
    let div = match project_state(&ell, &mut s, 1e-12) {
        Ok(_) => max_divergence(&ell, &s),
        Err(_) => f64::INFINITY,
    };
    result("post-projection divergence", div, tol)
}

fn zero_fixed_point() -> CheckResult {
    let g = Grid::new(2.0, 2.0, 10, 13).unwrap();
    let mut cfg = RunConfig::default();
    cfg.grid = g.spec();
    cfg.modes.n = 2;
    cfg.modes.k = 2;
    let mut st = Stepper::new(&g, &cfg);
    let mut s = SpectralState::zeros(&g, 2, 2);
    for _ in 0..3 {
        s = st.step(&s, 0.01).unwrap_or_else(|_| {
            let mut bad = SpectralState::zeros(&g, 2, 2);
            bad.lead.u_r.fill(f64::NAN);
            bad
        });
    }
    result("zero state is a fixed point", s.scale(), 0.0)
}

fn initial_energy_closed_form() -> CheckResult {
    let g = Grid::new(3.0, 3.0, 24, 33).unwrap();
    let tuple = make_stream_data(&g, &demo_params()).expect("demo data fits");
    let n = 8;
    let s = init_state(&tuple, n, 3, &g);
    let params = EnergyParams::default();
    let v = energy_functionals(&s, &params, &mut EnergyAccumulator::default(), 0.0);
    let (p, a, nn) = (params.p, params.alpha_p, n as f64);
    let pair = |f: &ScalarField, h: &ScalarField| {
        g.weighted_power_integral(f, p - 3.0, p) + g.weighted_power_integral(h, p - 3.0, p)
    };
    let want = nn.powf(-2.0 * a) * pair(&tuple.a_r, &tuple.b_r)
        + nn.powf(-0.5 * p - 2.0 * a) * pair(&tuple.a_theta, &tuple.b_theta)
        + nn.powf(-2.0 * a) * pair(&tuple.a_z, &tuple.b_z);
    result("E_p(0) closed form", ((v.e_p - want) / want).abs(), 1e-10)
}

fn plancherel() -> CheckResult {
    let g = Grid::new(2.0, 2.0, 10, 13).unwrap();
    let s = random_state(&g, 3, 3, 5);
    let a = assembled_norms(&s).u_l2;
    let b = plancherel_u_l2(&s);
    result(
        "assembled L2 equals Plancherel sum",
        ((a - b) / b).abs(),
        1e-12,
    )
}

fn solver_residual() -> CheckResult {
    let g = Grid::new(3.0, 3.0, 20, 31).unwrap();
    let ell = Elliptic::new(&g);
    let rhs = ScalarField::from_fn(&g, |r, z| r * (-(r - 1.0).powi(2) - z * z).exp());
    let mut worst = 0.0_f64;
    for m in [0, 2, 8] {
        let prob = EllipticProblem::new(m, rhs.clone(), 1e-10).expect("valid tolerance");
        for st in [Stencil::Compact, Stencil::Projection] {
            match ell.solve_lm(&prob, st) {
                Ok(sol) => {
                    let mut res = ell.apply_lm(&sol, m, st);
                    let mut b = rhs.clone();
                    b.clear_z_walls();
                    res.axpy(-1.0, &b);
                    worst = worst.max(res.max_abs() / b.max_abs());
                }
                Err(_) => worst = f64::INFINITY,
            }
        }
    }
    result("elliptic solve relative residual", worst, 1e-10)
}

/// Run every check; `div_tol` bounds the projection check.
pub fn run_checks(div_tol: f64) -> Vec<CheckResult> {
    vec![
        oracle_equivalence(),
        adjointness(),
        projection_exactness(div_tol),
        solver_residual(),
        zero_fixed_point(),
        initial_energy_closed_form(),
        plancherel(),
    ]
}
