//! Acceptance gate. Each test prints one `PASS`/`FAIL` line to stderr
//! (bypassing the harness capture) and then asserts.

use boussinesq_modes::assembly::pde_residual;
use boussinesq_modes::check::random_state;
use boussinesq_modes::cli::{run_sweep, SweepReport};
use boussinesq_modes::config::{PhysicsFlags, RunConfig};
use boussinesq_modes::diagnostics::{energy_functionals, EnergyAccumulator};
use boussinesq_modes::elliptic::{decay_chart, DecayParams, Elliptic, EllipticProblem, Stencil};
use boussinesq_modes::grid::{Grid, ScalarField};
use boussinesq_modes::initial_data::{init_state, make_stream_data, Bump, InitialParams};
use boussinesq_modes::nonlinear::{pseudospectral_oracle, sources};
use boussinesq_modes::state::{EnergyParams, SpectralState};
use boussinesq_modes::timestepper::{initial_state, max_divergence, run, Stepper};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;

fn report(name: &str, passed: bool, detail: &str) {
    let line = format!(
        "{} {name}: {detail}\n",
        if passed { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(passed, "{name}: {detail}");
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn demo_config() -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.toml");
    RunConfig::from_path(&path).expect("demo config parses")
}

fn bump(amplitude: f64, r0: f64, z0: f64, width: f64) -> Bump {
    Bump {
        amplitude,
        r0,
        z0,
        width,
    }
}

fn random_field(g: &Grid, rng: &mut ChaCha8Rng) -> ScalarField {
    let mut f = ScalarField::zeros(g);
    for v in &mut f.values {
        *v = rng.random_range(-1.0..1.0);
    }
    f
}

#[test]
fn oracle_equivalence() {
    let g = Grid::new(3.0, 3.0, 48, 96).unwrap();
    let mut worst = 0.0_f64;
    for i in 0..50u64 {
        let k = [2, 4, 8][(i % 3) as usize];
        let n = [2, 4][((i / 3) % 2) as usize];
        let s = random_state(&g, n, k, 1000 + i);
        let a = sources(&s);
        let b = pseudospectral_oracle(&s, 4 * k + 4).unwrap();
        worst = worst.max(a.max_abs_diff(&b) / b.max_abs());
    }
    report(
        "convolution sources vs pseudospectral oracle (50 states)",
        worst <= 1e-12,
        &format!("max relative error {worst:.2e} (limit 1e-12)"),
    );
}

#[test]
fn projection_exactness() {
    let g = Grid::new(3.0, 3.0, 32, 41).unwrap();
    let ell = Elliptic::new(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut adj, mut fact) = (0.0_f64, 0.0_f64);
    for m in [0usize, 1, 2, 4, 8, 16, 32, 64] {
        let mut q = random_field(&g, &mut rng);
        q.clear_z_walls();
        let (wr, wt, wz) = (
            random_field(&g, &mut rng),
            random_field(&g, &mut rng),
            random_field(&g, &mut rng),
        );
        let gq = ell.gradient(&q, m);
        let mut lhs = ell.projection_inner(&gq.r, &wr, m) + ell.projection_inner(&gq.z, &wz, m);
        if m > 0 {
            lhs += ell.projection_inner(&gq.theta, &wt, m);
        }
        let rhs =
            -ell.projection_inner(&q, &ell.divergence(&wr, (m > 0).then_some(&wt), &wz, m), m);
        adj = adj.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
        let dg = ell.apply_lm(&q, m, Stencil::Projection);
        let mat = ell.apply_assembled_projection(&q, m);
        fact = fact.max(dg.sub(&mat).max_abs() / mat.max_abs());
    }

    let cfg = demo_config();
    let grid = cfg.build_grid().unwrap();
    let mut st = Stepper::new(&grid, &cfg);
    let mut s = initial_state(&cfg, st.elliptic()).unwrap();
    let mut div = max_divergence(st.elliptic(), &s);
    for _ in 0..200 {
        s = st.step(&s, cfg.time.dt_max).unwrap();
        div = div.max(max_divergence(st.elliptic(), &s));
    }
    let pass = adj <= 1e-12 && fact <= 1e-12 && div <= cfg.solver.div_tol;
    report(
        "projection adjointness, D G = -L and divergence over 200 steps",
        pass,
        &format!("adjointness {adj:.2e}, D G vs L {fact:.2e} (limit 1e-12); max divergence {div:.2e} (limit 1e-10)"),
    );
}

#[test]
fn manufactured_elliptic_order() {
    let mut errs = Vec::new();
    for nr in [16usize, 32, 64, 128] {
        let g = Grid::new(4.0, 4.0, nr, 2 * nr + 1).unwrap();
        let ell = Elliptic::new(&g);
        let exact = ScalarField::from_fn(&g, |r, z| r * (-r * r - z * z).exp());
        // -(∂_r² + ∂_r/r - 1/r² + ∂_z²) of r e^{-r²-z²}
        let rhs = ScalarField::from_fn(&g, |r, z| {
            r * (-r * r - z * z).exp() * (10.0 - 4.0 * r * r - 4.0 * z * z)
        });
        let prob = EllipticProblem::new(1, rhs, 1e-12).unwrap();
        let mut d = ell.solve_lm(&prob, Stencil::Compact).unwrap().sub(&exact);
        d.clear_z_walls();
        errs.push(d.max_abs());
    }
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let pass = orders.iter().all(|o| (o - 2.0).abs() <= 0.3);
    report(
        "manufactured elliptic convergence",
        pass,
        &format!(
            "errors {}, orders {orders:.3?} (target 2.0 +- 0.3)",
            sci(&errs)
        ),
    );
}

fn residual_config(nr: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.grid.r_max = 4.0;
    cfg.grid.z_max = 4.0;
    cfg.grid.nr = nr;
    cfg.grid.nz = 2 * nr + 1;
    cfg.modes.n = 4;
    cfg.modes.k = 2;
    cfg.initial = InitialParams {
        psi_a: vec![bump(0.1, 1.5, 0.0, 0.5)],
        psi_b: vec![bump(-0.05, 1.5, 0.2, 0.5)],
        chi_a: vec![bump(0.05, 1.5, 0.0, 0.5)],
        c: vec![bump(0.1, 1.5, 0.0, 0.5)],
        ..Default::default()
    };
    cfg
}

/// Residual of the last of `steps` steps of size `dt`.
fn residual_after(nr: usize, dt: f64, steps: usize) -> f64 {
    let cfg = residual_config(nr);
    let grid = cfg.build_grid().unwrap();
    let mut st = Stepper::new(&grid, &cfg);
    let mut s = initial_state(&cfg, st.elliptic()).unwrap();
    let mut prev = s.clone();
    for _ in 0..steps {
        prev = s;
        s = st.step(&prev, dt).unwrap();
    }
    pde_residual(&prev, &s, dt).unwrap()
}

#[test]
fn pde_residual_convergence() {
    let h: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&nr| residual_after(nr, 1e-6, 1))
        .collect();
    let t_final = 0.016;
    let d: Vec<f64> = [4usize, 8, 16]
        .iter()
        .map(|&n| residual_after(128, t_final / n as f64, n))
        .collect();
    let hr: Vec<f64> = h.windows(2).map(|w| w[0] / w[1]).collect();
    let dr: Vec<f64> = d.windows(2).map(|w| w[0] / w[1]).collect();
    let pass =
        hr.iter().all(|r| (r - 4.0).abs() <= 0.6) && dr.iter().all(|r| (r - 2.0).abs() <= 0.3);
    report(
        "Cartesian PDE residual under refinement",
        pass,
        &format!(
            "h-halving residuals {} ratios {hr:.3?} (target 4 +- 0.6); dt-halving residuals {} ratios {dr:.3?} (target 2 +- 0.3)",
            sci(&h),
            sci(&d)
        ),
    );
}

#[test]
fn invariant_subspace() {
    let mut cfg = RunConfig::default();
    cfg.grid.nr = 32;
    cfg.grid.nz = 64;
    cfg.modes.n = 8;
    cfg.modes.k = 8;
    cfg.initial = InitialParams {
        psi_b: vec![bump(0.4, 1.2, 0.0, 0.35)],
        d: vec![bump(0.2, 1.2, 0.2, 0.35)],
        ..Default::default()
    };
    let grid = cfg.build_grid().unwrap();
    let mut st = Stepper::new(&grid, &cfg);
    let mut s = initial_state(&cfg, st.elliptic()).unwrap();
    let mut worst = 0.0_f64;
    let mut scale = s.scale();
    for _ in 0..500 {
        s = st.step(&s, cfg.time.dt_max).unwrap();
        scale = scale.max(s.scale());
        for m in &s.modes {
            for f in [&m.u_r, &m.u_z, &m.v_theta, &m.q, &m.xi] {
                worst = worst.max(f.max_abs());
            }
        }
    }
    report(
        "invariant subspace over 500 steps",
        worst <= 1e-8 * scale,
        &format!("sup of the five vanishing families {worst:.2e}, state scale {scale:.3e} (limit 1e-8 x scale)"),
    );
}

#[test]
fn initial_energy_closed_form() {
    let cfg = demo_config();
    let g = cfg.build_grid().unwrap();
    let tuple = make_stream_data(&g, &cfg.initial).unwrap();
    let n = cfg.modes.n;
    let s: SpectralState = init_state(&tuple, n, cfg.modes.k, &g);
    let params = EnergyParams::default();
    let got = energy_functionals(&s, &params, &mut EnergyAccumulator::default(), 0.0).e_p;
    let (p, a, nn) = (params.p, params.alpha_p, n as f64);
    let pair = |f: &ScalarField, h: &ScalarField| {
        g.weighted_power_integral(f, p - 3.0, p) + g.weighted_power_integral(h, p - 3.0, p)
    };
    let want = nn.powf(-2.0 * a) * pair(&tuple.a_r, &tuple.b_r)
        + nn.powf(-0.5 * p - 2.0 * a) * pair(&tuple.a_theta, &tuple.b_theta)
        + nn.powf(-2.0 * a) * pair(&tuple.a_z, &tuple.b_z);
    let rel = ((got - want) / want).abs();
    report(
        "initial energy closed form",
        rel <= 1e-10,
        &format!("E_p(0) = {got:.12e}, closed form {want:.12e}, relative {rel:.2e} (limit 1e-10)"),
    );
}

#[test]
fn navier_stokes_energy_decay() {
    let mut cfg = demo_config();
    cfg.grid.nr = 32;
    cfg.grid.nz = 64;
    cfg.time.t_final = 0.25;
    cfg.time.diag_every = 1;
    cfg.physics = PhysicsFlags {
        buoyancy: false,
        ..PhysicsFlags::default()
    };
    cfg.initial.c.clear();
    cfg.initial.d.clear();
    let out = run(&cfg).unwrap();
    let u: Vec<f64> = out.record.rows.iter().map(|r| r.u_l2).collect();
    let worst = u
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let pass = out.complete && u.len() > 10 && worst <= 1e-8;
    report(
        "kinetic energy non-increasing without buoyancy",
        pass,
        &format!(
            "{} intervals, |u|_L2 {:.4e} -> {:.4e}, largest relative increase {worst:.2e} (slack 1e-8)",
            u.len().saturating_sub(1),
            u[0],
            u[u.len() - 1]
        ),
    );
}

#[test]
fn n_scaling_trend() {
    let cfg = demo_config();
    let r: SweepReport = run_sweep(&cfg, &[8, 16, 32, 64]).unwrap();
    let _ = std::io::stderr().write_all(r.summary().as_bytes());
    let complete = r.rows.len() == 4 && r.rows.iter().all(|x| x.complete);
    let decreasing = r.rows.windows(2).all(|w| w[1].u_l5 < w[0].u_l5);
    let swirl_decreasing = r
        .rows
        .windows(2)
        .all(|w| w[1].swirl_ratio < w[0].swirl_ratio);
    let slope = r.slope("u_L5").unwrap_or(f64::NAN);
    let swirl = r.slope("swirl_ratio").unwrap_or(f64::NAN);
    let tail = r.slope("varpi_tail_sup").unwrap_or(f64::NAN);
    let pass = complete && decreasing && swirl_decreasing && slope <= -0.1 && swirl <= -0.3;
    report(
        "N-scaling trend",
        pass,
        &format!(
            "L5 slope {slope:.3} (<= -0.1, target -0.2), swirl slope {swirl:.3} (<= -0.3), k>=2 tail slope {tail:.3} vs {:.4} (reported)",
            -2.0 * cfg.energy.alpha_p
        ),
    );
}

#[test]
fn elliptic_decay_chart() {
    let g = Grid::new(4.0, 4.0, 64, 129).unwrap();
    let ell = Elliptic::new(&g);
    let f = ScalarField::from_fn(&g, |r, z| {
        r * r * (-(r - 1.5).powi(2) / 0.25 - z * z / 0.25).exp()
    });
    let chart = decay_chart(&ell, &f, &[2, 4, 8, 16], DecayParams::default(), 1e-10);
    let (pass, detail) = match &chart {
        Ok(c) => (
            c.slope.is_finite(),
            format!(
                "ratios {}, slope {:.3} vs reference {:.3}",
                sci(&c.ratios),
                c.slope,
                c.reference
            ),
        ),
        Err(e) => (false, e.to_string()),
    };
    report("weighted elliptic decay chart", pass, &detail);
}
