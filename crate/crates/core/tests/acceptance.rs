//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::time::{Duration, Instant};

use kld::config::RunConfig;
use kld::expr::{parse, Bindings, Expr};
use kld::hamiltonian::{
    build_table, legendre_transform, HamiltonianTable, PAxis, PGrid, ResidualProbe, SpectralSolver,
};
use kld::hjsolver::{hj_cfl_limit, hopf_lax_oracle, solve as hj_solve, CONVEXITY_TOL};
use kld::kinetic::{cfl_limit, run as kinetic_run, KineticConfig, KineticRun, SpaceGrid, BOUND_ROUNDING};
use kld::model::{make_grid, Vec3, VelocityModel};
use kld::pdmp::ensemble;
use kld::stationary::{solve_stationary, StationaryProfile};
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{arb_expr, fixture, parser_suite};

/// Floor below which a residual is rounding noise and refinement cannot
/// reduce it further.
const RESIDUAL_FLOOR: f64 = 1e-10;

struct Fixture {
    name: &'static str,
    cfg: RunConfig,
    model: VelocityModel,
    profile: StationaryProfile,
}

impl Fixture {
    fn load(name: &'static str) -> &'static Fixture {
        let cfg = fixture(&format!("{name}.cfg"));
        let model = cfg.velocity_model().unwrap();
        let profile = profile(&cfg, &model, cfg.grids.nv);
        Box::leak(Box::new(Fixture {
            name,
            cfg,
            model,
            profile,
        }))
    }

    fn solver(&'static self) -> SpectralSolver<'static> {
        SpectralSolver::new(&self.model, &self.profile, self.cfg.spectral_controls()).unwrap()
    }

    fn table(&'static self, solver: &SpectralSolver) -> HamiltonianTable {
        build_table(solver, self.cfg.p_grid().unwrap()).unwrap()
    }

    fn phi0(&self) -> Expr {
        self.cfg.kinetic.as_ref().unwrap().phi0.clone()
    }

    fn kinetic_profile(&self) -> StationaryProfile {
        profile(&self.cfg, &self.model, self.cfg.kinetic.as_ref().unwrap().nv.unwrap())
    }

    fn kinetic_space(&self) -> SpaceGrid {
        SpaceGrid::new(self.cfg.grids.length, self.cfg.kinetic.as_ref().unwrap().nx.unwrap()).unwrap()
    }
}

fn profile(cfg: &RunConfig, model: &VelocityModel, nv: usize) -> StationaryProfile {
    let grid = make_grid(model.kind(), nv, cfg.grids.n_phi).unwrap();
    solve_stationary(model, &grid).unwrap()
}

fn potential(expr: &Expr) -> impl Fn(f64) -> f64 + Sync + '_ {
    move |x| expr.eval(&Bindings::new().with_x(x)).unwrap()
}

fn flat_h(p: f64) -> f64 {
    if p.abs() < 1e-4 {
        p * p / 3.0 - p.powi(4) / 45.0
    } else {
        p / p.tanh() - 1.0
    }
}

struct Report {
    lines: Vec<(usize, bool, String)>,
}

impl Report {
    fn record(&mut self, id: usize, pass: bool, detail: String) {
        println!("criterion {id:>2} {} {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((id, pass, detail));
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

fn main() {
    let started = Instant::now();
    let mut report = Report { lines: Vec::new() };

    let flat = Fixture::load("flat-interval");
    let drift = Fixture::load("drift-interval");
    let rotor = Fixture::load("sphere-rotor");
    let mut profiles: Vec<(String, &VelocityModel, StationaryProfile)> = Vec::new();

    // 1: flat closed form, single-threaded.
    let t1 = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let flat_table = pool.install(|| {
        let solver = flat.solver();
        build_table(&solver, PGrid::new(vec![PAxis::new(-5.0, 5.0, 101)])).unwrap()
    });
    let elapsed = t1.elapsed();
    let worst = (0..flat_table.len())
        .map(|k| (flat_table.h[k] - flat_h(flat_table.point(k)[0])).abs())
        .fold(0.0, f64::max);
    report.record(
        1,
        worst <= 1e-6 && elapsed <= Duration::from_secs(10),
        format!("flat max |H - (p/tanh p - 1)| = {worst:.2e} (tol 1e-6), {} single-threaded (limit 10 s)", secs(elapsed)),
    );

    let flat_solver = flat.solver();
    let drift_solver = drift.solver();
    let t_rotor = Instant::now();
    let rotor_solver = rotor.solver();
    println!("  rotor solver setup {}", secs(t_rotor.elapsed()));

    // 2: H(0) = 0.
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for (fx, solver) in [(flat, &flat_solver), (drift, &drift_solver), (rotor, &rotor_solver)] {
        let h = solver.solve([0.0; 3]).unwrap().h;
        worst = worst.max(h.abs());
        detail.push(format!("{} {h:.1e}", fx.name));
    }
    report.record(2, worst <= 1e-8, format!("H(0): {} (tol 1e-8)", detail.join(", ")));

    // 3: rotor singular branch H = c - 1.
    let mut found = Vec::new();
    let mut worst = 0.0f64;
    for k in 0..=60 {
        if found.len() == 20 {
            break;
        }
        let c = 0.5 * k as f64;
        let sol = rotor_solver.solve([0.0, 0.0, c]).unwrap();
        if sol.singular {
            worst = worst.max((sol.h - (c - 1.0)).abs());
            found.push(c);
        }
    }
    report.record(
        3,
        found.len() == 20 && worst <= 1e-4,
        format!(
            "rotor: {} singular c in [{}, {}], max |H - (c - 1)| = {worst:.2e} (tol 1e-4)",
            found.len(),
            found.first().unwrap_or(&f64::NAN),
            found.last().unwrap_or(&f64::NAN)
        ),
    );

    // 4: spectral consistency on 50 random regular momenta.
    let t4 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cases: [(&Fixture, &SpectralSolver, usize, [f64; 2], usize); 3] = [
        (flat, &flat_solver, 0, [-5.0, 5.0], 17),
        (drift, &drift_solver, 0, [-3.0, -0.5], 17),
        (rotor, &rotor_solver, 2, [-6.0, 6.0], 16),
    ];
    let (mut count, mut worst_i, mut worst_r, mut not_refined) = (0usize, 0.0f64, 0.0f64, Vec::new());
    let mut errors = Vec::new();
    for (fx, solver, axis, range, n) in cases {
        let fine = profile(&fx.cfg, &fx.model, 2 * fx.cfg.grids.nv);
        let ctl = fx.cfg.spectral_controls().trace;
        let coarse_probe = ResidualProbe::new(&fx.model, &fx.profile, &ctl).unwrap();
        let fine_probe = ResidualProbe::new(&fx.model, &fine, &ctl).unwrap();
        let mut done = 0;
        while done < n {
            let mut p: Vec3 = [0.0; 3];
            p[axis] = rng.random_range(range[0]..range[1]);
            let sol = match solver.solve(p) {
                Ok(s) if !s.singular => s,
                Ok(_) => continue,
                Err(e) => {
                    errors.push(format!("{} p = {p:?}: {e}", fx.name));
                    done += 1;
                    continue;
                }
            };
            done += 1;
            count += 1;
            worst_i = worst_i.max((sol.integral - 1.0).abs());
            match (coarse_probe.residual(&sol), fine_probe.residual(&sol)) {
                (Ok(r1), Ok(r2)) => {
                    worst_r = worst_r.max(r1);
                    if !(r2 < r1 || r2 <= RESIDUAL_FLOOR) {
                        not_refined.push(format!("{} p = {:.3}: {r1:.2e} -> {r2:.2e}", fx.name, p[axis]));
                    }
                }
                (a, b) => errors.push(format!("{} p = {p:?}: {a:?} {b:?}", fx.name)),
            }
        }
        profiles.push((format!("{} refined", fx.name), &fx.model, fine));
    }
    report.record(
        4,
        count == 50 && errors.is_empty() && worst_i <= 1e-8 && worst_r <= 1e-4 && not_refined.is_empty(),
        format!(
            "{count} regular p: max |I - 1| = {worst_i:.2e} (tol 1e-8), max residual {worst_r:.2e} (tol 1e-4), \
             {} not reduced by refinement, {} errors{}, {}",
            not_refined.len(),
            errors.len(),
            not_refined.iter().chain(&errors).map(|s| format!("; {s}")).collect::<String>(),
            secs(t4.elapsed())
        ),
    );

    // 5: I(p, .) decreasing along chains above H_crit.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_rise = f64::NEG_INFINITY;
    let chains: [(&Fixture, &SpectralSolver, usize, [f64; 2], usize); 3] = [
        (flat, &flat_solver, 0, [-5.0, 5.0], 7),
        (drift, &drift_solver, 0, [-4.0, 4.0], 7),
        (rotor, &rotor_solver, 2, [-12.0, 12.0], 6),
    ];
    for (_, solver, axis, range, n) in chains {
        for _ in 0..n {
            let mut p: Vec3 = [0.0; 3];
            p[axis] = rng.random_range(range[0]..range[1]);
            let sol = solver.solve(p).unwrap();
            let top = sol.h + 1.0;
            let values: Vec<f64> = (1..=20)
                .map(|k| {
                    let h = sol.h_crit + (top - sol.h_crit) * k as f64 / 20.0;
                    solver.normalization_integral(p, h)
                })
                .collect();
            for w in values.windows(2) {
                let rise = w[1] - w[0];
                worst_rise = worst_rise.max(if rise.is_nan() { f64::INFINITY } else { rise });
            }
        }
    }
    report.record(
        5,
        worst_rise <= 1e-12,
        format!("20 chains of 20 H values: largest step I(h_k+1) - I(h_k) = {worst_rise:.2e} (tol 1e-12)"),
    );

    // Tables of every fixture.
    let t_tables = Instant::now();
    let drift_table = drift.table(&drift_solver);
    let drift_table_time = t_tables.elapsed();
    let rotor_table = rotor.table(&rotor_solver);
    let fixture_flat_table = flat.table(&flat_solver);

    // 6: Lipschitz bound on every table.
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, t) in [
        ("flat", &flat_table),
        ("flat fixture", &fixture_flat_table),
        ("drift", &drift_table),
        ("rotor", &rotor_table),
    ] {
        pass &= t.lipschitz_holds(1e-6);
        detail.push(format!("{name} {:.10} / {}", t.max_slope(), t.max_speed));
    }
    report.record(6, pass, format!("max slope / max |v|: {} (rel tol 1e-6)", detail.join(", ")));

    // 10 first: its runs feed 8 and the profile list feeds 7.
    let t10 = Instant::now();
    let kin = drift.cfg.kinetic.as_ref().unwrap();
    let drift_kprofile = drift.kinetic_profile();
    let space = drift.kinetic_space();
    let phi0_expr = drift.phi0();
    let phi0 = potential(&phi0_expr);
    let limit = hj_solve(&phi0, &drift_table, kin.t_final, space, hj_cfl_limit(space, drift_table.max_speed)).unwrap();
    let vmax = drift_kprofile.grid().points.iter().fold(0.0f64, |a, p| a.max(p[0].abs()));
    let mut runs: Vec<(String, &StationaryProfile, KineticRun)> = Vec::new();
    let (mut errs, mut spreads) = (Vec::new(), Vec::new());
    for &eps in &kin.eps {
        let config = KineticConfig {
            eps,
            t_final: kin.t_final,
            dt: cfl_limit(space, vmax),
            space,
            snapshots: kin.snapshots.clone(),
        };
        let run = kinetic_run(&drift.model, &drift_kprofile, &phi0, &config).unwrap();
        let last = run.snapshots.last().unwrap();
        errs.push(limit.field.max_abs_diff(&last.velocity_average()));
        spreads.push(last.velocity_spread());
        runs.push((format!("drift eps {eps}"), &drift_kprofile, run));
    }
    let elapsed = t10.elapsed() + drift_table_time;
    let decreasing = |x: &[f64]| x.windows(2).all(|w| w[1] < w[0]);
    let pass10 = kin.eps == [0.4, 0.2, 0.1]
        && decreasing(&errs)
        && decreasing(&spreads)
        && elapsed <= Duration::from_secs(300);
    let line10 = format!(
        "drift nx {} nv {} T {}: e(eps) = {:.4?}, spread = {:.4?} for eps = {:?}, {} with table (limit 300 s)",
        space.nx,
        drift_kprofile.grid().len(),
        kin.t_final,
        errs,
        spreads,
        kin.eps,
        secs(elapsed)
    );

    // 9: mass over 1000 steps on the interval fixtures.
    let flat_kprofile = flat.kinetic_profile();
    let mut worst_drift = 0.0f64;
    let mut steps = Vec::new();
    for (fx, kp) in [(flat, &flat_kprofile), (drift, &drift_kprofile)] {
        let space = fx.kinetic_space();
        let vmax = kp.grid().points.iter().fold(0.0f64, |a, p| a.max(p[0].abs()));
        let dt = cfl_limit(space, vmax);
        let expr = fx.phi0();
        let config = KineticConfig {
            eps: 0.1,
            t_final: 1000.0 * dt,
            dt,
            space,
            snapshots: vec![250.0 * dt, 500.0 * dt, 750.0 * dt],
        };
        let run = kinetic_run(&fx.model, kp, potential(&expr), &config).unwrap();
        worst_drift = worst_drift.max(run.mass_drift());
        steps.push(run.diagnostics.len() - 1);
        runs.push((format!("{} 1000 steps", fx.name), kp, run));
    }
    let line9 = format!(
        "relative mass drift {worst_drift:.2e} over {steps:?} steps on flat and drift (tol 1e-9)"
    );
    let pass9 = worst_drift <= 1e-9 && steps.iter().all(|&n| n >= 1000);

    // 7: every stationary solve made here.
    profiles.push(("flat".into(), &flat.model, flat.profile.clone()));
    profiles.push(("drift".into(), &drift.model, drift.profile.clone()));
    profiles.push(("rotor".into(), &rotor.model, rotor.profile.clone()));
    profiles.push(("flat kinetic".into(), &flat.model, flat_kprofile.clone()));
    profiles.push(("drift kinetic".into(), &drift.model, drift_kprofile.clone()));
    let mut bad = Vec::new();
    let (mut worst_mass, mut min_min, mut worst_ratio) = (0.0f64, f64::INFINITY, 0.0f64);
    for (name, model, p) in &profiles {
        let b = p.bounds(model);
        worst_mass = worst_mass.max((b.mass - 1.0).abs());
        min_min = min_min.min(b.min);
        worst_ratio = worst_ratio.max(b.max / b.upper);
        if !b.holds() {
            bad.push(name.clone());
        }
    }
    report.record(
        7,
        bad.is_empty(),
        format!(
            "{} profiles: max |mass - 1| = {worst_mass:.1e}, min M~ = {min_min:.3}, max M~ / (max M / alpha) = {worst_ratio:.15}{}",
            profiles.len(),
            if bad.is_empty() { String::new() } else { format!("; failing: {bad:?}") }
        ),
    );

    // 8: a priori bounds on every snapshot and every step.
    let mut failing = Vec::new();
    let mut least = f64::INFINITY;
    let mut count = 0usize;
    for (name, kp, run) in &runs {
        let eps = run.final_field.eps;
        count += run.diagnostics.len();
        let step_margin = run.diagnostics.iter().map(|d| d.bound_margin).fold(f64::INFINITY, f64::min);
        least = least.min(step_margin);
        if !run.bounds_hold(kp) || step_margin < -eps * BOUND_ROUNDING {
            failing.push(name.clone());
        }
    }
    report.record(
        8,
        failing.is_empty(),
        format!(
            "{} kinetic runs, {count} states: least margin to 0 <= phi <= upper is {least:.2e}{}",
            runs.len(),
            if failing.is_empty() { String::new() } else { format!("; failing: {failing:?}") }
        ),
    );
    report.record(9, pass9, line9);
    report.record(10, pass10, line10);

    // 11: HJ scheme against the Hopf-Lax formula on the flat fixture.
    let convex = fixture_flat_table.is_convex(CONVEXITY_TOL);
    let rate = legendre_transform(&fixture_flat_table).unwrap();
    let hj = flat.cfg.hj.as_ref().unwrap();
    let flat_phi0 = flat.cfg.hj_phi0().unwrap().clone();
    let f0 = potential(&flat_phi0);
    let error_at = |nx: usize| {
        let space = SpaceGrid::new(flat.cfg.grids.length, nx).unwrap();
        let s = fixture_flat_table.max_speed;
        let sol = hj_solve(&f0, &fixture_flat_table, hj.t_final, space, hj_cfl_limit(space, s)).unwrap();
        let oracle = hopf_lax_oracle(&f0, &rate, hj.t_final, space, s).unwrap();
        sol.field.max_abs_diff(&oracle)
    };
    let nx = flat.cfg.grids.nx;
    let (e1, e2) = (error_at(nx), error_at(2 * nx));
    report.record(
        11,
        convex && nx == 256 && e1 <= 5e-2 && e1 / e2 >= 1.4,
        format!(
            "flat T {}: L-inf error {e1:.3e} at nx {nx} (tol 5e-2), {e2:.3e} at nx {}, ratio {:.2} (min 1.4), convex {convex}",
            hj.t_final,
            2 * nx,
            e1 / e2
        ),
    );

    // 12: Monte Carlo CGF on the flat fixture.
    let sim = flat.cfg.simulate.as_ref().unwrap();
    let t12 = Instant::now();
    let stats = ensemble(&flat.model, 200_000, 200.0, &[[0.5, 0.0, 0.0]], sim.seed).unwrap();
    let elapsed = t12.elapsed();
    let est = &stats.cgf[0];
    let exact = 0.082323;
    let dev = (est.value - exact).abs();
    report.record(
        12,
        dev <= 3.0 * est.se + 0.02 && elapsed <= Duration::from_secs(120),
        format!(
            "flat p 0.5 t 200 n 2e5: Lambda = {:.5} (se {:.5}), |Lambda - {exact}| = {dev:.5} <= {:.5}, {} on {} threads (limit 120 s)",
            est.value,
            est.se,
            3.0 * est.se + 0.02,
            secs(elapsed),
            rayon::current_num_threads()
        ),
    );

    // 13: Monte Carlo drift against the gradient of H at 0.
    let sim = drift.cfg.simulate.as_ref().unwrap();
    let t13 = Instant::now();
    let stats = ensemble(&drift.model, 100_000, 100.0, &[], sim.seed).unwrap();
    let probe = build_table(&drift_solver, PGrid::new(vec![PAxis::new(-1e-3, 1e-3, 3)])).unwrap();
    let grad = (probe.h[2] - probe.h[0]) / 2e-3;
    let (mean, se) = (stats.mean[0], stats.mean_se[0]);
    report.record(
        13,
        (mean - grad).abs() <= 3.0 * se,
        format!(
            "drift n 1e5 t 100: mean X/t = {mean:.5} (se {se:.5}), grad H(0) = {grad:.5}, |diff| = {:.5} <= {:.5}, {}",
            (mean - grad).abs(),
            3.0 * se,
            secs(t13.elapsed())
        ),
    );

    // 14: parser suite and print-parse round trip.
    let failures = parser_suite();
    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    let round_trip = runner.run(&arb_expr(), |e| {
        let printed = e.to_string();
        match parse(&printed) {
            Ok(back) if back == e => Ok(()),
            other => Err(TestCaseError::fail(format!("`{printed}` reparsed as {other:?}"))),
        }
    });
    report.record(
        14,
        failures.is_empty() && round_trip.is_ok(),
        format!(
            "parser suite: {} failures; round trip on 10000 random trees: {}{}",
            failures.len(),
            match &round_trip {
                Ok(()) => "ok".to_string(),
                Err(e) => e.to_string(),
            },
            failures.iter().map(|f| format!("; {f}")).collect::<String>()
        ),
    );

    report.lines.sort_by_key(|l| l.0);
    let failed: Vec<usize> = report.lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    println!("\nsummary ({}):", secs(started.elapsed()));
    for (id, pass, _) in &report.lines {
        println!("  criterion {id:>2} {}", if *pass { "PASS" } else { "FAIL" });
    }
    if !failed.is_empty() {
        println!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
