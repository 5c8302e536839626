//! The subcommands. Each writes its CSV files into the output directory.

use kld::config::{KineticBlock, RunConfig};
use kld::expr::{Bindings, Expr};
use kld::hamiltonian::{build_table, legendre_transform, HamiltonianTable, SpectralSolver};
use kld::hjsolver::{hj_cfl_limit, solve as hj_solve};
use kld::kinetic::{apriori_upper, bounds_hold, cfl_limit, run as kinetic_run, KineticConfig, KineticRun, SpaceGrid};
use kld::model::{make_grid, Kind, VelocityModel};
use kld::pdmp::ensemble;
use kld::stationary::{solve_stationary, StationaryError, StationaryProfile};

use crate::output::{Cell, CsvOut};
use crate::{Common, Failure, SimulateArgs};

/// Slope tolerance of the Lipschitz check on tables.
const LIPSCHITZ_TOL: f64 = 1e-6;
/// Nodes of the `x` grid of the Legendre transform.
const LEGENDRE_NODES: usize = 201;

fn chart_columns(kind: Kind) -> &'static [&'static str] {
    match kind {
        Kind::Interval => &["v"],
        Kind::Ring => &["theta"],
        Kind::Sphere => &["theta", "phi"],
    }
}

fn profile_on(cfg: &RunConfig, model: &VelocityModel, nv: usize) -> Result<StationaryProfile, Failure> {
    let grid = make_grid(model.kind(), nv, cfg.grids.n_phi)?;
    solve_stationary(model, &grid).map_err(|e| match e {
        StationaryError::Negative { .. } => Failure::Violation(e.to_string()),
        e => Failure::Error(e.to_string()),
    })
}

fn model_and_profile(cfg: &RunConfig) -> Result<(VelocityModel, StationaryProfile), Failure> {
    let model = cfg.velocity_model()?;
    let profile = profile_on(cfg, &model, cfg.grids.nv)?;
    Ok((model, profile))
}

fn table(cfg: &RunConfig) -> Result<HamiltonianTable, Failure> {
    let grid = cfg
        .p_grid()
        .ok_or_else(|| Failure::Error("the configuration has no [hamiltonian] section".into()))?;
    let (model, profile) = model_and_profile(cfg)?;
    let solver = SpectralSolver::new(&model, &profile, cfg.spectral_controls())?;
    Ok(build_table(&solver, grid)?)
}

fn potential(expr: &Expr) -> impl Fn(f64) -> f64 + Sync + '_ {
    move |x| expr.eval(&Bindings::new().with_x(x)).unwrap_or(f64::NAN)
}

fn kinetic_block(cfg: &RunConfig) -> Result<&KineticBlock, Failure> {
    cfg.kinetic
        .as_ref()
        .ok_or_else(|| Failure::Error("the configuration has no [kinetic] section".into()))
}

pub fn validate(cfg: &RunConfig, c: &Common) -> Result<(), Failure> {
    let model = cfg.velocity_model()?;
    let report = model.validate(cfg.grids.nv)?;
    let mut out = CsvOut::create(&c.out, "validate.csv", &["check", "value", "threshold", "pass", "detail"])?;
    let mut failures: Vec<String> = Vec::new();
    for check in &report.checks {
        out.row(vec![
            check.name.into(),
            check.value.into(),
            check.threshold.into(),
            check.pass.into(),
            check.detail.clone().into(),
        ])?;
        if !check.pass {
            failures.push(check.name.to_string());
        }
    }
    match profile_on(cfg, &model, cfg.grids.nv) {
        Ok(profile) => {
            let b = profile.bounds(&model);
            let rows = [
                ("profile_mass", b.mass, 1.0, b.mass_holds(), "sum of w M~ equals 1"),
                ("profile_min", b.min, 0.0, b.min > 0.0, "M~ is positive"),
                ("profile_max", b.max, b.upper, b.upper_holds(), "M~ stays below max M / alpha"),
            ];
            for (name, value, threshold, pass, detail) in rows {
                out.row(vec![name.into(), value.into(), threshold.into(), pass.into(), detail.into()])?;
                if !pass {
                    failures.push(name.to_string());
                }
            }
        }
        Err(Failure::Violation(msg)) => {
            out.row(vec!["profile".into(), Cell::Empty, Cell::Empty, false.into(), msg.into()])?;
            failures.push("profile".into());
        }
        Err(e) => return Err(e),
    }
    out.finish()?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Violation(format!("failed checks: {}", failures.join(", "))))
    }
}

pub fn stationary(cfg: &RunConfig, c: &Common) -> Result<(), Failure> {
    let (model, profile) = model_and_profile(cfg)?;
    let grid = profile.grid();
    let mut header: Vec<&str> = chart_columns(grid.kind).to_vec();
    header.extend(["M", "M_tilde", "ratio"]);
    let mut out = CsvOut::create(&c.out, "stationary.csv", &header)?;
    let ratios = profile.node_ratios();
    for (k, node) in grid.nodes.iter().enumerate() {
        let mut row: Vec<Cell> = node[..grid.kind.chart_dim()].iter().map(|&x| x.into()).collect();
        row.extend([profile.m_values()[k].into(), profile.values()[k].into(), ratios[k].into()]);
        out.row(row)?;
    }
    out.finish()?;
    let b = profile.bounds(&model);
    if b.holds() {
        Ok(())
    } else {
        Err(Failure::Violation(format!(
            "profile bounds fail: mass {}, min {}, max {} (upper {})",
            b.mass, b.min, b.max, b.upper
        )))
    }
}

fn lipschitz(table: &HamiltonianTable) -> Result<(), Failure> {
    if table.lipschitz_holds(LIPSCHITZ_TOL) {
        Ok(())
    } else {
        Err(Failure::Violation(format!(
            "table slope {} exceeds max |v| = {}",
            table.max_slope(),
            table.max_speed
        )))
    }
}

pub fn hamiltonian(cfg: &RunConfig, c: &Common) -> Result<(), Failure> {
    let t = table(cfg)?;
    let d = t.grid.axes.len();
    let names = ["p1", "p2", "p3"];
    let mut header: Vec<&str> = names[..d].to_vec();
    header.extend(["H", "H_crit", "singular", "residual"]);
    let mut out = CsvOut::create(&c.out, "hamiltonian.csv", &header)?;
    for k in 0..t.len() {
        let p = t.point(k);
        let mut row: Vec<Cell> = p[..d].iter().map(|&x| x.into()).collect();
        row.extend([t.h[k].into(), t.h_crit[k].into(), t.singular[k].into(), t.residual[k].into()]);
        out.row(row)?;
    }
    out.finish()?;
    lipschitz(&t)
}

pub fn legendre(cfg: &RunConfig, c: &Common) -> Result<(), Failure> {
    let t = table(cfg)?;
    let rate = legendre_transform(&t)?;
    if !rate.is_convex(kld::hjsolver::CONVEXITY_TOL) {
        eprintln!(
            "kld: the table is not convex (second difference {:e}); L is the convex envelope's transform",
            rate.min_second_difference()
        );
    }
    let mut out = CsvOut::create(&c.out, "legendre.csv", &["x", "L", "argmax", "boundary"])?;
    let s = t.max_speed;
    for k in 0..LEGENDRE_NODES {
        let x = -s + 2.0 * s * k as f64 / (LEGENDRE_NODES - 1) as f64;
        let v = rate.value(x);
        out.row(vec![v.x.into(), v.l.into(), v.argmax.into(), v.boundary.into()])?;
    }
    out.finish()?;
    Ok(())
}

pub fn hj(cfg: &RunConfig, c: &Common) -> Result<(), Failure> {
    let block = cfg
        .hj
        .as_ref()
        .ok_or_else(|| Failure::Error("the configuration has no [hj] section".into()))?;
    let phi0 = cfg
        .hj_phi0()
        .ok_or_else(|| Failure::Error("no initial potential in [hj] or [kinetic]".into()))?;
    let t = table(cfg)?;
    let space = SpaceGrid::new(cfg.grids.length, cfg.grids.nx)?;
    let dt = block.dt.unwrap_or_else(|| hj_cfl_limit(space, t.max_speed));
    let f0 = potential(phi0);
    let sol = hj_solve(&f0, &t, block.t_final, space, dt)?;
    if sol.clamps > 0 {
        eprintln!("kld: {} momentum lookups fell outside the table and were clamped", sol.clamps);
    }
    let mut out = CsvOut::create(&c.out, "hj.csv", &["t", "x", "phi"])?;
    for (j, x) in space.nodes().into_iter().enumerate() {
        out.row(vec![0.0.into(), x.into(), f0(x).into()])?;
        let _ = j;
    }
    for (j, x) in space.nodes().into_iter().enumerate() {
        out.row(vec![sol.field.t.into(), x.into(), sol.field.phi[j].into()])?;
    }
    out.finish()?;
    lipschitz(&t)
}

struct KineticSetup {
    model: VelocityModel,
    profile: StationaryProfile,
    space: SpaceGrid,
}

fn kinetic_setup(cfg: &RunConfig, block: &KineticBlock) -> Result<KineticSetup, Failure> {
    let model = cfg.velocity_model()?;
    let profile = profile_on(cfg, &model, block.nv.unwrap_or(cfg.grids.nv))?;
    let space = SpaceGrid::new(cfg.grids.length, block.nx.unwrap_or(cfg.grids.nx))?;
    Ok(KineticSetup { model, profile, space })
}

fn kinetic_runs(block: &KineticBlock, s: &KineticSetup) -> Result<Vec<KineticRun>, Failure> {
    let f0 = potential(&block.phi0);
    let vmax = s.profile.grid().points.iter().fold(0.0f64, |a, p| a.max(p[0].abs()));
    let dt = block.dt.unwrap_or_else(|| cfl_limit(s.space, vmax));
    block
        .eps
        .iter()
        .map(|&eps| {
            let kc = KineticConfig {
                eps,
                t_final: block.t_final,
                dt,
                space: s.space,
                snapshots: block.snapshots.clone(),
            };
            kinetic_run(&s.model, &s.profile, &f0, &kc).map_err(Failure::from)
        })
        .collect()
}

fn check_bounds(runs: &[KineticRun], profile: &StationaryProfile) -> Result<(), Failure> {
    for run in runs {
        for snap in &run.snapshots {
            let upper = apriori_upper(profile, run.phi0_max, snap.t);
            if !bounds_hold(snap, upper) {
                return Err(Failure::Violation(format!(
                    "a priori bounds fail at eps = {}, t = {}: phi in [{}, {}], upper {}",
                    snap.eps,
                    snap.t,
                    snap.min(),
                    snap.max(),
                    upper
                )));
            }
        }
    }
    Ok(())
}

pub fn kinetic(cfg: &RunConfig, c: &Common) -> Result<(), Failure> {
    let block = kinetic_block(cfg)?;
    let s = kinetic_setup(cfg, block)?;
    let runs = kinetic_runs(block, &s)?;
    let mut snaps = CsvOut::create(&c.out, "kinetic.csv", &["eps", "t", "x", "v", "f", "phi"])?;
    let mut diags = CsvOut::create(
        &c.out,
        "kinetic_diagnostics.csv",
        &["eps", "t", "mass", "min_f", "bound_margin"],
    )?;
    let speeds: Vec<f64> = s.profile.grid().points.iter().map(|p| p[0]).collect();
    for run in &runs {
        for (pot, dens) in run.snapshots.iter().zip(&run.densities) {
            for (j, x) in s.space.nodes().into_iter().enumerate() {
                for (i, &v) in speeds.iter().enumerate() {
                    snaps.row(vec![
                        pot.eps.into(),
                        pot.t.into(),
                        x.into(),
                        v.into(),
                        dens.at(j, i).into(),
                        pot.at(j, i).into(),
                    ])?;
                }
            }
        }
        for d in &run.diagnostics {
            diags.row(vec![
                run.final_field.eps.into(),
                d.t.into(),
                d.mass.into(),
                d.min_f.into(),
                d.bound_margin.into(),
            ])?;
        }
    }
    snaps.finish()?;
    diags.finish()?;
    check_bounds(&runs, &s.profile)
}

pub fn simulate(cfg: &RunConfig, a: &SimulateArgs) -> Result<(), Failure> {
    let block = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| Failure::Error("the configuration has no [simulate] section".into()))?;
    let model = cfg.velocity_model()?;
    let n = a.n.unwrap_or(block.n);
    let t_final = a.t_final.unwrap_or(block.t_final);
    let seed = a.common.seed.unwrap_or(block.seed);
    let multiples = a.p_list.clone().unwrap_or_else(|| block.p_list.clone());
    let ps: Vec<_> = multiples.iter().map(|&m| block.p_direction.map(|d| m * d)).collect();
    let stats = ensemble(&model, n, t_final, &ps, seed)?;
    let dir = &a.common.out;
    let mut cgf = CsvOut::create(dir, "simulate.csv", &["p", "lambda", "se"])?;
    for (m, est) in multiples.iter().zip(&stats.cgf) {
        cgf.row(vec![(*m).into(), est.value.into(), est.se.into()])?;
    }
    cgf.finish()?;
    let mut summary = CsvOut::create(dir, "simulate_summary.csv", &["quantity", "value", "se"])?;
    summary.row(vec!["n".into(), n.into(), Cell::Empty])?;
    summary.row(vec!["t_final".into(), t_final.into(), Cell::Empty])?;
    summary.row(vec!["base_seed".into(), seed.into(), Cell::Empty])?;
    let d = model.kind().dim();
    for k in 0..d {
        summary.row(vec![format!("mean_x{}", k + 1).into(), stats.mean[k].into(), stats.mean_se[k].into()])?;
    }
    for i in 0..d {
        for j in 0..d {
            summary.row(vec![
                format!("cov_x{}_x{}", i + 1, j + 1).into(),
                stats.covariance[i][j].into(),
                Cell::Empty,
            ])?;
        }
    }
    summary.row(vec!["jump_rate".into(), stats.jump_rate.into(), Cell::Empty])?;
    summary.finish()?;
    if a.endpoints {
        let mut ends = CsvOut::create(dir, "endpoints.csv", &["seed", "x1", "x2", "x3", "v1", "v2", "v3", "jumps"])?;
        for (k, e) in stats.endpoints.iter().enumerate() {
            ends.row(vec![
                seed.wrapping_add(k as u64).into(),
                e.x[0].into(),
                e.x[1].into(),
                e.x[2].into(),
                e.v[0].into(),
                e.v[1].into(),
                e.v[2].into(),
                e.jumps.into(),
            ])?;
        }
        ends.finish()?;
    }
    Ok(())
}

pub fn compare(cfg: &RunConfig, c: &Common) -> Result<(), Failure> {
    let block = kinetic_block(cfg)?;
    let s = kinetic_setup(cfg, block)?;
    let t = table(cfg)?;
    let hj_dt = cfg
        .hj
        .as_ref()
        .and_then(|h| h.dt)
        .unwrap_or_else(|| hj_cfl_limit(s.space, t.max_speed));
    let f0 = potential(&block.phi0);
    let limit = hj_solve(&f0, &t, block.t_final, s.space, hj_dt)?;
    let runs = kinetic_runs(block, &s)?;
    let mut out = CsvOut::create(&c.out, "compare.csv", &["eps", "t", "linf_error", "l1_error", "velocity_spread"])?;
    for run in &runs {
        let last = run.snapshots.last().expect("runs keep the final snapshot");
        let avg = last.velocity_average();
        let diff: Vec<f64> = avg.iter().zip(&limit.field.phi).map(|(a, b)| (a - b).abs()).collect();
        let linf = diff.iter().copied().fold(0.0, f64::max);
        let l1 = diff.iter().sum::<f64>() * s.space.dx();
        out.row(vec![
            last.eps.into(),
            last.t.into(),
            linf.into(),
            l1.into(),
            last.velocity_spread().into(),
        ])?;
    }
    out.finish()?;
    check_bounds(&runs, &s.profile)?;
    lipschitz(&t)
}
