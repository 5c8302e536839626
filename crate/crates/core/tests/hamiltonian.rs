mod common;

use std::sync::OnceLock;

use kld::hamiltonian::{build_table, eval_q, PAxis, PGrid, SpectralSolver, TraceControls};
use kld::model::{make_grid, VelocityModel};
use kld::stationary::{solve_stationary, StationaryProfile};
use proptest::prelude::*;

use common::fixture;

struct Setup {
    model: VelocityModel,
    profile: StationaryProfile,
}

fn setup(name: &str) -> Setup {
    let cfg = fixture(name);
    let model = cfg.velocity_model().unwrap();
    let grid = make_grid(model.kind(), cfg.grids.nv, cfg.grids.n_phi).unwrap();
    let profile = solve_stationary(&model, &grid).unwrap();
    Setup { model, profile }
}

fn flat() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| setup("flat-interval.cfg"))
}

fn drift_solver() -> &'static SpectralSolver<'static> {
    static D: OnceLock<Setup> = OnceLock::new();
    static S: OnceLock<SpectralSolver<'static>> = OnceLock::new();
    S.get_or_init(|| {
        let d = D.get_or_init(|| setup("drift-interval.cfg"));
        SpectralSolver::new(&d.model, &d.profile, Default::default()).unwrap()
    })
}

#[test]
fn critical_value_and_classification_agree() {
    let table = build_table(drift_solver(), PGrid::new(vec![PAxis::new(-4.0, 4.0, 41)])).unwrap();
    let mut seen = [false; 2];
    for k in 0..table.len() {
        let (h, hc) = (table.h[k], table.h_crit[k]);
        if table.singular[k] {
            assert_eq!(h, hc, "p = {:?}", table.point(k));
        } else {
            assert!(h > hc, "p = {:?}: {h} <= {hc}", table.point(k));
        }
        seen[table.singular[k] as usize] = true;
    }
    assert!(seen[0] && seen[1], "both branches sampled");
    assert!(table.lipschitz_holds(1e-6), "max slope {}", table.max_slope());
}

#[test]
fn singular_probe_stays_below_one() {
    for p in [1.5, 2.5, 3.0, 4.0] {
        let s = drift_solver().solve([p, 0.0, 0.0]).unwrap();
        assert!(s.singular, "p = {p}");
        assert!(s.integral <= 1.0, "p = {p}: I = {}", s.integral);
    }
}

#[test]
fn continuous_across_the_singular_boundary() {
    let dp = 0.01;
    let table = build_table(drift_solver(), PGrid::new(vec![PAxis::new(1.0, 1.3, 31)])).unwrap();
    let switch = (1..table.len())
        .find(|&k| table.singular[k] != table.singular[k - 1])
        .expect("the boundary lies in [1, 1.3]");
    let jump = (table.h[switch] - table.h[switch - 1]).abs();
    assert!(jump <= table.max_speed * dp * (1.0 + 1e-6), "jump {jump}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn force_free_q_is_algebraic(p in -6.0f64..6.0, lift in 1e-3f64..5.0, v in -1.0f64..1.0) {
        let s = flat();
        let h = p.abs() - 1.0 + lift;
        let q = eval_q(&s.model, &s.profile, [p, 0.0, 0.0], h, [v, 0.0], &TraceControls::default()).unwrap();
        let exact = 1.0 / (1.0 + h - v * p);
        prop_assert!((q.value() - exact).abs() <= 1e-10 * exact.max(1.0), "{} vs {}", q.value(), exact);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn integral_decreases_in_h(p in -4.0f64..4.0) {
        let solver = drift_solver();
        let s = solver.solve([p, 0.0, 0.0]).unwrap();
        let top = s.h + 1.0;
        let values: Vec<f64> = (1..=20)
            .map(|k| solver.normalization_integral([p, 0.0, 0.0], s.h_crit + (top - s.h_crit) * k as f64 / 20.0))
            .collect();
        for w in values.windows(2) {
            prop_assert!(w[1] - w[0] <= 1e-12, "{:?}", values);
        }
    }
}
