mod common;

use std::sync::OnceLock;

use kld::hamiltonian::{build_table, HamiltonianTable, PAxis, PGrid, SpectralSolver};
use kld::hjsolver::{hj_cfl_limit, lf_step, ScalarField1D};
use kld::kinetic::SpaceGrid;
use kld::model::make_grid;
use kld::stationary::solve_stationary;
use proptest::prelude::*;

use common::fixture;

fn table(name: &'static str, cell: &'static OnceLock<HamiltonianTable>) -> &'static HamiltonianTable {
    cell.get_or_init(|| {
        let cfg = fixture(name);
        let model = cfg.velocity_model().unwrap();
        let profile = solve_stationary(&model, &make_grid(model.kind(), 128, None).unwrap()).unwrap();
        let solver = SpectralSolver::new(&model, &profile, Default::default()).unwrap();
        build_table(&solver, PGrid::new(vec![PAxis::new(-5.0, 5.0, 41)])).unwrap()
    })
}

fn flat() -> &'static HamiltonianTable {
    static T: OnceLock<HamiltonianTable> = OnceLock::new();
    table("flat-interval.cfg", &T)
}

const NX: usize = 32;

fn space() -> SpaceGrid {
    SpaceGrid::new(1.0, NX).unwrap()
}

fn field(phi: Vec<f64>) -> ScalarField1D {
    ScalarField1D { t: 0.0, space: space(), phi }
}

fn step(phi: &[f64]) -> Vec<f64> {
    let t = flat();
    let dt = hj_cfl_limit(space(), t.max_speed);
    lf_step(&field(phi.to_vec()), t, dt, t.max_speed).unwrap().0.phi
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.1f64..0.1, NX)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn numerical_hamiltonian_is_monotone(phi in values(), j in 0usize..NX, side in prop::bool::ANY, bump in 1e-4f64..0.05) {
        let dt = hj_cfl_limit(space(), flat().max_speed);
        let before = step(&phi);
        let mut raised = phi.clone();
        let k = if side { (j + 1) % NX } else { (j + NX - 1) % NX };
        raised[k] += bump;
        let after = step(&raised);
        let h_before = (phi[j] - before[j]) / dt;
        let h_after = (raised[j] - after[j]) / dt;
        prop_assert!(h_after <= h_before + 1e-9, "{} -> {}", h_before, h_after);
    }

    #[test]
    fn comparison_principle(phi in values(), gap in prop::collection::vec(0.0f64..0.05, NX)) {
        let psi: Vec<f64> = phi.iter().zip(&gap).map(|(a, g)| a + g).collect();
        let (a, b) = (step(&phi), step(&psi));
        for j in 0..NX {
            prop_assert!(a[j] <= b[j] + 1e-15, "node {}: {} > {}", j, a[j], b[j]);
        }
    }

    #[test]
    fn constants_shift_the_evolution(phi in values(), c in -2.0f64..2.0) {
        let shifted: Vec<f64> = phi.iter().map(|x| x + c).collect();
        let (a, b) = (step(&phi), step(&shifted));
        for j in 0..NX {
            prop_assert!((b[j] - a[j] - c).abs() <= 1e-12);
        }
    }

    #[test]
    fn translation_equivariance(phi in values()) {
        let mut rolled = phi.clone();
        rolled.rotate_right(1);
        let mut a = step(&phi);
        a.rotate_right(1);
        prop_assert_eq!(a, step(&rolled));
    }
}

#[test]
fn constants_are_steady_on_fixture_tables() {
    static D: OnceLock<HamiltonianTable> = OnceLock::new();
    for t in [flat(), table("drift-interval.cfg", &D)] {
        let dt = hj_cfl_limit(space(), t.max_speed);
        let (out, _) = lf_step(&field(vec![0.7; NX]), t, dt, t.max_speed).unwrap();
        assert!(out.phi.iter().all(|&x| x == 0.7 - dt * t.interpolate(&[0.0]).0));
        assert!(t.interpolate(&[0.0]).0.abs() <= 1e-8);
    }
}
