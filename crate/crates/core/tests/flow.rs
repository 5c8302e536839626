use kld::expr::parse;
use kld::flow::{classify_omega_limit, integrate_flow, integrate_forward, FlowControls};
use kld::model::{Kind, VelocityModel};
use proptest::prelude::*;

fn model(kind: Kind, m: &str, gamma: &[&str]) -> VelocityModel {
    VelocityModel::new(kind, parse(m).unwrap(), gamma.iter().map(|g| parse(g).unwrap()).collect(), None).unwrap()
}

fn drift() -> VelocityModel {
    model(Kind::Interval, "1/2", &["0.2*(1-v^2)"])
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backward_then_forward_returns(v in -0.99f64..0.99, duration in 0.1f64..5.0) {
        let m = drift();
        let there = integrate_flow(&m, [v, 0.0], duration, 1e-3).unwrap();
        let end = *there.points.last().unwrap();
        let back = integrate_forward(&m, end, duration, 1e-3).unwrap();
        let w = back.points.last().unwrap()[0];
        prop_assert!((w - v).abs() <= 1e-8, "{} -> {} -> {}", v, end[0], w);
    }

    #[test]
    fn sphere_round_trip(theta in 0.0f64..6.28, phi in 0.2f64..2.9, duration in 0.1f64..3.0) {
        let m = model(Kind::Sphere, "1", &["sin(phi)", "0.3*sin(phi)*cos(phi)"]);
        let there = integrate_flow(&m, [theta, phi], duration, 1e-3).unwrap();
        let back = integrate_forward(&m, *there.points.last().unwrap(), duration, 1e-3).unwrap();
        let d = distance(there.embedded[0], *back.embedded.last().unwrap());
        prop_assert!(d <= 1e-8, "{}", d);
    }

    #[test]
    fn orbit_average_ignores_start(a in 0.0f64..6.28, b in 0.0f64..6.28) {
        let m = model(Kind::Ring, "1/(2*pi)", &["1 + 0.5*sin(theta)"]);
        let ctl = FlowControls::default();
        let f = |y: [f64; 3]| y[0] + y[1] * y[1];
        let la = classify_omega_limit(&m, [a, 0.0], &ctl).unwrap();
        let lb = classify_omega_limit(&m, [b, 0.0], &ctl).unwrap();
        prop_assert!((la.average(f) - lb.average(f)).abs() <= 1e-8);
    }
}

#[test]
fn rk4_is_fourth_order() {
    for (m, v0) in [
        (drift(), [0.9, 0.0]),
        (model(Kind::Ring, "1/(2*pi)", &["1 + 0.5*sin(theta)"]), [0.3, 0.0]),
        (model(Kind::Sphere, "1", &["sin(phi)", "0.3*sin(phi)*cos(phi)"]), [0.5, 1.0]),
    ] {
        let t = 2.0;
        let end = |dt: f64| *integrate_flow(&m, v0, t, dt).unwrap().embedded.last().unwrap();
        let (coarse, fine) = (0.2, 0.1);
        let reference = end(coarse / 16.0);
        let ratio = distance(end(coarse), reference) / distance(end(fine), reference);
        assert!(ratio >= 12.0, "{:?}: ratio {ratio}", m.kind());
    }
}
