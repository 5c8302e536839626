mod common;

use kld::expr::{parse, Bindings, EvalError, Expr};
use proptest::prelude::*;

use common::{arb_expr, parser_suite};

fn same(a: &Result<f64, EvalError>, b: &Result<f64, EvalError>) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()),
        (Err(x), Err(y)) => x == y,
        _ => false,
    }
}

fn bindings() -> impl Strategy<Value = Bindings> {
    (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0)
        .prop_map(|(v, t, p, x)| Bindings::new().with_v(v).with_theta(t).with_phi(p).with_x(x))
}

#[test]
fn parser_suite_passes() {
    let failures = parser_suite();
    assert!(failures.is_empty(), "{failures:#?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn print_parse_round_trip(e in arb_expr()) {
        let printed = e.to_string();
        let back: Expr = parse(&printed).unwrap();
        prop_assert_eq!(back, e, "printed as `{}`", printed);
    }

    #[test]
    fn printed_form_evaluates_identically(e in arb_expr(), b in bindings()) {
        let back = parse(&e.to_string()).unwrap();
        let (x, y) = (e.eval(&b), back.eval(&b));
        prop_assert!(same(&x, &y), "{:?} vs {:?}", x, y);
    }

    #[test]
    fn compiled_program_matches_tree(e in arb_expr(), b in bindings()) {
        let (x, y) = (e.eval(&b), e.compile().eval(&b));
        prop_assert!(same(&x, &y), "{:?} vs {:?}", x, y);
    }
}
