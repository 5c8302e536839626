//! Helpers shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use kld::config::RunConfig;
use kld::expr::{parse, BinOp, Bindings, Constant, Expr, Func, Var};
use proptest::prelude::*;

pub fn fixture(name: &str) -> RunConfig {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures", name].iter().collect();
    RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Literals as the parser produces them: non-negative and finite.
fn literal() -> impl Strategy<Value = f64> {
    prop_oneof![
        (0u32..1000).prop_map(f64::from),
        (0.0f64..1e3),
        (-300i32..300).prop_map(|e| 10f64.powi(e)),
        any::<u64>().prop_map(|b| f64::from_bits(b >> 2)).prop_filter("finite", |x| x.is_finite()),
    ]
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        literal().prop_map(Expr::Num),
        prop::sample::select(vec![Constant::Pi, Constant::E]).prop_map(Expr::Const),
        prop::sample::select(Var::ALL.to_vec()).prop_map(Expr::Var),
    ]
}

/// Random syntax trees of bounded depth over the whole grammar.
pub fn arb_expr() -> impl Strategy<Value = Expr> {
    let ops = vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow];
    leaf().prop_recursive(6, 64, 2, move |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (prop::sample::select(ops.clone()), inner.clone(), inner.clone())
                .prop_map(|(op, a, b)| Expr::binary(op, a, b)),
            (prop::sample::select(Func::ALL.to_vec()), inner).prop_map(|(f, a)| Expr::Call(f, Box::new(a))),
        ]
    })
}

/// Precedence and associativity cases: each source with the fully
/// parenthesized form it must parse to.
pub const GROUPING: &[(&str, &str)] = &[
    ("1 + 2 * v", "1 + (2 * v)"),
    ("2 * v + 1", "(2 * v) + 1"),
    ("8 - v / 2", "8 - (v / 2)"),
    ("2 * v ^ 2", "2 * (v ^ 2)"),
    ("v ^ 2 * 3", "(v ^ 2) * 3"),
    ("18 / v ^ 2", "18 / (v ^ 2)"),
    ("1 + v ^ 3", "1 + (v ^ 3)"),
    ("-v ^ 2", "-(v ^ 2)"),
    ("-v * 3", "(-v) * 3"),
    ("2 * -v", "2 * (-v)"),
    ("-v + 2", "(-v) + 2"),
    ("1 - -v", "1 - (-v)"),
    ("--v", "-(-v)"),
    ("v ^ 3 ^ 2", "v ^ (3 ^ 2)"),
    ("2 ^ -v", "2 ^ (-v)"),
    ("2 ^ -v ^ 2", "2 ^ (-(v ^ 2))"),
    ("10 - v - 3", "(10 - v) - 3"),
    ("10 - v + 3", "(10 - v) + 3"),
    ("24 / v / 3", "(24 / v) / 3"),
    ("24 / v * 3", "(24 / v) * 3"),
    ("(2 + v) * 4", "(2 + v) * 4"),
    ("-sqrt(v) ^ 2", "-((sqrt(v)) ^ 2)"),
    ("sin(v) * cos(theta) + x", "((sin(v)) * (cos(theta))) + x"),
    ("0.2*(1-v^2)", "0.2 * (1 - (v ^ 2))"),
];

/// Closed-form values of constant expressions.
pub const VALUES: &[(&str, f64)] = &[
    ("2+3*4", 14.0),
    ("8-4/2", 6.0),
    ("2*3^2", 18.0),
    ("-2^2", -4.0),
    ("(-2)^2", 4.0),
    ("-6/-2", 3.0),
    ("2^3^2", 512.0),
    ("2^-1^2", 0.5),
    ("10-4-3", 3.0),
    ("24/4/3", 2.0),
    ("24/4*3", 18.0),
    ("1e-3*1000", 1.0),
    ("2.5E2", 250.0),
    (".5", 0.5),
    ("exp(0)+cos(0)+tanh(0)+sin(0)+tan(0)", 2.0),
    ("abs(-3)+sqrt(16)", 7.0),
    ("log(e)", 1.0),
];

/// Sources that must be rejected.
pub const REJECTED: &[&str] = &["", "1 +", "(1+2", "1+2)", "sin(1, 2)", "cos()", "exp 2", "1 $ 2", "1.2.3", "2 3", "w", "sinh(v)"];

/// Runs the parser suite, returning the failures.
pub fn parser_suite() -> Vec<String> {
    let mut failures = Vec::new();
    for &(src, grouped) in GROUPING {
        match (parse(src), parse(grouped)) {
            (Ok(a), Ok(b)) if a == b => {}
            (a, b) => failures.push(format!("`{src}` vs `{grouped}`: {a:?} / {b:?}")),
        }
    }
    for &(src, value) in VALUES {
        match parse(src).map(|e| e.eval(&Bindings::new())) {
            Ok(Ok(x)) if (x - value).abs() <= 1e-15 * value.abs().max(1.0) => {}
            other => failures.push(format!("`{src}` gave {other:?}, expected {value}")),
        }
    }
    for &src in REJECTED {
        if let Ok(e) = parse(src) {
            failures.push(format!("`{src}` parsed as {e:?}"));
        }
    }
    failures
}
