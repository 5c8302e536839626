//! A small arithmetic language for jump densities, force fields and initial
//! potentials.
//!
//! The grammar is fixed: numeric literals, the variables `v`, `theta`, `phi`
//! and `x`, the constants `pi` and `e`, the binary operators `+ - * / ^`,
//! unary minus, parentheses and the one-argument functions
//! `sin cos tan tanh exp log abs sqrt`.
//!
//! Precedence from tightest to loosest is `^`, unary minus, `* /`, `+ -`.
//! `^` associates to the right, everything else to the left, so `-2^2` is
//! `-(2^2)`.
//!
//! ```
//! use kld::expr::{Bindings, Expr};
//!
//! let e: Expr = "0.2*(1-v^2)".parse().unwrap();
//! assert_eq!(e.eval(&Bindings::new().with_v(1.0)).unwrap(), 0.0);
//! ```

mod parse;
mod program;

use std::fmt;
use std::str::FromStr;

pub use parse::{parse, ParseError, ParseErrorKind};
pub use program::Program;

/// Free variables available to expressions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    V,
    Theta,
    Phi,
    X,
}

impl Var {
    pub const ALL: [Var; 4] = [Var::V, Var::Theta, Var::Phi, Var::X];

    pub fn name(self) -> &'static str {
        match self {
            Var::V => "v",
            Var::Theta => "theta",
            Var::Phi => "phi",
            Var::X => "x",
        }
    }

    pub fn from_name(name: &str) -> Option<Var> {
        Var::ALL.into_iter().find(|v| v.name() == name)
    }

    pub(crate) fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    pub fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Constant::Pi => "pi",
            Constant::E => "e",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Tanh,
    Exp,
    Log,
    Abs,
    Sqrt,
}

impl Func {
    pub const ALL: [Func; 8] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Tanh,
        Func::Exp,
        Func::Log,
        Func::Abs,
        Func::Sqrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Unchecked application; domain problems surface as NaN or infinity.
    #[inline]
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Tanh => x.tanh(),
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Abs => x.abs(),
            Func::Sqrt => x.sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

/// Integer exponents use repeated multiplication so that `v^2` is exactly
/// `v*v`; both evaluators share this rule.
#[inline]
pub(crate) fn pow(x: f64, y: f64) -> f64 {
    if y.fract() == 0.0 && y.abs() <= 64.0 {
        x.powi(y as i32)
    } else {
        x.powf(y)
    }
}

/// Abstract syntax tree.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Const(Constant),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(&'static str),
    #[error("division by zero")]
    DivisionByZero,
    #[error("log of non-positive value {0}")]
    LogDomain(f64),
    #[error("sqrt of negative value {0}")]
    SqrtDomain(f64),
    #[error("non-finite result in `{0}`")]
    NonFinite(String),
}

/// Variable values for evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Bindings {
    slots: [Option<f64>; 4],
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, var: Var, value: f64) -> Self {
        self.slots[var.slot()] = Some(value);
        self
    }

    pub fn with_v(self, v: f64) -> Self {
        self.set(Var::V, v)
    }

    pub fn with_theta(self, theta: f64) -> Self {
        self.set(Var::Theta, theta)
    }

    pub fn with_phi(self, phi: f64) -> Self {
        self.set(Var::Phi, phi)
    }

    pub fn with_x(self, x: f64) -> Self {
        self.set(Var::X, x)
    }

    /// Builds bindings from `(name, value)` pairs, rejecting names outside
    /// the language.
    pub fn from_pairs<'a, I>(pairs: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut b = Bindings::new();
        for (name, value) in pairs {
            let var = Var::from_name(name).ok_or_else(|| format!("unknown variable `{name}`"))?;
            b = b.set(var, value);
        }
        Ok(b)
    }

    pub fn get(&self, var: Var) -> Option<f64> {
        self.slots[var.slot()]
    }
}

impl Expr {
    pub fn num(x: f64) -> Expr {
        Expr::Num(x)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    /// Checked evaluation.
    pub fn eval(&self, bindings: &Bindings) -> Result<f64, EvalError> {
        let value = match self {
            Expr::Num(x) => *x,
            Expr::Const(c) => c.value(),
            Expr::Var(v) => bindings.get(*v).ok_or(EvalError::Unbound(v.name()))?,
            Expr::Neg(a) => -a.eval(bindings)?,
            Expr::Binary(op, a, b) => {
                let x = a.eval(bindings)?;
                let y = b.eval(bindings)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        x / y
                    }
                    BinOp::Pow => pow(x, y),
                }
            }
            Expr::Call(f, a) => {
                let x = a.eval(bindings)?;
                match f {
                    Func::Log if x <= 0.0 => return Err(EvalError::LogDomain(x)),
                    Func::Sqrt if x < 0.0 => return Err(EvalError::SqrtDomain(x)),
                    _ => f.apply(x),
                }
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(EvalError::NonFinite(self.to_string()))
        }
    }

    /// Variables that occur in the tree.
    pub fn free_vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(*v);
                }
            }
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Num(_) | Expr::Const(_) => {}
        }
    }

    /// True when the tree is the literal zero (possibly negated or
    /// parenthesised).
    pub fn is_literal_zero(&self) -> bool {
        match self {
            Expr::Num(x) => *x == 0.0,
            Expr::Neg(a) => a.is_literal_zero(),
            _ => false,
        }
    }

    pub fn compile(&self) -> Program {
        Program::compile(self)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, _, _) => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 5,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Debug formatting of f64 is the shortest exact round-trip form.
            Expr::Num(x) => write!(f, "{x:?}"),
            Expr::Const(c) => f.write_str(c.name()),
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Neg(a) => {
                f.write_str("-")?;
                a.fmt_child(f, 3)
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                let (lmin, rmin) = match op {
                    BinOp::Pow => (5, 3),
                    _ => (p, p + 1),
                };
                a.fmt_child(f, lmin)?;
                write!(f, " {} ", op.symbol())?;
                b.fmt_child(f, rmin)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}
