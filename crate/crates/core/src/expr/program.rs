use super::{BinOp, Bindings, EvalError, Expr, Func, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Push(f64),
    Load(usize),
    Neg,
    Bin(BinOp),
    Call(Func),
}

const INLINE_STACK: usize = 32;

/// A flattened expression for repeated evaluation in hot loops.
///
/// Evaluation gives bit-identical results to [`Expr::eval`]. Domain problems
/// are detected on the fast path and re-run through the checked evaluator so
/// the error matches.
#[derive(Clone, Debug)]
pub struct Program {
    ops: Vec<Op>,
    depth: usize,
    vars: Vec<Var>,
    source: Expr,
}

impl Program {
    pub fn compile(expr: &Expr) -> Program {
        let mut ops = Vec::new();
        let mut depth = 0;
        emit(expr, &mut ops, 0, &mut depth);
        Program {
            ops,
            depth,
            vars: expr.free_vars(),
            source: expr.clone(),
        }
    }

    pub fn expr(&self) -> &Expr {
        &self.source
    }

    /// Variables the program reads.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// True when the program is a literal constant (no variables).
    pub fn is_constant(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn eval(&self, bindings: &Bindings) -> Result<f64, EvalError> {
        let mut slots = [0.0; 4];
        for &v in &self.vars {
            slots[v.slot()] = bindings.get(v).ok_or(EvalError::Unbound(v.name()))?;
        }
        self.eval_slots(&slots)
    }

    /// Evaluates with variables laid out as `[v, theta, phi, x]`.
    #[inline]
    pub fn eval_slots(&self, slots: &[f64; 4]) -> Result<f64, EvalError> {
        let (value, ok) = if self.depth <= INLINE_STACK {
            let mut stack = [0.0; INLINE_STACK];
            self.run(slots, &mut stack)
        } else {
            let mut stack = vec![0.0; self.depth];
            self.run(slots, &mut stack)
        };
        if ok && value.is_finite() {
            return Ok(value);
        }
        let mut b = Bindings::new();
        for &v in &self.vars {
            b = b.set(v, slots[v.slot()]);
        }
        self.source.eval(&b)
    }

    #[inline]
    fn run(&self, slots: &[f64; 4], stack: &mut [f64]) -> (f64, bool) {
        let mut sp = 0;
        let mut ok = true;
        for op in &self.ops {
            match *op {
                Op::Push(x) => {
                    stack[sp] = x;
                    sp += 1;
                }
                Op::Load(i) => {
                    stack[sp] = slots[i];
                    sp += 1;
                }
                Op::Neg => stack[sp - 1] = -stack[sp - 1],
                Op::Bin(op) => {
                    sp -= 1;
                    let y = stack[sp];
                    let x = stack[sp - 1];
                    let r = match op {
                        BinOp::Add => x + y,
                        BinOp::Sub => x - y,
                        BinOp::Mul => x * y,
                        BinOp::Div => {
                            ok &= y != 0.0;
                            x / y
                        }
                        BinOp::Pow => super::pow(x, y),
                    };
                    ok &= r.is_finite();
                    stack[sp - 1] = r;
                }
                Op::Call(f) => {
                    let x = stack[sp - 1];
                    match f {
                        Func::Log => ok &= x > 0.0,
                        Func::Sqrt => ok &= x >= 0.0,
                        _ => {}
                    }
                    let r = f.apply(x);
                    ok &= r.is_finite();
                    stack[sp - 1] = r;
                }
            }
        }
        (stack[0], ok)
    }
}

fn emit(e: &Expr, ops: &mut Vec<Op>, sp: usize, depth: &mut usize) {
    *depth = (*depth).max(sp + 1);
    match e {
        Expr::Num(x) => ops.push(Op::Push(*x)),
        Expr::Const(c) => ops.push(Op::Push(c.value())),
        Expr::Var(v) => ops.push(Op::Load(v.slot())),
        Expr::Neg(a) => {
            emit(a, ops, sp, depth);
            ops.push(Op::Neg);
        }
        Expr::Binary(op, a, b) => {
            emit(a, ops, sp, depth);
            emit(b, ops, sp + 1, depth);
            ops.push(Op::Bin(*op));
        }
        Expr::Call(f, a) => {
            emit(a, ops, sp, depth);
            ops.push(Op::Call(*f));
        }
    }
}
