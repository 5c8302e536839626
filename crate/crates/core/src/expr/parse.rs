use std::fmt;

use super::{BinOp, Constant, Expr, Func, Var};

#[derive(Clone, Debug, PartialEq)]
pub enum ParseErrorKind {
    Empty,
    UnknownIdentifier(String),
    UnbalancedParen,
    Arity {
        func: &'static str,
        found: usize,
    },
    InvalidNumber(String),
    UnexpectedChar(char),
    UnexpectedToken(String),
    UnexpectedEnd,
}

/// A syntax error with the byte offset where it was detected.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{kind} at byte {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Empty => f.write_str("empty expression"),
            ParseErrorKind::UnknownIdentifier(s) => write!(f, "unknown identifier `{s}`"),
            ParseErrorKind::UnbalancedParen => f.write_str("unbalanced parentheses"),
            ParseErrorKind::Arity { func, found } => {
                write!(f, "`{func}` takes 1 argument, found {found}")
            }
            ParseErrorKind::InvalidNumber(s) => write!(f, "invalid number `{s}`"),
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character `{c}`"),
            ParseErrorKind::UnexpectedToken(s) => write!(f, "unexpected `{s}`"),
            ParseErrorKind::UnexpectedEnd => f.write_str("unexpected end of input"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(x) => format!("{x}"),
            Tok::Ident(s) => s.clone(),
            Tok::Op(c) => c.to_string(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::Comma => ",".into(),
        }
    }
}

fn err<T>(offset: usize, kind: ParseErrorKind) -> Result<T, ParseError> {
    Err(ParseError { offset, kind })
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    // Only an exponent if digits follow; otherwise `2e` is `2` then the
                    // constant `e`, which the parser then rejects as juxtaposition.
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                match text.parse::<f64>() {
                    Ok(x) => toks.push((start, Tok::Num(x))),
                    Err(_) => return err(start, ParseErrorKind::InvalidNumber(text.into())),
                }
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                toks.push((start, Tok::Ident(src[start..i].to_string())));
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                toks.push((i, Tok::Op(c as char)));
                i += 1;
            }
            b'(' => {
                toks.push((i, Tok::LParen));
                i += 1;
            }
            b')' => {
                toks.push((i, Tok::RParen));
                i += 1;
            }
            b',' => {
                toks.push((i, Tok::Comma));
                i += 1;
            }
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return err(i, ParseErrorKind::UnexpectedChar(ch));
            }
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    src: &'a str,
}

/// Parses `source` into an [`Expr`].
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let toks = lex(source)?;
    if toks.is_empty() {
        return err(0, ParseErrorKind::Empty);
    }
    let mut p = Parser {
        toks,
        pos: 0,
        src: source,
    };
    let e = p.expr()?;
    if let Some((off, tok)) = p.toks.get(p.pos) {
        let kind = match tok {
            Tok::RParen => ParseErrorKind::UnbalancedParen,
            t => ParseErrorKind::UnexpectedToken(t.describe()),
        };
        return err(*off, kind);
    }
    Ok(e)
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|(o, _)| *o)
            .unwrap_or(self.src.len())
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    // term := unary (('*' | '/') unary)*
    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    // power := atom ('^' unary)?
    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let off = self.offset();
        match self.bump() {
            None => err(off, ParseErrorKind::UnexpectedEnd),
            Some(Tok::Num(x)) => Ok(Expr::Num(x)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                match self.bump() {
                    Some(Tok::RParen) => Ok(inner),
                    Some(Tok::Comma) => err(off, ParseErrorKind::UnexpectedToken(",".into())),
                    _ => err(off, ParseErrorKind::UnbalancedParen),
                }
            }
            Some(Tok::Ident(name)) => self.ident(off, name),
            Some(Tok::RParen) => err(off, ParseErrorKind::UnbalancedParen),
            Some(t) => err(off, ParseErrorKind::UnexpectedToken(t.describe())),
        }
    }

    fn ident(&mut self, off: usize, name: String) -> Result<Expr, ParseError> {
        if let Some(func) = Func::from_name(&name) {
            let open = self.offset();
            match self.bump() {
                Some(Tok::LParen) => {}
                _ => return err(open, ParseErrorKind::Arity { func: func.name(), found: 0 }),
            }
            if let Some(Tok::RParen) = self.peek() {
                return err(off, ParseErrorKind::Arity { func: func.name(), found: 0 });
            }
            let mut args = vec![self.expr()?];
            while let Some(Tok::Comma) = self.peek() {
                self.bump();
                args.push(self.expr()?);
            }
            match self.bump() {
                Some(Tok::RParen) => {}
                _ => return err(open, ParseErrorKind::UnbalancedParen),
            }
            if args.len() != 1 {
                return err(off, ParseErrorKind::Arity { func: func.name(), found: args.len() });
            }
            return Ok(Expr::Call(func, Box::new(args.pop().unwrap())));
        }
        if let Some(var) = Var::from_name(&name) {
            return Ok(Expr::Var(var));
        }
        match name.as_str() {
            "pi" => Ok(Expr::Const(Constant::Pi)),
            "e" => Ok(Expr::Const(Constant::E)),
            _ => err(off, ParseErrorKind::UnknownIdentifier(name)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Bindings;

    fn ev(src: &str) -> f64 {
        parse(src).unwrap().eval(&Bindings::new()).unwrap()
    }

    fn kind(src: &str) -> (usize, ParseErrorKind) {
        let e = parse(src).unwrap_err();
        (e.offset, e.kind)
    }

    #[test]
    fn mul_over_add() {
        assert_eq!(ev("2+3*4"), 14.0);
        assert_eq!(ev("2*3+4"), 10.0);
    }

    #[test]
    fn div_over_sub() {
        assert_eq!(ev("8-4/2"), 6.0);
        assert_eq!(ev("8/4-2"), 0.0);
    }

    #[test]
    fn pow_over_mul() {
        assert_eq!(ev("2*3^2"), 18.0);
        assert_eq!(ev("3^2*2"), 18.0);
    }

    #[test]
    fn pow_over_div() {
        assert_eq!(ev("18/3^2"), 2.0);
    }

    #[test]
    fn pow_over_add_sub() {
        assert_eq!(ev("1+2^3"), 9.0);
        assert_eq!(ev("2^3-1"), 7.0);
    }

    #[test]
    fn pow_over_unary_minus() {
        assert_eq!(ev("-2^2"), -4.0);
        assert_eq!(ev("(-2)^2"), 4.0);
    }

    #[test]
    fn unary_minus_over_mul_div() {
        assert_eq!(ev("-2*3"), -6.0);
        assert_eq!(ev("-6/-2"), 3.0);
        assert_eq!(ev("2*-3"), -6.0);
    }

    #[test]
    fn unary_minus_over_add_sub() {
        assert_eq!(ev("-1+2"), 1.0);
        assert_eq!(ev("1--2"), 3.0);
        assert_eq!(ev("--2"), 2.0);
    }

    #[test]
    fn pow_is_right_associative() {
        assert_eq!(ev("2^3^2"), 512.0);
        assert_eq!(ev("2^-1"), 0.5);
        assert_eq!(ev("2^-1^2"), 0.5);
    }

    #[test]
    fn add_sub_left_associative() {
        assert_eq!(ev("10-4-3"), 3.0);
        assert_eq!(ev("10-4+3"), 9.0);
    }

    #[test]
    fn mul_div_left_associative() {
        assert_eq!(ev("24/4/3"), 2.0);
        assert_eq!(ev("24/4*3"), 18.0);
    }

    #[test]
    fn parentheses_override() {
        assert_eq!(ev("(2+3)*4"), 20.0);
        assert_eq!(ev("2^(1+1)"), 4.0);
    }

    #[test]
    fn function_calls() {
        assert_eq!(ev("sqrt(16)"), 4.0);
        assert_eq!(ev("abs(-3)"), 3.0);
        assert_eq!(ev("exp(0)+cos(0)+tanh(0)+sin(0)+tan(0)"), 2.0);
        assert_eq!(ev("-sqrt(4)^2"), -4.0);
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(ev("1e-3*1000"), 1.0);
        assert_eq!(ev("2.5E2"), 250.0);
        assert_eq!(ev(".5"), 0.5);
    }

    #[test]
    fn unknown_identifier_is_positioned() {
        assert_eq!(kind("1 + w"), (4, ParseErrorKind::UnknownIdentifier("w".into())));
        assert_eq!(kind("sinh(v)").1, ParseErrorKind::UnknownIdentifier("sinh".into()));
    }

    #[test]
    fn unbalanced_parentheses() {
        assert_eq!(kind("(1+2").1, ParseErrorKind::UnbalancedParen);
        assert_eq!(kind("1+2)"), (3, ParseErrorKind::UnbalancedParen));
        assert_eq!(kind("sin(1").1, ParseErrorKind::UnbalancedParen);
    }

    #[test]
    fn wrong_arity() {
        assert_eq!(
            kind("1 + sin(1, 2)"),
            (4, ParseErrorKind::Arity { func: "sin", found: 2 })
        );
        assert_eq!(kind("cos()").1, ParseErrorKind::Arity { func: "cos", found: 0 });
        assert_eq!(kind("exp 2").1, ParseErrorKind::Arity { func: "exp", found: 0 });
    }

    #[test]
    fn other_errors() {
        assert_eq!(kind("").1, ParseErrorKind::Empty);
        assert_eq!(kind("   ").1, ParseErrorKind::Empty);
        assert_eq!(kind("1 +").1, ParseErrorKind::UnexpectedEnd);
        assert_eq!(kind("1 $ 2"), (2, ParseErrorKind::UnexpectedChar('$')));
        assert_eq!(kind("1.2.3").1, ParseErrorKind::InvalidNumber("1.2.3".into()));
        assert_eq!(kind("2 3").1, ParseErrorKind::UnexpectedToken("3".into()));
    }
}
