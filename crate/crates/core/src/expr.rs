//! Arithmetic expressions over chart coordinates `x1..xd`.
//!
//! Grammar:
//!
//! ```text
//! expr  := term (("+"|"-") term)*
//! term  := unary (("*"|"/") unary)*
//! unary := "-" unary | power
//! power := atom ("^" unary)?
//! atom  := NUMBER | IDENT | IDENT "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! Identifiers are the coordinates `x1, x2, ...`, the constant `pi`, and the
//! functions `sin cos exp log sqrt tanh abs min max`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
    Abs,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn check_arity(self, got: usize) -> Result<()> {
        let ok = match self {
            Func::Min | Func::Max => got >= 2,
            _ => got == 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Arity {
                function: self.name().to_string(),
                expected: match self {
                    Func::Min | Func::Max => "at least 2".to_string(),
                    _ => "1".to_string(),
                },
                got,
            })
        }
    }
}

/// Expression tree. Variables are stored 0-based (`x1` is `Var(0)`).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Pi,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            src_len: src.len(),
        };
        let e = p.expr()?;
        if p.pos < p.tokens.len() {
            let (at, _) = p.tokens[p.pos];
            return Err(Error::Syntax {
                position: at,
                message: "unexpected trailing input".into(),
            });
        }
        Ok(e)
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => x.get(*i).copied().unwrap_or(f64::NAN),
            Expr::Pi => std::f64::consts::PI,
            Expr::Neg(a) => -a.eval(x),
            Expr::Bin(op, a, b) => {
                let l = a.eval(x);
                match op {
                    BinOp::Add => l + b.eval(x),
                    BinOp::Sub => l - b.eval(x),
                    BinOp::Mul => l * b.eval(x),
                    BinOp::Div => l / b.eval(x),
                    BinOp::Pow => match **b {
                        Expr::Num(n) if n.fract() == 0.0 && n.abs() < 64.0 => l.powi(n as i32),
                        _ => l.powf(b.eval(x)),
                    },
                }
            }
            Expr::Call(f, args) => match f {
                Func::Sin => args[0].eval(x).sin(),
                Func::Cos => args[0].eval(x).cos(),
                Func::Exp => args[0].eval(x).exp(),
                Func::Log => args[0].eval(x).ln(),
                Func::Sqrt => args[0].eval(x).sqrt(),
                Func::Tanh => args[0].eval(x).tanh(),
                Func::Abs => args[0].eval(x).abs(),
                Func::Min => args.iter().map(|a| a.eval(x)).fold(f64::INFINITY, f64::min),
                Func::Max => args.iter().map(|a| a.eval(x)).fold(f64::NEG_INFINITY, f64::max),
            },
        }
    }

    /// Partial derivative in coordinate `var`, or `None` when the expression
    /// uses `min` or `max`.
    pub fn derivative(&self, var: usize) -> Option<Expr> {
        use Expr::*;
        let b = Box::new;
        Some(match self {
            Num(_) | Pi => Num(0.0),
            Var(i) => Num(if *i == var { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.derivative(var)?),
            Bin(op, l, r) => {
                let (dl, dr) = (l.derivative(var)?, r.derivative(var)?);
                match op {
                    BinOp::Add => add(dl, dr),
                    BinOp::Sub => sub(dl, dr),
                    BinOp::Mul => add(mul(dl, (**r).clone()), mul((**l).clone(), dr)),
                    BinOp::Div => div(
                        sub(mul(dl, (**r).clone()), mul((**l).clone(), dr)),
                        Bin(BinOp::Pow, r.clone(), b(Num(2.0))),
                    ),
                    BinOp::Pow => match **r {
                        Num(n) => mul(mul(Num(n), Bin(BinOp::Pow, l.clone(), b(Num(n - 1.0)))), dl),
                        _ => mul(
                            self.clone(),
                            add(
                                mul(dr, Call(Func::Log, vec![(**l).clone()])),
                                div(mul((**r).clone(), dl), (**l).clone()),
                            ),
                        ),
                    },
                }
            }
            Call(f, args) => {
                let a = &args[0];
                let da = a.derivative(var)?;
                let outer = match f {
                    Func::Sin => Call(Func::Cos, vec![a.clone()]),
                    Func::Cos => neg(Call(Func::Sin, vec![a.clone()])),
                    Func::Exp => self.clone(),
                    Func::Log => div(Num(1.0), a.clone()),
                    Func::Sqrt => div(Num(0.5), self.clone()),
                    Func::Tanh => sub(Num(1.0), mul(self.clone(), self.clone())),
                    Func::Abs => div(a.clone(), self.clone()),
                    Func::Min | Func::Max => return None,
                };
                mul(outer, da)
            }
        })
    }

    /// Number of coordinates referenced (highest variable index + 1).
    pub fn arity(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Pi => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) => a.arity(),
            Expr::Bin(_, a, b) => a.arity().max(b.arity()),
            Expr::Call(_, args) => args.iter().map(Expr::arity).max().unwrap_or(0),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.arity() == 0
    }
}

impl FromStr for Expr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Expr> {
        Expr::parse(s)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 || v.is_sign_negative() {
                    write!(f, "(-{})", -v)
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Pi => write!(f, "pi"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {sym} {b})")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn is_num(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Num(n) if *n == v)
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        a => Expr::Neg(Box::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    if is_num(&a, 0.0) {
        b
    } else if is_num(&b, 0.0) {
        a
    } else {
        Expr::Bin(BinOp::Add, Box::new(a), Box::new(b))
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    if is_num(&b, 0.0) {
        a
    } else if is_num(&a, 0.0) {
        neg(b)
    } else {
        Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b))
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    if is_num(&a, 0.0) || is_num(&b, 0.0) {
        Expr::Num(0.0)
    } else if is_num(&a, 1.0) {
        b
    } else if is_num(&b, 1.0) {
        a
    } else if let (Expr::Num(x), Expr::Num(y)) = (&a, &b) {
        Expr::Num(x * y)
    } else {
        Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b))
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if is_num(&a, 0.0) {
        Expr::Num(0.0)
    } else if is_num(&b, 1.0) {
        a
    } else {
        Expr::Bin(BinOp::Div, Box::new(a), Box::new(b))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent only when followed by a digit (optionally signed)
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
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
            let v: f64 = text.parse().map_err(|_| Error::Syntax {
                position: start,
                message: format!("malformed number `{text}`"),
            })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else {
            let t = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => {
                    return Err(Error::Syntax {
                        position: start,
                        message: format!("unexpected character `{c}`"),
                    })
                }
            };
            out.push((start, t));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    src_len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.src_len, |(p, _)| *p)
    }

    fn syntax<T>(&self, msg: &str) -> Result<T> {
        Err(Error::Syntax {
            position: self.here(),
            message: msg.to_string(),
        })
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            self.syntax(&format!("expected {what}"))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(&Tok::Op('-')) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Op('^')) {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::LParen) {
                    let func = Func::lookup(&name).ok_or_else(|| Error::UnknownIdentifier(name.clone()))?;
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen, "`)` after arguments")?;
                    func.check_arity(args.len())?;
                    return Ok(Expr::Call(func, args));
                }
                if name == "pi" {
                    return Ok(Expr::Pi);
                }
                if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                    if idx >= 1 && !name[1..].starts_with('0') {
                        return Ok(Expr::Var(idx - 1));
                    }
                }
                if let Some(f) = Func::lookup(&name) {
                    return Err(Error::Arity {
                        function: f.name().to_string(),
                        expected: "a parenthesized argument list".to_string(),
                        got: 0,
                    });
                }
                Err(Error::UnknownIdentifier(name))
            }
            Some(_) => self.syntax("expected a number, identifier or `(`"),
            None => self.syntax("unexpected end of input"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn derivative_matches_differences() {
        let srcs = [
            "x1^2*sin(x2)",
            "1/x2^2",
            "exp(x1*x2)/(1+x1^2)",
            "sqrt(1+x1^2)",
            "tanh(x1)-abs(x2)",
            "x1^x2",
            "log(2+x1)*cos(x2)",
        ];
        let p = [0.7, 1.3];
        for src in srcs {
            let e = Expr::parse(src).unwrap();
            for var in 0..2 {
                let de = e.derivative(var).unwrap();
                let h = 1e-6;
                let mut a = p;
                let mut b = p;
                a[var] += h;
                b[var] -= h;
                let fd = (e.eval(&a) - e.eval(&b)) / (2.0 * h);
                assert!((de.eval(&p) - fd).abs() < 1e-7, "{src} d{var}: {} vs {fd}", de.eval(&p));
            }
        }
        assert!(Expr::parse("min(x1, 1)").unwrap().derivative(0).is_none());
    }

    #[test]
    fn grammar_shape() {
        let e = Expr::parse("x1 + 2*x2").unwrap();
        assert_eq!(
            e,
            Expr::Bin(
                BinOp::Add,
                Box::new(Expr::Var(0)),
                Box::new(Expr::Bin(BinOp::Mul, Box::new(Expr::Num(2.0)), Box::new(Expr::Var(1))))
            )
        );
    }

    #[test]
    fn evaluates_known_values() {
        assert!(Expr::parse("sin(pi)").unwrap().eval(&[]).abs() < 1e-15);
        // e^{-0.25}
        let v = Expr::parse("exp(-x1^2)").unwrap().eval(&[0.5]);
        assert!((v - 0.778_800_783_1).abs() < 1e-10);
        assert_eq!(Expr::parse("max(1, x1, 3)").unwrap().eval(&[7.0]), 7.0);
        assert_eq!(Expr::parse("2^3^2").unwrap().eval(&[]), 512.0);
        assert_eq!(Expr::parse("-2^2").unwrap().eval(&[]), -4.0);
        assert_eq!(Expr::parse("1.5e-1*2").unwrap().eval(&[]), 0.3);
    }

    #[test]
    fn error_kinds() {
        assert!(matches!(Expr::parse("x1 +"), Err(Error::Syntax { .. })));
        assert!(matches!(Expr::parse("(x1"), Err(Error::Syntax { .. })));
        assert!(matches!(Expr::parse("x1 $ 2"), Err(Error::Syntax { position: 3, .. })));
        assert!(matches!(Expr::parse("foo(1)"), Err(Error::UnknownIdentifier(_))));
        assert!(matches!(Expr::parse("y + 1"), Err(Error::UnknownIdentifier(_))));
        assert!(matches!(Expr::parse("x0"), Err(Error::UnknownIdentifier(_))));
        assert!(matches!(Expr::parse("sin(1, 2)"), Err(Error::Arity { .. })));
        assert!(matches!(Expr::parse("max(1)"), Err(Error::Arity { .. })));
    }

    #[test]
    fn arity_and_constness() {
        assert_eq!(Expr::parse("x3 * x1").unwrap().arity(), 3);
        assert!(Expr::parse("2 * pi").unwrap().is_constant());
    }

    fn arb_expr() -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            (0u32..1000).prop_map(|n| format!("{}", n as f64 / 8.0)),
            (1usize..4).prop_map(|i| format!("x{i}")),
            Just("pi".to_string()),
        ];
        leaf.prop_recursive(4, 32, 3, |inner| {
            prop_oneof![
                (
                    inner.clone(),
                    inner.clone(),
                    prop::sample::select(vec!["+", "-", "*", "/", "^"])
                )
                    .prop_map(|(a, b, op)| format!("{a} {op} ({b})")),
                inner.clone().prop_map(|a| format!("-{a}")),
                (inner.clone(), prop::sample::select(vec!["sin", "cos", "exp", "abs", "tanh"]))
                    .prop_map(|(a, f)| format!("{f}({a})")),
                (inner.clone(), inner).prop_map(|(a, b)| format!("max({a}, {b})")),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(src in arb_expr()) {
            let e = Expr::parse(&src).unwrap();
            let printed = e.to_string();
            let again = Expr::parse(&printed).unwrap();
            prop_assert_eq!(&e, &again);
            let x = [0.3, -0.7, 1.1];
            let (a, b) = (e.eval(&x), again.eval(&x));
            prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }
}
