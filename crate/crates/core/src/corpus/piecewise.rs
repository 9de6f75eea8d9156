//! A small language for one-dimensional piecewise functions.
//!
//! ```text
//! program  := piece (";" piece)* [";"]
//! piece    := expr "on" interval
//! interval := ("[" | "(") bound "," bound ("]" | ")")
//! bound    := ["-" | "+"] ("inf" | number)
//! expr     := term (("+" | "-") term)*
//! term     := unary (("*" | "/") unary)*
//! unary    := "-" unary | power
//! power    := atom ["^" unary]
//! atom     := number | "x" | func "(" expr ")" | "(" expr ")"
//! func     := abs | sgn | sin | cos | sqrt
//! ```
//!
//! A bracket closes an interval at its endpoint, a parenthesis opens it.
//! Points covered by no piece evaluate to `+inf`.

use std::fmt;

use serde::Serialize;

use crate::base::{ExtReal, FunctionOracle, Vector};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Func {
    Abs,
    Sgn,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Sgn => "sgn",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "abs" => Func::Abs,
            "sgn" => Func::Sgn,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Abs => x.abs(),
            Func::Sgn => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Sqrt => x.sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Expr {
    Num(f64),
    Var,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

impl Expr {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Num(c) => *c,
            Expr::Var => x,
            Expr::Neg(e) => -e.eval(x),
            Expr::Call(f, e) => f.apply(e.eval(x)),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
        }
    }

    fn prec(&self) -> u8 {
        match self {
            Expr::Num(_) | Expr::Var | Expr::Call(..) => PREC_ATOM,
            Expr::Neg(_) => PREC_NEG,
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => PREC_ADD,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => PREC_MUL,
            Expr::Bin(BinOp::Pow, ..) => PREC_POW,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.prec() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => write!(f, "{c}"),
            Expr::Var => write!(f, "x"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.write_child(f, PREC_NEG)
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Bin(op, a, b) => {
                let (sym, p) = match op {
                    BinOp::Add => (" + ", PREC_ADD),
                    BinOp::Sub => (" - ", PREC_ADD),
                    BinOp::Mul => ("*", PREC_MUL),
                    BinOp::Div => ("/", PREC_MUL),
                    BinOp::Pow => ("^", PREC_POW),
                };
                if *op == BinOp::Pow {
                    a.write_child(f, PREC_ATOM)?;
                    write!(f, "{sym}")?;
                    b.write_child(f, PREC_NEG)
                } else {
                    a.write_child(f, p)?;
                    write!(f, "{sym}")?;
                    b.write_child(f, p + 1)
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    #[serde(serialize_with = "ser_bound")]
    pub lo: f64,
    pub lo_closed: bool,
    #[serde(serialize_with = "ser_bound")]
    pub hi: f64,
    pub hi_closed: bool,
}

fn ser_bound<S: serde::Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    ExtReal::from_f64_or_inf(*x).serialize(s)
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    fn overlaps(&self, other: &Interval) -> bool {
        let (a, b) = if self.lo <= other.lo { (self, other) } else { (other, self) };
        if b.lo < a.hi {
            return true;
        }
        b.lo == a.hi && a.hi_closed && b.lo_closed && b.lo.is_finite()
            || (a.lo == b.lo && a.lo_closed && b.lo_closed && a.lo.is_finite())
    }
}

fn fmt_bound(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{},{}{}",
            if self.lo_closed { '[' } else { '(' },
            fmt_bound(self.lo),
            fmt_bound(self.hi),
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Piece {
    pub expr: Expr,
    pub interval: Interval,
}

/// A parsed piecewise function together with the parts of the line it
/// leaves uncovered.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PiecewiseExpr {
    pub pieces: Vec<Piece>,
    /// Sorted finite breakpoints.
    pub breakpoints: Vec<f64>,
    /// Uncovered sets, on which the function is `+inf`.
    pub gaps: Vec<Interval>,
}

impl PiecewiseExpr {
    pub fn eval(&self, x: f64) -> ExtReal {
        for p in &self.pieces {
            if p.interval.contains(x) {
                return ExtReal::from(p.expr.eval(x));
            }
        }
        ExtReal::PosInf
    }

    pub fn pretty_print(&self) -> String {
        self.to_string()
    }

    /// Evaluation oracle on `R`; the gradient is a central difference with
    /// step `grad_step` when given. Breakpoints become special points.
    pub fn to_oracle(&self, label: impl Into<String>, grad_step: Option<f64>) -> FunctionOracle {
        let pw = self.clone();
        let mut o = FunctionOracle::new(1, label, move |x: &Vector| pw.eval(x[0]))
            .expect("dimension 1 is valid")
            .with_special_points(self.breakpoints.iter().map(|&b| Vector::from_element(1, b)).collect());
        if let Some(h) = grad_step {
            let pw = self.clone();
            o = o.with_grad(move |x: &Vector| {
                let (a, b) = (pw.eval(x[0] + h).finite()?, pw.eval(x[0] - h).finite()?);
                Some(Vector::from_element(1, (a - b) / (2.0 * h)))
            });
        }
        o
    }
}

impl fmt::Display for PiecewiseExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.pieces.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{} on {}", p.expr, p.interval)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let start = (line, col);
        if c.is_ascii_digit() || c == '.' {
            let s = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let lit: String = chars[s..i].iter().collect();
            let v = lit.parse::<f64>().map_err(|_| Error::Syntax {
                line: start.0,
                column: start.1,
                message: format!("malformed number '{lit}'"),
            })?;
            col += i - s;
            out.push(Token { tok: Tok::Num(v), line: start.0, column: start.1 });
        } else if c.is_ascii_alphabetic() {
            let s = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            col += i - s;
            out.push(Token {
                tok: Tok::Ident(chars[s..i].iter().collect()),
                line: start.0,
                column: start.1,
            });
        } else if "+-*/^(),;[]".contains(c) {
            i += 1;
            col += 1;
            out.push(Token { tok: Tok::Sym(c), line: start.0, column: start.1 });
        } else {
            return Err(Error::Syntax {
                line,
                column: col,
                message: format!("unexpected character '{c}'"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map_or(self.end, |t| (t.line, t.column))
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        let (line, column) = self.here();
        Err(Error::Syntax { line, column, message: message.into() })
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, c: char) -> Result<()> {
        if self.eat_sym(c) {
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn program(&mut self) -> Result<Vec<(Piece, (usize, usize))>> {
        let mut pieces = Vec::new();
        loop {
            if self.peek().is_none() {
                if pieces.is_empty() {
                    return self.err("expected a piece");
                }
                break;
            }
            let at = self.here();
            pieces.push((self.piece()?, at));
            if !self.eat_sym(';') {
                break;
            }
        }
        if self.peek().is_some() {
            return self.err("expected ';' or end of input");
        }
        Ok(pieces)
    }

    fn piece(&mut self) -> Result<Piece> {
        let expr = self.expr()?;
        match self.peek() {
            Some(Tok::Ident(s)) if s == "on" => self.pos += 1,
            _ => return self.err("expected 'on'"),
        }
        let interval = self.interval()?;
        Ok(Piece { expr, interval })
    }

    fn interval(&mut self) -> Result<Interval> {
        let lo_closed = if self.eat_sym('[') {
            true
        } else if self.eat_sym('(') {
            false
        } else {
            return self.err("expected '[' or '('");
        };
        let lo_at = self.here();
        let lo = self.bound()?;
        self.expect_sym(',')?;
        let hi = self.bound()?;
        let hi_closed = if self.eat_sym(']') {
            true
        } else if self.eat_sym(')') {
            false
        } else {
            return self.err("expected ']' or ')'");
        };
        let bad = |m: &str| Err(Error::Syntax { line: lo_at.0, column: lo_at.1, message: m.into() });
        if lo > hi || (lo == hi && !(lo_closed && hi_closed)) {
            return bad("empty interval");
        }
        if (lo.is_infinite() && lo_closed) || (hi.is_infinite() && hi_closed) {
            return bad("infinite endpoints must be open");
        }
        Ok(Interval { lo, lo_closed, hi, hi_closed })
    }

    fn bound(&mut self) -> Result<f64> {
        let sign = if self.eat_sym('-') {
            -1.0
        } else {
            self.eat_sym('+');
            1.0
        };
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(sign * v)
            }
            Some(Tok::Ident(s)) if s == "inf" => {
                self.pos += 1;
                Ok(sign * f64::INFINITY)
            }
            _ => self.err("expected a number or 'inf'"),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat_sym('+') {
                BinOp::Add
            } else if self.eat_sym('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat_sym('*') {
                BinOp::Mul
            } else if self.eat_sym('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_sym('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat_sym('^') {
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
            Some(Tok::Ident(s)) if s == "x" => {
                self.pos += 1;
                Ok(Expr::Var)
            }
            Some(Tok::Ident(s)) => match Func::from_name(&s) {
                Some(f) => {
                    self.pos += 1;
                    self.expect_sym('(')?;
                    let e = self.expr()?;
                    self.expect_sym(')')?;
                    Ok(Expr::Call(f, Box::new(e)))
                }
                None => self.err(format!("unknown identifier '{s}'")),
            },
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_sym(')')?;
                Ok(e)
            }
            _ => self.err("expected an expression"),
        }
    }
}

fn end_position(text: &str) -> (usize, usize) {
    let line = text.matches('\n').count() + 1;
    let col = text.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Uncovered parts of the real line, given pieces sorted by lower endpoint.
fn find_gaps(sorted: &[Interval]) -> Vec<Interval> {
    let mut gaps = Vec::new();
    let mut reach = f64::NEG_INFINITY;
    let mut reach_closed = false;
    for iv in sorted {
        let covered = iv.lo < reach || (iv.lo == reach && (reach_closed || iv.lo_closed));
        if !covered && !(iv.lo == f64::NEG_INFINITY && reach == f64::NEG_INFINITY) {
            gaps.push(Interval {
                lo: reach,
                lo_closed: !reach_closed && reach.is_finite(),
                hi: iv.lo,
                hi_closed: !iv.lo_closed,
            });
        }
        if iv.hi > reach || (iv.hi == reach && iv.hi_closed) {
            reach = iv.hi;
            reach_closed = iv.hi_closed;
        }
    }
    if reach < f64::INFINITY {
        gaps.push(Interval {
            lo: reach,
            lo_closed: !reach_closed,
            hi: f64::INFINITY,
            hi_closed: false,
        });
    }
    gaps
}

pub fn parse_piecewise(text: &str) -> Result<PiecewiseExpr> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, end: end_position(text) };
    let parsed = p.program()?;
    for (i, (a, _)) in parsed.iter().enumerate() {
        for (b, at) in &parsed[i + 1..] {
            if a.interval.overlaps(&b.interval) {
                return Err(Error::Syntax {
                    line: at.0,
                    column: at.1,
                    message: format!("interval {} overlaps {}", b.interval, a.interval),
                });
            }
        }
    }
    let pieces: Vec<Piece> = parsed.into_iter().map(|(p, _)| p).collect();
    let mut sorted: Vec<Interval> = pieces.iter().map(|p| p.interval).collect();
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut breakpoints: Vec<f64> = sorted
        .iter()
        .flat_map(|iv| [iv.lo, iv.hi])
        .filter(|b| b.is_finite())
        .collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();
    let gaps = find_gaps(&sorted);
    Ok(PiecewiseExpr { pieces, breakpoints, gaps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn agree(text: &str, reference: impl Fn(f64) -> f64) {
        let pw = parse_piecewise(text).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x: f64 = rng.gen_range(-3.0..3.0);
            let (got, want) = (pw.eval(x), ExtReal::from(reference(x)));
            match (got, want) {
                (ExtReal::Finite(a), ExtReal::Finite(b)) => {
                    assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{text} at {x}: {a} vs {b}")
                }
                (a, b) => assert_eq!(a, b, "{text} at {x}"),
            }
        }
    }

    #[test]
    fn agrees_with_closed_forms() {
        agree("x^2 on [0,inf); 1 on (-inf,0)", |x| if x >= 0.0 { x * x } else { 1.0 });
        agree("abs(x)^(3/2) on (-inf,inf)", |x| x.abs().powf(1.5));
        agree("x^2*sgn(x) on (-inf,inf)", |x| x * x * x.signum());
        agree("x^4*sin(1/x) on (-inf,0); 0 on [0,0]; x^4*sin(1/x) on (0,inf)", |x| {
            if x == 0.0 {
                0.0
            } else {
                x.powi(4) * (1.0 / x).sin()
            }
        });
        agree("-x - 2*x^3 + sqrt(abs(x))/4 - cos(x)^2 on (-inf,inf)", |x| {
            -x - 2.0 * x * x * x + x.abs().sqrt() / 4.0 - x.cos().powi(2)
        });
        agree("2^-x on (-inf,inf)", |x| 2f64.powf(-x));
        agree("-x^2 on (-inf,inf)", |x| -(x * x));
    }

    #[test]
    fn breakpoints_follow_the_bracket() {
        let pw = parse_piecewise("x^2 on [0,inf); 1 on (-inf,0)").unwrap();
        assert_eq!(pw.eval(0.0), ExtReal::ZERO);
        assert_eq!(pw.eval(-1e-300), ExtReal::Finite(1.0));
        assert_eq!(pw.breakpoints, vec![0.0]);
        assert!(pw.gaps.is_empty());
    }

    #[test]
    fn uncovered_points_are_infinite_and_reported() {
        let pw = parse_piecewise("x^2 on [0,1]").unwrap();
        assert_eq!(pw.eval(2.0), ExtReal::PosInf);
        assert_eq!(pw.eval(-0.5), ExtReal::PosInf);
        assert_eq!(pw.gaps.len(), 2);
        assert_eq!(pw.gaps[0].to_string(), "(-inf,0)");
        assert_eq!(pw.gaps[1].to_string(), "(1,inf)");

        let pw = parse_piecewise("x on (-inf,0); x on (0,inf)").unwrap();
        assert_eq!(pw.gaps.len(), 1);
        assert_eq!(pw.gaps[0].to_string(), "[0,0]");
        assert_eq!(pw.eval(0.0), ExtReal::PosInf);
    }

    #[test]
    fn overlaps_are_rejected() {
        for text in ["x on [0,2]; 1 on [1,3]", "x on [0,1]; 1 on [1,3]", "x on (-inf,inf);\n0 on [0,0]"] {
            let e = parse_piecewise(text).unwrap_err();
            assert_eq!(e.kind(), "syntax", "{text}");
        }
        let e = parse_piecewise("x on (-inf,inf);\n0 on [0,0]").unwrap_err();
        assert!(matches!(e, Error::Syntax { line: 2, column: 1, .. }), "{e}");
        assert!(parse_piecewise("x on [0,1); 1 on [1,3]").is_ok());
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let cases = [
            ("x^2 on [0,inf", 1, 14),
            ("x^2 in [0,1]", 1, 5),
            ("x +\n  * 2 on [0,1]", 2, 3),
            ("foo(x) on [0,1]", 1, 1),
            ("x on [0,1] x", 1, 12),
            ("x # 1 on [0,1]", 1, 3),
            ("x on [inf,1]", 1, 7),
            ("x on [1,0]", 1, 7),
        ];
        for (text, line, column) in cases {
            match parse_piecewise(text) {
                Err(Error::Syntax { line: l, column: c, .. }) => {
                    assert_eq!((l, c), (line, column), "{text}")
                }
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn pretty_print_round_trips() {
        for text in [
            "x^2 on [0,inf); 1 on (-inf,0)",
            "abs(x)^(3/2) on (-inf,inf)",
            "-abs(x)^(3/2) on (-inf,inf)",
            "x^2 on (-inf,0); x^(3/2) on [0,inf)",
            "x - (x - 1) - (2 + x*(x/(3*x))) on [-1.5,2.25]",
            "(-x)^2 + 2^x^2 + --x on (-inf,inf)",
        ] {
            let pw = parse_piecewise(text).unwrap();
            let printed = pw.pretty_print();
            assert_eq!(printed, text);
            assert_eq!(parse_piecewise(&printed).unwrap(), pw);
        }
    }

    #[test]
    fn oracle_has_breakpoints_and_gradient() {
        let pw = parse_piecewise("x^2 on [0,inf); 1 on (-inf,0)").unwrap();
        let o = pw.to_oracle("step", Some(1e-6));
        assert_eq!(o.special_points().len(), 1);
        let g = o.grad(&Vector::from_element(1, 0.5)).unwrap().unwrap();
        assert!((g[0] - 1.0).abs() < 1e-8);
        assert!(!o.has_subgrad_graph());
    }
}
