//! Symbolic one-variable expressions for per-edge data in `.net` files.
//!
//! An [`Expr`] is an immutable AST over the single variable `t`, the usual
//! arithmetic operators, a small set of functions, and the indicator
//! `chi(cond)` where `cond` is a comparison chain such as
//! `abs(t-0.25)<=0.125`. Evaluation is total: domain violations surface as
//! [`EvalError`], never as a crash.

use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

/// Parsed expression in the single variable `t`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
    /// Indicator of a comparison chain: `operands` has one more entry than
    /// `ops`; the indicator is 1.0 iff every adjacent comparison holds.
    Chi {
        operands: Vec<Expr>,
        ops: Vec<CmpOp>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("log of non-positive value {0}")]
    LogDomain(f64),
    #[error("square root of negative value {0}")]
    SqrtDomain(f64),
    #[error("non-finite result")]
    NonFinite,
}

/// Syntax error with the byte offset it occurred at and the tokens that
/// would have been accepted there.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at byte {offset}: found {found}, expected {}", expected.join(" | "))]
pub struct ParseError {
    pub offset: usize,
    pub found: String,
    pub expected: Vec<&'static str>,
}

impl Expr {
    /// Parses an expression from text. Standard infix precedence
    /// (`^` > unary `-` > `*` `/` > `+` `-`), `^` right-associative.
    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        let tokens = tokenize(text)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            end: text.len(),
        };
        let expr = parser.expr()?;
        parser.expect_end()?;
        Ok(expr)
    }

    /// Evaluates at the given parameter value.
    pub fn eval(&self, t: f64) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(x) => *x,
            Expr::Var => t,
            Expr::Neg(e) => -e.eval(t)?,
            Expr::Bin(op, a, b) => {
                let a = a.eval(t)?;
                let b = b.eval(t)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, args) => {
                let x = args[0].eval(t)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => x.tan(),
                    Func::Exp => x.exp(),
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(EvalError::LogDomain(x));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(EvalError::SqrtDomain(x));
                        }
                        x.sqrt()
                    }
                    Func::Abs => x.abs(),
                    Func::Min | Func::Max => {
                        let y = args[1].eval(t)?;
                        if *f == Func::Min {
                            x.min(y)
                        } else {
                            x.max(y)
                        }
                    }
                }
            }
            Expr::Chi { operands, ops } => {
                let mut vals = Vec::with_capacity(operands.len());
                for e in operands {
                    vals.push(e.eval(t)?);
                }
                let all = ops
                    .iter()
                    .zip(vals.windows(2))
                    .all(|(op, w)| op.holds(w[0], w[1]));
                if all {
                    1.0
                } else {
                    0.0
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Constant literal.
    pub fn constant(x: f64) -> Expr {
        Expr::Num(x)
    }

    // Printing precedence. Negative literals print with a leading minus, so
    // they sit at the unary-minus level to keep `(-2)^2` from round-tripping
    // as `-2^2`.
    fn prec(&self) -> u8 {
        match self {
            Expr::Num(x) if *x < 0.0 => 3,
            Expr::Num(_) | Expr::Var | Expr::Call(..) | Expr::Chi { .. } => 5,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let p = self.prec();
        if p < min_prec {
            write!(f, "(")?;
            self.fmt_prec(f, 0)?;
            return write!(f, ")");
        }
        match self {
            Expr::Num(x) => write!(f, "{}", x),
            Expr::Var => write!(f, "t"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.fmt_prec(f, 3)
            }
            Expr::Bin(op, a, b) => {
                let (sym, lp, rp) = match op {
                    BinOp::Add => ("+", 1, 2),
                    // right operand one level up: a-b-c stays left-assoc
                    BinOp::Sub => ("-", 1, 2),
                    BinOp::Mul => ("*", 2, 3),
                    BinOp::Div => ("/", 2, 3),
                    // ^ is right-associative and binds above unary minus;
                    // the exponent may carry its own sign
                    BinOp::Pow => ("^", 5, 3),
                };
                a.fmt_prec(f, lp)?;
                write!(f, "{}", sym)?;
                b.fmt_prec(f, rp)
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    a.fmt_prec(f, 0)?;
                }
                write!(f, ")")
            }
            Expr::Chi { operands, ops } => {
                write!(f, "chi(")?;
                operands[0].fmt_prec(f, 0)?;
                for (op, e) in ops.iter().zip(operands.iter().skip(1)) {
                    write!(f, "{}", op.symbol())?;
                    e.fmt_prec(f, 0)?;
                }
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Cmp(CmpOp),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(x) => format!("number {}", x),
            Tok::Ident(s) => format!("identifier `{}`", s),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Cmp(op) => format!("`{}`", op.symbol()),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'+' => {
                out.push((i, Tok::Plus));
                i += 1;
            }
            b'-' => {
                out.push((i, Tok::Minus));
                i += 1;
            }
            b'*' => {
                out.push((i, Tok::Star));
                i += 1;
            }
            b'/' => {
                out.push((i, Tok::Slash));
                i += 1;
            }
            b'^' => {
                out.push((i, Tok::Caret));
                i += 1;
            }
            b'(' => {
                out.push((i, Tok::LParen));
                i += 1;
            }
            b')' => {
                out.push((i, Tok::RParen));
                i += 1;
            }
            b',' => {
                out.push((i, Tok::Comma));
                i += 1;
            }
            b'<' | b'>' => {
                let strict = if i + 1 < bytes.len() && bytes[i + 1] == b'=' {
                    false
                } else {
                    true
                };
                let op = match (c, strict) {
                    (b'<', true) => CmpOp::Lt,
                    (b'<', false) => CmpOp::Le,
                    (b'>', true) => CmpOp::Gt,
                    (b'>', false) => CmpOp::Ge,
                    _ => unreachable!(),
                };
                out.push((i, Tok::Cmp(op)));
                i += if strict { 1 } else { 2 };
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
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
                let s = &text[start..i];
                let num: f64 = s.parse().map_err(|_| ParseError {
                    offset: start,
                    found: format!("`{}`", s),
                    expected: vec!["number"],
                })?;
                out.push((start, Tok::Num(num)));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(text[start..i].to_string())));
            }
            _ => {
                return Err(ParseError {
                    offset: i,
                    found: format!("`{}`", &text[i..i + 1]),
                    expected: vec!["number", "identifier", "operator"],
                });
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map(|(o, _)| *o).unwrap_or(self.end)
    }

    fn err(&self, expected: Vec<&'static str>) -> ParseError {
        ParseError {
            offset: self.offset(),
            found: self
                .peek()
                .map(|t| t.describe())
                .unwrap_or_else(|| "end of input".into()),
            expected,
        }
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        if self.pos == self.tokens.len() {
            Ok(())
        } else {
            Err(self.err(vec!["end of input", "operator"]))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // factor := '-' factor | power ; power := atom ('^' factor)?
    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let base = self.atom()?;
        if self.eat(&Tok::Caret) {
            let exp = self.factor()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(x)) => {
                self.pos += 1;
                Ok(Expr::Num(x))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(&Tok::RParen) {
                    return Err(self.err(vec!["`)`", "operator"]));
                }
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if name == "t" {
                    return Ok(Expr::Var);
                }
                if name == "chi" {
                    return self.chi_args();
                }
                let func = Func::from_name(&name).ok_or_else(|| ParseError {
                    offset: self.tokens[self.pos - 1].0,
                    found: format!("identifier `{}`", name),
                    expected: vec!["`t`", "function name", "`chi`"],
                })?;
                if !self.eat(&Tok::LParen) {
                    return Err(self.err(vec!["`(`"]));
                }
                let mut args = vec![self.expr()?];
                while self.eat(&Tok::Comma) {
                    args.push(self.expr()?);
                }
                if !self.eat(&Tok::RParen) {
                    return Err(self.err(vec!["`)`", "`,`"]));
                }
                if args.len() != func.arity() {
                    return Err(ParseError {
                        offset: self.offset(),
                        found: format!("{} argument(s)", args.len()),
                        expected: if func.arity() == 1 {
                            vec!["1 argument"]
                        } else {
                            vec!["2 arguments"]
                        },
                    });
                }
                Ok(Expr::Call(func, args))
            }
            _ => Err(self.err(vec!["number", "`t`", "`(`", "function call", "`-`"])),
        }
    }

    fn chi_args(&mut self) -> Result<Expr, ParseError> {
        if !self.eat(&Tok::LParen) {
            return Err(self.err(vec!["`(`"]));
        }
        let mut operands = vec![self.expr()?];
        let mut ops = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Cmp(op)) => {
                    let op = *op;
                    self.pos += 1;
                    ops.push(op);
                    operands.push(self.expr()?);
                }
                Some(Tok::RParen) => break,
                _ => return Err(self.err(vec!["comparison", "`)`"])),
            }
        }
        self.bump(); // the `)`
        if ops.is_empty() {
            return Err(ParseError {
                offset: self.offset(),
                found: "plain expression".into(),
                expected: vec!["comparison chain"],
            });
        }
        Ok(Expr::Chi { operands, ops })
    }
}
