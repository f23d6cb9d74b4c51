//! Metric expression language.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?          // right associative
//! atom    := number | x<i> | y<i> | pi | func '(' expr ')' | '(' expr ')'
//! func    := sqrt | exp | log | sin | cos
//! ```
//!
//! Variable indices are 1-based in source text and 0-based in the AST.
//! Error positions are 1-based byte columns.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jets::{Jet, JetError};
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("lexical error at column {column}: unexpected character {found:?}")]
    Lexical { column: usize, found: char },
    #[error("parse error at column {column}: {message}")]
    Syntax { column: usize, message: String },
    #[error("unknown identifier `{name}` at column {column}")]
    UnknownIdentifier { column: usize, name: String },
    #[error("`{name}` at column {column} takes {expected} argument(s), got {got}")]
    Arity {
        column: usize,
        name: String,
        expected: usize,
        got: usize,
    },
}

impl ParseError {
    pub fn column(&self) -> usize {
        match self {
            ParseError::Lexical { column, .. }
            | ParseError::Syntax { column, .. }
            | ParseError::UnknownIdentifier { column, .. }
            | ParseError::Arity { column, .. } => *column,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Func {
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }
}

/// Parsed expression over `x1..xn`, `y1..yn`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExprAst {
    Const(f64),
    X(usize),
    Y(usize),
    Neg(Box<ExprAst>),
    Add(Box<ExprAst>, Box<ExprAst>),
    Sub(Box<ExprAst>, Box<ExprAst>),
    Mul(Box<ExprAst>, Box<ExprAst>),
    Div(Box<ExprAst>, Box<ExprAst>),
    Pow(Box<ExprAst>, Box<ExprAst>),
    Call(Func, Box<ExprAst>),
}

impl ExprAst {
    /// Largest x and y variable index (0-based) referenced, if any.
    pub fn max_indices(&self) -> (Option<usize>, Option<usize>) {
        fn merge(a: Option<usize>, b: Option<usize>) -> Option<usize> {
            match (a, b) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, None) => a,
                (None, b) => b,
            }
        }
        match self {
            ExprAst::Const(_) => (None, None),
            ExprAst::X(i) => (Some(*i), None),
            ExprAst::Y(i) => (None, Some(*i)),
            ExprAst::Neg(a) | ExprAst::Call(_, a) => a.max_indices(),
            ExprAst::Add(a, b)
            | ExprAst::Sub(a, b)
            | ExprAst::Mul(a, b)
            | ExprAst::Div(a, b)
            | ExprAst::Pow(a, b) => {
                let (ax, ay) = a.max_indices();
                let (bx, by) = b.max_indices();
                (merge(ax, bx), merge(ay, by))
            }
        }
    }

    pub fn uses_x(&self) -> bool {
        self.max_indices().0.is_some()
    }

    pub fn uses_y(&self) -> bool {
        self.max_indices().1.is_some()
    }

    /// Evaluates over any [`ExprScalar`]; `unit` supplies the constant embedding.
    pub fn eval<S: ExprScalar>(&self, x: &[S], y: &[S], unit: &S) -> Result<S, EvalError> {
        Ok(match self {
            ExprAst::Const(c) => unit.lift(*c),
            ExprAst::X(i) => x.get(*i).cloned().ok_or(EvalError::Index { var: 'x', index: *i })?,
            ExprAst::Y(i) => y.get(*i).cloned().ok_or(EvalError::Index { var: 'y', index: *i })?,
            ExprAst::Neg(a) => -a.eval(x, y, unit)?,
            ExprAst::Add(a, b) => a.eval(x, y, unit)? + b.eval(x, y, unit)?,
            ExprAst::Sub(a, b) => a.eval(x, y, unit)? - b.eval(x, y, unit)?,
            ExprAst::Mul(a, b) => a.eval(x, y, unit)? * b.eval(x, y, unit)?,
            ExprAst::Div(a, b) => {
                let d = b.eval(x, y, unit)?;
                if d.value_f64() == 0.0 {
                    return Err(EvalError::Domain { func: "div", value: 0.0 });
                }
                a.eval(x, y, unit)? / d
            }
            ExprAst::Pow(a, b) => {
                let base = a.eval(x, y, unit)?;
                if b.uses_x() || b.uses_y() {
                    let e = b.eval(x, y, unit)?;
                    (e * base.ln_checked()?).exp_checked()?
                } else {
                    let e = b.eval::<f64>(&[], &[], &1.0)?;
                    if e.fract() == 0.0 && e.abs() <= 64.0 {
                        base.powi_checked(e as i32)?
                    } else {
                        base.powf_checked(e)?
                    }
                }
            }
            ExprAst::Call(f, a) => {
                let v = a.eval(x, y, unit)?;
                match f {
                    Func::Sqrt => v.sqrt_checked()?,
                    Func::Exp => v.exp_checked()?,
                    Func::Log => v.ln_checked()?,
                    Func::Sin => v.sin_checked()?,
                    Func::Cos => v.cos_checked()?,
                }
            }
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            ExprAst::Add(..) | ExprAst::Sub(..) => 1,
            ExprAst::Mul(..) | ExprAst::Div(..) => 2,
            ExprAst::Neg(..) => 3,
            ExprAst::Pow(..) => 4,
            _ => 5,
        }
    }
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &ExprAst, min: u8| {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            ExprAst::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c:?})")
                } else {
                    write!(f, "{c:?}")
                }
            }
            ExprAst::X(i) => write!(f, "x{}", i + 1),
            ExprAst::Y(i) => write!(f, "y{}", i + 1),
            ExprAst::Neg(a) => {
                write!(f, "-")?;
                wrap(f, a, 3)
            }
            ExprAst::Add(a, b) | ExprAst::Sub(a, b) => {
                wrap(f, a, 1)?;
                write!(f, " {} ", if matches!(self, ExprAst::Add(..)) { '+' } else { '-' })?;
                wrap(f, b, 2)
            }
            ExprAst::Mul(a, b) | ExprAst::Div(a, b) => {
                wrap(f, a, 2)?;
                write!(f, "{}", if matches!(self, ExprAst::Mul(..)) { '*' } else { '/' })?;
                wrap(f, b, 3)
            }
            ExprAst::Pow(a, b) => {
                wrap(f, a, 5)?;
                write!(f, "^")?;
                wrap(f, b, 3)
            }
            ExprAst::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{func} is undefined at {value}")]
    Domain { func: &'static str, value: f64 },
    #[error("variable {var}{} is out of range", index + 1)]
    Index { var: char, index: usize },
}

impl From<JetError> for EvalError {
    fn from(e: JetError) -> Self {
        match e {
            JetError::Domain { func, value } => EvalError::Domain { func, value },
            JetError::DivisionByZero => EvalError::Domain { func: "div", value: 0.0 },
            other => panic!("unexpected jet error during evaluation: {other}"),
        }
    }
}

/// Number type an [`ExprAst`] can be evaluated over.
pub trait ExprScalar:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// A constant living in the same space as `self`.
    fn lift(&self, v: f64) -> Self;
    fn value_f64(&self) -> f64;
    fn sqrt_checked(&self) -> Result<Self, EvalError>;
    fn exp_checked(&self) -> Result<Self, EvalError>;
    fn ln_checked(&self) -> Result<Self, EvalError>;
    fn powf_checked(&self, e: f64) -> Result<Self, EvalError>;
    fn powi_checked(&self, e: i32) -> Result<Self, EvalError>;
    fn sin_checked(&self) -> Result<Self, EvalError>;
    fn cos_checked(&self) -> Result<Self, EvalError>;
}

macro_rules! real_expr_scalar {
    ($t:ty) => {
        impl ExprScalar for $t {
            fn lift(&self, v: f64) -> Self {
                v as $t
            }
            fn value_f64(&self) -> f64 {
                *self as f64
            }
            fn sqrt_checked(&self) -> Result<Self, EvalError> {
                if *self > 0.0 {
                    Ok(self.sqrt())
                } else {
                    Err(EvalError::Domain { func: "sqrt", value: *self as f64 })
                }
            }
            fn exp_checked(&self) -> Result<Self, EvalError> {
                Ok(self.exp())
            }
            fn ln_checked(&self) -> Result<Self, EvalError> {
                if *self > 0.0 {
                    Ok(self.ln())
                } else {
                    Err(EvalError::Domain { func: "log", value: *self as f64 })
                }
            }
            fn powf_checked(&self, e: f64) -> Result<Self, EvalError> {
                if *self > 0.0 {
                    Ok(self.powf(e as $t))
                } else {
                    Err(EvalError::Domain { func: "pow", value: *self as f64 })
                }
            }
            fn powi_checked(&self, e: i32) -> Result<Self, EvalError> {
                if e < 0 && *self == 0.0 {
                    return Err(EvalError::Domain { func: "pow", value: 0.0 });
                }
                Ok(self.powi(e))
            }
            fn sin_checked(&self) -> Result<Self, EvalError> {
                Ok(self.sin())
            }
            fn cos_checked(&self) -> Result<Self, EvalError> {
                Ok(self.cos())
            }
        }
    };
}

real_expr_scalar!(f32);
real_expr_scalar!(f64);

impl<T: Real> ExprScalar for Jet<T> {
    fn lift(&self, v: f64) -> Self {
        Jet::constant(self.spec(), lit(v))
    }
    fn value_f64(&self) -> f64 {
        to_f64(self.value())
    }
    fn sqrt_checked(&self) -> Result<Self, EvalError> {
        Ok(self.sqrt()?)
    }
    fn exp_checked(&self) -> Result<Self, EvalError> {
        Ok(self.exp())
    }
    fn ln_checked(&self) -> Result<Self, EvalError> {
        Ok(self.ln()?)
    }
    fn powf_checked(&self, e: f64) -> Result<Self, EvalError> {
        Ok(self.powf(lit(e))?)
    }
    fn powi_checked(&self, e: i32) -> Result<Self, EvalError> {
        Ok(self.powi(e)?)
    }
    fn sin_checked(&self) -> Result<Self, EvalError> {
        Ok(self.sin())
    }
    fn cos_checked(&self) -> Result<Self, EvalError> {
        Ok(self.cos())
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
    End,
}

struct Lexer<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
}

impl<'a> Lexer<'a> {
    fn run(src: &'a str) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut lx = Lexer { src, toks: Vec::new() };
        let bytes = src.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_ascii_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == '.' {
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
                let text = &lx.src[start..i];
                let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    column: start + 1,
                    message: format!("malformed number `{text}`"),
                })?;
                lx.toks.push((Tok::Num(v), start));
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                lx.toks.push((Tok::Ident(lx.src[start..i].to_string()), start));
            } else {
                let tok = match c {
                    '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    _ => {
                        let found = lx.src[i..].chars().next().unwrap();
                        return Err(ParseError::Lexical { column: i + 1, found });
                    }
                };
                lx.toks.push((tok, i));
                i += 1;
            }
        }
        lx.toks.push((Tok::End, src.len()));
        Ok(lx.toks)
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn column(&self) -> usize {
        self.toks[self.pos].1 + 1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        let found = match self.peek() {
            Tok::End => "end of input".to_string(),
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
        };
        ParseError::Syntax {
            column: self.column(),
            message: format!("expected {wanted}, found {found}"),
        }
    }

    fn expr(&mut self) -> Result<ExprAst, ParseError> {
        let mut lhs = self.term()?;
        while let Tok::Op(c @ ('+' | '-')) = *self.peek() {
            self.bump();
            let rhs = self.term()?;
            lhs = if c == '+' {
                ExprAst::Add(Box::new(lhs), Box::new(rhs))
            } else {
                ExprAst::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<ExprAst, ParseError> {
        let mut lhs = self.unary()?;
        while let Tok::Op(c @ ('*' | '/')) = *self.peek() {
            self.bump();
            let rhs = self.unary()?;
            lhs = if c == '*' {
                ExprAst::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                ExprAst::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<ExprAst, ParseError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            return Ok(ExprAst::Neg(Box::new(self.unary()?)));
        }
        if *self.peek() == Tok::Op('+') {
            self.bump();
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<ExprAst, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exp = self.unary()?;
            return Ok(ExprAst::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<ExprAst, ParseError> {
        let column = self.column();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(ExprAst::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.unexpected("`)`"));
                }
                self.bump();
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(func) = Func::from_name(&name) {
                    if *self.peek() != Tok::LParen {
                        return Err(self.unexpected(&format!("`(` after `{name}`")));
                    }
                    self.bump();
                    if *self.peek() == Tok::RParen {
                        return Err(ParseError::Arity {
                            column,
                            name,
                            expected: 1,
                            got: 0,
                        });
                    }
                    let arg = self.expr()?;
                    let mut got = 1;
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        self.expr()?;
                        got += 1;
                    }
                    if got != 1 {
                        return Err(ParseError::Arity {
                            column,
                            name,
                            expected: 1,
                            got,
                        });
                    }
                    if *self.peek() != Tok::RParen {
                        return Err(self.unexpected("`)`"));
                    }
                    self.bump();
                    return Ok(ExprAst::Call(func, Box::new(arg)));
                }
                if name == "pi" {
                    return Ok(ExprAst::Const(std::f64::consts::PI));
                }
                variable(&name).ok_or(ParseError::UnknownIdentifier { column, name })
            }
            _ => Err(self.unexpected("an operand")),
        }
    }
}

fn variable(name: &str) -> Option<ExprAst> {
    let (head, digits) = name.split_at(1);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    let idx: usize = digits.parse().ok()?;
    match head {
        "x" => Some(ExprAst::X(idx - 1)),
        "y" => Some(ExprAst::Y(idx - 1)),
        _ => None,
    }
}

/// Parses a metric expression.
pub fn parse_metric(source: &str) -> Result<ExprAst, ParseError> {
    let toks = Lexer::run(source)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected("an operator or end of input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(e: ExprAst) -> Box<ExprAst> {
        Box::new(e)
    }

    #[test]
    fn euclidean_norm() {
        let ast = parse_metric("sqrt(y1^2 + y2^2)").unwrap();
        let want = ExprAst::Call(
            Func::Sqrt,
            b(ExprAst::Add(
                b(ExprAst::Pow(b(ExprAst::Y(0)), b(ExprAst::Const(2.0)))),
                b(ExprAst::Pow(b(ExprAst::Y(1)), b(ExprAst::Const(2.0)))),
            )),
        );
        assert_eq!(ast, want);
    }

    #[test]
    fn randers_structure() {
        let ast = parse_metric("sqrt(y1^2+y2^2) + 0.5*y1").unwrap();
        match ast {
            ExprAst::Add(lhs, rhs) => {
                assert!(matches!(*lhs, ExprAst::Call(Func::Sqrt, _)));
                assert_eq!(*rhs, ExprAst::Mul(b(ExprAst::Const(0.5)), b(ExprAst::Y(0))));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_input_reports_column() {
        let err = parse_metric("sqrt(y1^2 +").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { .. }));
        assert_eq!(err.column(), 12);
    }

    #[test]
    fn precedence_and_associativity() {
        let v = |s: &str| parse_metric(s).unwrap().eval::<f64>(&[], &[], &1.0).unwrap();
        assert_eq!(v("-2^2"), -4.0);
        assert_eq!(v("2^3^2"), 512.0);
        assert_eq!(v("8/4/2"), 1.0);
        assert_eq!(v("1-2-3"), -4.0);
        assert_eq!(v("2*3+4*5"), 26.0);
        assert_eq!(v("2^-1"), 0.5);
        assert_eq!(v("1e-1*10"), 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_metric("y1 $ 2"), Err(ParseError::Lexical { column: 4, found: '$' })));
        assert!(matches!(parse_metric("z1 + 1"), Err(ParseError::UnknownIdentifier { .. })));
        assert!(matches!(parse_metric("y0"), Err(ParseError::UnknownIdentifier { .. })));
        assert!(matches!(parse_metric("sqrt(y1, y2)"), Err(ParseError::Arity { got: 2, .. })));
        assert!(matches!(parse_metric("sqrt()"), Err(ParseError::Arity { got: 0, .. })));
        assert!(matches!(parse_metric("(y1"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_metric("y1 y2"), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn display_round_trips() {
        for src in [
            "sqrt(y1^2 + y2^2) + 0.3*x2*y1",
            "-(y1 - y2)^2/(1 + x1^2)",
            "exp(-x1)*4/(1+x1^2+x2^2)^2",
            "(y1^4 + y2^4)^0.25",
            "2^-1 - -y1",
        ] {
            let a = parse_metric(src).unwrap();
            let again = parse_metric(&a.to_string()).unwrap();
            assert_eq!(a, again, "{src} -> {a}");
        }
    }

    #[test]
    fn real_and_jet_agree() {
        use crate::jets::JetSpec;
        let ast = parse_metric("sqrt(y1^2 + y2^2 + x1*y1*y2) + sin(x2)*cos(y1)/exp(x1) + log(2 + x2^2)").unwrap();
        let (x, y) = ([0.3, -0.4], [1.2, 0.7]);
        let plain = ast.eval::<f64>(&x, &y, &1.0).unwrap();
        let spec = JetSpec::new(4, 3).unwrap();
        let xs: Vec<Jet<f64>> = (0..2).map(|i| Jet::seed_variable(i, x[i], spec).unwrap()).collect();
        let ys: Vec<Jet<f64>> = (0..2).map(|i| Jet::seed_variable(2 + i, y[i], spec).unwrap()).collect();
        let j = ast.eval(&xs, &ys, &Jet::constant(spec, 1.0)).unwrap();
        assert!((j.value() - plain).abs() <= 1e-14 * plain.abs().max(1.0));
    }
}
