//! Expression trees for the component nonlinearities `f_j(x, u)`.
//!
//! Expressions are parsed from a small infix grammar, differentiated
//! symbolically, and evaluated either at real points or over interval
//! boxes. Variables are written `x1..xn` (states) and `u1..um` (inputs),
//! one-based.
//!
//! Grammar:
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := ['-'] atom ['^' integer]
//! atom   := number | ident | func '(' expr ')' | '(' expr ')'
//! ident  := ('x'|'u') digits
//! func   := sin | cos | exp | sqrt | abs | tanh
//! ```
//! Whitespace is insignificant; numbers are decimals with an optional
//! exponent; `^` takes a nonnegative integer literal only.

use std::fmt;

use thiserror::Error;

use crate::interval::{DomainError, Interval, IntervalBox};
use crate::matfun::Mat;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown variable `{name}` at byte {offset}")]
    UnknownVariable { offset: usize, name: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { offset: usize, name: String },
    #[error("expression contains abs, which is not differentiable")]
    NonDifferentiable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    State,
    Input,
}

/// Zero-based reference to a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarRef {
    pub kind: VarKind,
    pub index: usize,
}

impl VarRef {
    pub fn state(index: usize) -> Self {
        Self {
            kind: VarKind::State,
            index,
        }
    }

    pub fn input(index: usize) -> Self {
        Self {
            kind: VarKind::Input,
            index,
        }
    }

    /// Position in a flat (states-then-inputs) vector of length n + m.
    fn flat(&self, n: usize) -> usize {
        match self.kind {
            VarKind::State => self.index,
            VarKind::Input => n + self.index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Tanh,
}

impl Func {
    fn name(&self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(VarRef),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    PowInt(Box<Expr>, u32),
    Call(Func, Box<Expr>),
}

// ---------------------------------------------------------------------------
// Smart constructors: constant folding and identity elimination only, no
// factoring, so derivative trees stay predictable.
// ---------------------------------------------------------------------------

impl Expr {
    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn state(i: usize) -> Expr {
        Expr::Var(VarRef::state(i))
    }

    pub fn input(i: usize) -> Expr {
        Expr::Var(VarRef::input(i))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
            (Expr::Const(x), b) if x == 0.0 => b,
            (a, Expr::Const(y)) if y == 0.0 => a,
            (a, b) => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
            (a, Expr::Const(y)) if y == 0.0 => a,
            (Expr::Const(x), b) if x == 0.0 => Expr::neg(b),
            (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(x) => Expr::Const(-x),
            Expr::Neg(inner) => *inner,
            a => Expr::Neg(Box::new(a)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
            (Expr::Const(x), _) | (_, Expr::Const(x)) if x == 0.0 => Expr::Const(0.0),
            (Expr::Const(x), b) if x == 1.0 => b,
            (a, Expr::Const(y)) if y == 1.0 => a,
            (Expr::Const(x), b) if x == -1.0 => Expr::neg(b),
            (a, Expr::Const(y)) if y == -1.0 => Expr::neg(a),
            (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) if y != 0.0 => Expr::Const(x / y),
            (a, Expr::Const(y)) if y == 1.0 => a,
            (Expr::Const(x), b) if x == 0.0 => {
                let _ = b;
                Expr::Const(0.0)
            }
            (a, b) => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Expr, k: u32) -> Expr {
        match (a, k) {
            (_, 0) => Expr::Const(1.0),
            (a, 1) => a,
            (Expr::Const(x), k) => Expr::Const(x.powi(k as i32)),
            (a, k) => Expr::PowInt(Box::new(a), k),
        }
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        if let Expr::Const(x) = a {
            let v = match f {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Exp => x.exp(),
                Func::Sqrt if x >= 0.0 => x.sqrt(),
                Func::Abs => x.abs(),
                Func::Tanh => x.tanh(),
                // sqrt of a negative constant: keep symbolic, evaluation
                // reports the domain error.
                Func::Sqrt => return Expr::Call(f, Box::new(Expr::Const(x))),
            };
            return Expr::Const(v);
        }
        Expr::Call(f, Box::new(a))
    }

    /// Largest referenced index per variable kind, for model validation.
    pub fn max_indices(&self) -> (Option<usize>, Option<usize>) {
        fn walk(e: &Expr, sx: &mut Option<usize>, su: &mut Option<usize>) {
            match e {
                Expr::Const(_) => {}
                Expr::Var(v) => {
                    let slot = match v.kind {
                        VarKind::State => sx,
                        VarKind::Input => su,
                    };
                    *slot = Some(slot.map_or(v.index, |cur: usize| cur.max(v.index)));
                }
                Expr::Neg(a) | Expr::PowInt(a, _) | Expr::Call(_, a) => walk(a, sx, su),
                Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                    walk(a, sx, su);
                    walk(b, sx, su);
                }
            }
        }
        let (mut sx, mut su) = (None, None);
        walk(self, &mut sx, &mut su);
        (sx, su)
    }

    pub fn contains_abs(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Call(Func::Abs, _) => true,
            Expr::Neg(a) | Expr::PowInt(a, _) | Expr::Call(_, a) => a.contains_abs(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.contains_abs() || b.contains_abs()
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

impl Expr {
    /// Evaluate at a real point `z` of length n + m (states then inputs).
    pub fn eval_point(&self, z: &[f64], n: usize) -> Result<f64, DomainError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => z[v.flat(n)],
            Expr::Neg(a) => -a.eval_point(z, n)?,
            Expr::Add(a, b) => a.eval_point(z, n)? + b.eval_point(z, n)?,
            Expr::Sub(a, b) => a.eval_point(z, n)? - b.eval_point(z, n)?,
            Expr::Mul(a, b) => a.eval_point(z, n)? * b.eval_point(z, n)?,
            Expr::Div(a, b) => {
                let den = b.eval_point(z, n)?;
                if den == 0.0 {
                    return Err(DomainError::DivisionByZero(0.0, 0.0));
                }
                a.eval_point(z, n)? / den
            }
            Expr::PowInt(a, k) => a.eval_point(z, n)?.powi(*k as i32),
            Expr::Call(f, a) => {
                let x = a.eval_point(z, n)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(DomainError::SqrtNegative(x, x));
                        }
                        x.sqrt()
                    }
                    Func::Abs => x.abs(),
                    Func::Tanh => x.tanh(),
                }
            }
        };
        if v.is_nan() {
            return Err(DomainError::NotANumber);
        }
        Ok(v)
    }

    /// Evaluate over an interval box of length n + m; the result encloses
    /// the true image of the box.
    pub fn eval_interval(&self, bx: &IntervalBox, n: usize) -> Result<Interval, DomainError> {
        Ok(match self {
            Expr::Const(c) => Interval::point(*c),
            Expr::Var(v) => bx.dims[v.flat(n)],
            Expr::Neg(a) => -a.eval_interval(bx, n)?,
            Expr::Add(a, b) => a.eval_interval(bx, n)? + b.eval_interval(bx, n)?,
            Expr::Sub(a, b) => a.eval_interval(bx, n)? - b.eval_interval(bx, n)?,
            Expr::Mul(a, b) => a.eval_interval(bx, n)? * b.eval_interval(bx, n)?,
            Expr::Div(a, b) => (a.eval_interval(bx, n)? / b.eval_interval(bx, n)?)?,
            Expr::PowInt(a, k) => a.eval_interval(bx, n)?.pow_int(*k),
            Expr::Call(f, a) => {
                let x = a.eval_interval(bx, n)?;
                match f {
                    Func::Sin => x.sin_i(),
                    Func::Cos => x.cos_i(),
                    Func::Exp => x.exp_i(),
                    Func::Sqrt => x.sqrt_i()?,
                    Func::Abs => x.abs_i(),
                    Func::Tanh => x.tanh_i(),
                }
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Differentiation
// ---------------------------------------------------------------------------

impl Expr {
    /// Exact symbolic partial derivative with respect to state `wrt`,
    /// simplified by constant folding and identity elimination.
    ///
    /// `abs` is rejected: it is parseable (objectives use it above the
    /// differentiation level) but has no derivative here.
    pub fn diff(&self, wrt: usize) -> Result<Expr, ExprError> {
        Ok(match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(v) => {
                if v.kind == VarKind::State && v.index == wrt {
                    Expr::Const(1.0)
                } else {
                    Expr::Const(0.0)
                }
            }
            Expr::Neg(a) => Expr::neg(a.diff(wrt)?),
            Expr::Add(a, b) => Expr::add(a.diff(wrt)?, b.diff(wrt)?),
            Expr::Sub(a, b) => Expr::sub(a.diff(wrt)?, b.diff(wrt)?),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.diff(wrt)?, (**b).clone()),
                Expr::mul((**a).clone(), b.diff(wrt)?),
            ),
            Expr::Div(a, b) => Expr::div(
                Expr::sub(
                    Expr::mul(a.diff(wrt)?, (**b).clone()),
                    Expr::mul((**a).clone(), b.diff(wrt)?),
                ),
                Expr::pow((**b).clone(), 2),
            ),
            Expr::PowInt(a, k) => Expr::mul(
                Expr::mul(Expr::Const(*k as f64), Expr::pow((**a).clone(), k - 1)),
                a.diff(wrt)?,
            ),
            Expr::Call(f, a) => {
                let inner = a.diff(wrt)?;
                let arg = (**a).clone();
                match f {
                    Func::Sin => Expr::mul(Expr::call(Func::Cos, arg), inner),
                    Func::Cos => Expr::mul(Expr::neg(Expr::call(Func::Sin, arg)), inner),
                    Func::Exp => Expr::mul(Expr::call(Func::Exp, arg), inner),
                    Func::Tanh => Expr::mul(
                        Expr::sub(
                            Expr::Const(1.0),
                            Expr::pow(Expr::call(Func::Tanh, arg), 2),
                        ),
                        inner,
                    ),
                    Func::Sqrt => Expr::div(
                        inner,
                        Expr::mul(Expr::Const(2.0), Expr::call(Func::Sqrt, arg)),
                    ),
                    Func::Abs => return Err(ExprError::NonDifferentiable),
                }
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

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
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, ExprError> {
        let mut lx = Lexer {
            src: src.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        while let Some(t) = lx.next_token()? {
            out.push(t);
        }
        Ok(out)
    }

    fn next_token(&mut self) -> Result<Option<(Tok, usize)>, ExprError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'0'..=b'9' | b'.' => {
                let mut end = self.pos;
                while end < self.src.len() && (self.src[end].is_ascii_digit() || self.src[end] == b'.') {
                    end += 1;
                }
                if end < self.src.len() && (self.src[end] == b'e' || self.src[end] == b'E') {
                    let mut e = end + 1;
                    if e < self.src.len() && (self.src[e] == b'+' || self.src[e] == b'-') {
                        e += 1;
                    }
                    if e < self.src.len() && self.src[e].is_ascii_digit() {
                        while e < self.src.len() && self.src[e].is_ascii_digit() {
                            e += 1;
                        }
                        end = e;
                    }
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    message: format!("invalid number `{text}`"),
                })?;
                self.pos = end;
                Tok::Num(v)
            }
            b'a'..=b'z' | b'A'..=b'Z' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
                {
                    end += 1;
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                self.pos = end;
                Tok::Ident(text.to_string())
            }
            other => {
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{}`", other as char),
                })
            }
        };
        Ok(Some((tok, start)))
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    n: usize,
    m: usize,
    src_len: usize,
}

/// Parse an expression string against declared dimensions `n` states and
/// `m` inputs.
pub fn parse(src: &str, n: usize, m: usize) -> Result<Expr, ExprError> {
    let toks = Lexer::tokens(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        n,
        m,
        src_len: src.len(),
    };
    let e = p.expr()?;
    if p.pos < p.toks.len() {
        let (_, off) = p.toks[p.pos].clone();
        return Err(ExprError::Syntax {
            offset: off,
            message: "unexpected trailing input".into(),
        });
    }
    Ok(e)
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|(_, o)| *o)
            .unwrap_or(self.src_len)
    }

    fn bump(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ExprError> {
        match self.bump() {
            Some((t, _)) if t == want => Ok(()),
            Some((_, off)) => Err(ExprError::Syntax {
                offset: off,
                message: format!("expected {what}"),
            }),
            None => Err(ExprError::Syntax {
                offset: self.src_len,
                message: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Minus) => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Slash) => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let negated = matches!(self.peek(), Some(Tok::Minus));
        if negated {
            self.bump();
        }
        let (atom, is_literal) = self.atom()?;
        let has_pow = matches!(self.peek(), Some(Tok::Caret));
        let base = if has_pow {
            let caret_off = self.offset();
            self.bump();
            let k = match self.bump() {
                Some((Tok::Num(v), off)) => {
                    if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
                        return Err(ExprError::Syntax {
                            offset: off,
                            message: "exponent must be a nonnegative integer literal".into(),
                        });
                    }
                    v as u32
                }
                _ => {
                    return Err(ExprError::Syntax {
                        offset: caret_off + 1,
                        message: "exponent must be a nonnegative integer literal".into(),
                    })
                }
            };
            Expr::PowInt(Box::new(atom), k)
        } else {
            atom
        };
        Ok(if negated {
            match base {
                // A minus directly on a bare numeric literal folds into
                // the constant; minus on anything else (including a
                // parenthesized constant) stays a Neg node.
                Expr::Const(v) if !has_pow && is_literal => Expr::Const(-v),
                b => Expr::Neg(Box::new(b)),
            }
        } else {
            base
        })
    }

    /// Returns the atom and whether it was a bare numeric literal.
    fn atom(&mut self) -> Result<(Expr, bool), ExprError> {
        match self.bump() {
            Some((Tok::Num(v), _)) => Ok((Expr::Const(v), true)),
            Some((Tok::LParen, _)) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "closing `)`")?;
                Ok((e, false))
            }
            Some((Tok::Ident(name), off)) => {
                if matches!(self.peek(), Some(Tok::LParen)) {
                    let func = Func::from_name(&name).ok_or(ExprError::UnknownFunction {
                        offset: off,
                        name: name.clone(),
                    })?;
                    self.bump(); // (
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "closing `)`")?;
                    Ok((Expr::Call(func, Box::new(arg)), false))
                } else {
                    Ok((self.var(&name, off)?, false))
                }
            }
            Some((_, off)) => Err(ExprError::Syntax {
                offset: off,
                message: "expected number, variable, function, or `(`".into(),
            }),
            None => Err(ExprError::Syntax {
                offset: self.src_len,
                message: "unexpected end of input".into(),
            }),
        }
    }

    fn var(&self, name: &str, off: usize) -> Result<Expr, ExprError> {
        let mut chars = name.chars();
        let head = chars.next().unwrap_or(' ');
        let rest: String = chars.collect();
        let kind = match head {
            'x' => VarKind::State,
            'u' => VarKind::Input,
            _ => {
                return Err(ExprError::UnknownVariable {
                    offset: off,
                    name: name.to_string(),
                })
            }
        };
        let index1: usize = rest.parse().map_err(|_| ExprError::UnknownVariable {
            offset: off,
            name: name.to_string(),
        })?;
        let limit = match kind {
            VarKind::State => self.n,
            VarKind::Input => self.m,
        };
        if index1 == 0 || index1 > limit {
            return Err(ExprError::UnknownVariable {
                offset: off,
                name: name.to_string(),
            });
        }
        Ok(Expr::Var(VarRef {
            kind,
            index: index1 - 1,
        }))
    }
}

// ---------------------------------------------------------------------------
// Rendering: infix output that re-parses to a structurally equal tree.
// ---------------------------------------------------------------------------

impl Expr {
    fn is_pow_base_atom(&self) -> bool {
        matches!(self, Expr::Var(_) | Expr::Call(..)) || matches!(self, Expr::Const(v) if *v >= 0.0)
    }

    fn write(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Var(v) => match v.kind {
                VarKind::State => write!(f, "x{}", v.index + 1),
                VarKind::Input => write!(f, "u{}", v.index + 1),
            },
            Expr::Neg(a) => match &**a {
                // `-atom` and `-atom^k` are valid factors; anything else
                // (including a nonnegative constant, which would re-parse
                // as a folded literal) gets parenthesized.
                Expr::Var(_) | Expr::Call(..) => {
                    write!(f, "-")?;
                    a.write(f)
                }
                Expr::PowInt(base, k) if base.is_pow_base_atom() => {
                    write!(f, "-")?;
                    base.write(f)?;
                    write!(f, "^{k}")
                }
                _ => {
                    write!(f, "-(")?;
                    a.write(f)?;
                    write!(f, ")")
                }
            },
            Expr::Add(a, b) => {
                a.write(f)?;
                write!(f, " + ")?;
                Self::write_sum_rhs(b, f)
            }
            Expr::Sub(a, b) => {
                a.write(f)?;
                write!(f, " - ")?;
                Self::write_sum_rhs(b, f)
            }
            Expr::Mul(a, b) => {
                Self::write_term_lhs(a, f)?;
                write!(f, "*")?;
                Self::write_term_rhs(b, f)
            }
            Expr::Div(a, b) => {
                Self::write_term_lhs(a, f)?;
                write!(f, "/")?;
                Self::write_term_rhs(b, f)
            }
            Expr::PowInt(a, k) => {
                if a.is_pow_base_atom() {
                    a.write(f)?;
                } else {
                    write!(f, "(")?;
                    a.write(f)?;
                    write!(f, ")")?;
                }
                write!(f, "^{k}")
            }
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write(f)?;
                write!(f, ")")
            }
        }
    }

    /// Right operand of `+`/`-`: same-level operators need parentheses to
    /// survive left associativity.
    fn write_sum_rhs(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if matches!(e, Expr::Add(..) | Expr::Sub(..)) {
            write!(f, "(")?;
            e.write(f)?;
            write!(f, ")")
        } else {
            e.write(f)
        }
    }

    fn write_term_lhs(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if matches!(e, Expr::Add(..) | Expr::Sub(..)) {
            write!(f, "(")?;
            e.write(f)?;
            write!(f, ")")
        } else {
            e.write(f)
        }
    }

    fn write_term_rhs(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if matches!(e, Expr::Add(..) | Expr::Sub(..) | Expr::Mul(..) | Expr::Div(..)) {
            write!(f, "(")?;
            e.write(f)?;
            write!(f, ")")
        } else {
            e.write(f)
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f)
    }
}

// ---------------------------------------------------------------------------
// System model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch in field `{field}`: {detail}")]
    Dimension { field: String, detail: String },
    #[error("domain box `omega` must have nonempty interior on state dimension {0}")]
    EmptyInterior(usize),
    #[error("expression f[{index}]: {source}")]
    BadExpr { index: usize, source: ExprError },
}

/// One nonlinear dynamic system `x' = A x + G f(x, u) + B u`, `y = C x`,
/// together with the domain box over which its constants are computed.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub g: usize,
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub gmat: Mat,
    pub f: Vec<Expr>,
    pub omega: IntervalBox,
}

impl SystemModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        m: usize,
        p: usize,
        g: usize,
        a: Mat,
        b: Mat,
        c: Mat,
        gmat: Mat,
        f: Vec<Expr>,
        omega: IntervalBox,
    ) -> Result<Self, ModelError> {
        let dim = |field: &str, got: (usize, usize), want: (usize, usize)| {
            if got != want {
                Err(ModelError::Dimension {
                    field: field.into(),
                    detail: format!("expected {}x{}, found {}x{}", want.0, want.1, got.0, got.1),
                })
            } else {
                Ok(())
            }
        };
        dim("A", (a.rows, a.cols), (n, n))?;
        dim("B", (b.rows, b.cols), (n, m))?;
        dim("C", (c.rows, c.cols), (p, n))?;
        dim("G", (gmat.rows, gmat.cols), (n, g))?;
        if f.len() != g {
            return Err(ModelError::Dimension {
                field: "f".into(),
                detail: format!("expected {} expressions, found {}", g, f.len()),
            });
        }
        if omega.len() != n + m {
            return Err(ModelError::Dimension {
                field: "omega".into(),
                detail: format!("expected {} intervals, found {}", n + m, omega.len()),
            });
        }
        for i in 0..n {
            if omega.dims[i].width() <= 0.0 {
                return Err(ModelError::EmptyInterior(i));
            }
        }
        for (index, e) in f.iter().enumerate() {
            let (sx, su) = e.max_indices();
            if let Some(ix) = sx {
                if ix >= n {
                    return Err(ModelError::BadExpr {
                        index,
                        source: ExprError::UnknownVariable {
                            offset: 0,
                            name: format!("x{}", ix + 1),
                        },
                    });
                }
            }
            if let Some(iu) = su {
                if iu >= m {
                    return Err(ModelError::BadExpr {
                        index,
                        source: ExprError::UnknownVariable {
                            offset: 0,
                            name: format!("u{}", iu + 1),
                        },
                    });
                }
            }
        }
        Ok(Self {
            n,
            m,
            p,
            g,
            a,
            b,
            c,
            gmat,
            f,
            omega,
        })
    }

    /// The planar example system: an unstable rotation with cubic damping
    /// `f(x) = -x ||x||^2`, output `y = x2`, and domain [-5, 5]^2.
    pub fn moving_object() -> SystemModel {
        let a = Mat::from_rows(&[&[1.0, -1.0], &[1.0, 1.0]]);
        let b = Mat::zeros(2, 0);
        let c = Mat::from_rows(&[&[0.0, 1.0]]);
        let gmat = Mat::identity(2);
        let f = vec![
            parse("-x1*(x1^2 + x2^2)", 2, 0).expect("builtin expression"),
            parse("-x2*(x1^2 + x2^2)", 2, 0).expect("builtin expression"),
        ];
        let omega = IntervalBox::new(vec![Interval::new(-5.0, 5.0), Interval::new(-5.0, 5.0)]);
        SystemModel::new(2, 0, 1, 2, a, b, c, gmat, f, omega).expect("builtin model")
    }

    /// f(x, u) as a vector, at a real point.
    pub fn f_value(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, DomainError> {
        let mut z = Vec::with_capacity(self.n + self.m);
        z.extend_from_slice(x);
        z.extend_from_slice(u);
        self.f.iter().map(|e| e.eval_point(&z, self.n)).collect()
    }

    /// G f(x, u) at a real point.
    pub fn gf_value(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, DomainError> {
        Ok(self.gmat.matvec(&self.f_value(x, u)?))
    }

    /// The n x n matrix of expressions with entry (i, j) equal to
    /// `sum_k G(i,k) * d f_k / d x_j`, constant-folded.
    pub fn jacobian_exprs(&self) -> Result<Vec<Vec<Expr>>, ExprError> {
        let mut xi = vec![vec![Expr::Const(0.0); self.n]; self.n];
        // Differentiate each component once per state.
        let mut dfk: Vec<Vec<Expr>> = Vec::with_capacity(self.g);
        for e in &self.f {
            let mut row = Vec::with_capacity(self.n);
            for j in 0..self.n {
                row.push(e.diff(j)?);
            }
            dfk.push(row);
        }
        for (i, xi_row) in xi.iter_mut().enumerate() {
            for (j, cell) in xi_row.iter_mut().enumerate() {
                let mut acc = Expr::Const(0.0);
                for (k, drow) in dfk.iter().enumerate() {
                    acc = Expr::add(
                        acc,
                        Expr::mul(Expr::Const(self.gmat.get(i, k)), drow[j].clone()),
                    );
                }
                *cell = acc;
            }
        }
        Ok(xi)
    }

    /// Symbolic symmetrized Jacobian `(Xi + Xi^T) / 2`.
    pub fn psi_exprs(&self) -> Result<Vec<Vec<Expr>>, ExprError> {
        let xi = self.jacobian_exprs()?;
        let n = self.n;
        let mut psi = vec![vec![Expr::Const(0.0); n]; n];
        for i in 0..n {
            for j in 0..n {
                psi[i][j] = Expr::mul(
                    Expr::Const(0.5),
                    Expr::add(xi[i][j].clone(), xi[j][i].clone()),
                );
            }
        }
        Ok(psi)
    }

    /// Numeric Jacobian at a point (entries of [`Self::jacobian_exprs`]
    /// evaluated).
    pub fn jacobian_at(
        &self,
        xi: &[Vec<Expr>],
        x: &[f64],
        u: &[f64],
    ) -> Result<Mat, DomainError> {
        let mut z = Vec::with_capacity(self.n + self.m);
        z.extend_from_slice(x);
        z.extend_from_slice(u);
        let mut out = Mat::zeros(self.n, self.n);
        for (i, row) in xi.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                out.set(i, j, e.eval_point(&z, self.n)?);
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Polynomial display: exact monomial collection used by the CLI to print
// Jacobian entries in expanded form. Returns None when the expression is
// not polynomial (calls, non-constant divisors).
// ---------------------------------------------------------------------------

pub mod poly {
    use super::Expr;
    use std::collections::BTreeMap;

    type Monomials = BTreeMap<Vec<u32>, f64>;

    fn mul_maps(a: &Monomials, b: &Monomials, nvars: usize) -> Monomials {
        let mut out = Monomials::new();
        for (ka, ca) in a {
            for (kb, cb) in b {
                let mut k = vec![0u32; nvars];
                for i in 0..nvars {
                    k[i] = ka[i] + kb[i];
                }
                *out.entry(k).or_insert(0.0) += ca * cb;
            }
        }
        out
    }

    fn add_maps(mut a: Monomials, b: Monomials) -> Monomials {
        for (k, c) in b {
            *a.entry(k).or_insert(0.0) += c;
        }
        a
    }

    fn scale_map(mut a: Monomials, s: f64) -> Monomials {
        for c in a.values_mut() {
            *c *= s;
        }
        a
    }

    fn collect(e: &Expr, n: usize, m: usize) -> Option<Monomials> {
        let nvars = n + m;
        Some(match e {
            Expr::Const(c) => {
                let mut out = Monomials::new();
                out.insert(vec![0; nvars], *c);
                out
            }
            Expr::Var(v) => {
                let mut k = vec![0u32; nvars];
                let flat = match v.kind {
                    super::VarKind::State => v.index,
                    super::VarKind::Input => n + v.index,
                };
                k[flat] = 1;
                let mut out = Monomials::new();
                out.insert(k, 1.0);
                out
            }
            Expr::Neg(a) => scale_map(collect(a, n, m)?, -1.0),
            Expr::Add(a, b) => add_maps(collect(a, n, m)?, collect(b, n, m)?),
            Expr::Sub(a, b) => add_maps(collect(a, n, m)?, scale_map(collect(b, n, m)?, -1.0)),
            Expr::Mul(a, b) => mul_maps(&collect(a, n, m)?, &collect(b, n, m)?, nvars),
            Expr::Div(a, b) => {
                let bm = collect(b, n, m)?;
                if bm.len() == 1 {
                    let (k, c) = bm.iter().next().unwrap();
                    if k.iter().all(|&e| e == 0) && *c != 0.0 {
                        return Some(scale_map(collect(a, n, m)?, 1.0 / c));
                    }
                }
                return None;
            }
            Expr::PowInt(a, k) => {
                let base = collect(a, n, m)?;
                let mut out = Monomials::new();
                out.insert(vec![0; nvars], 1.0);
                for _ in 0..*k {
                    out = mul_maps(&out, &base, nvars);
                }
                out
            }
            Expr::Call(..) => return None,
        })
    }

    fn var_name(flat: usize, n: usize) -> String {
        if flat < n {
            format!("x{}", flat + 1)
        } else {
            format!("u{}", flat - n + 1)
        }
    }

    /// Expanded polynomial rendering such as `-3*x1^2 - x2^2`, or None if
    /// the expression is not a polynomial.
    pub fn to_polynomial_string(e: &Expr, n: usize, m: usize) -> Option<String> {
        let map = collect(e, n, m)?;
        let mut terms: Vec<(Vec<u32>, f64)> =
            map.into_iter().filter(|(_, c)| *c != 0.0).collect();
        if terms.is_empty() {
            return Some("0".to_string());
        }
        // Highest total degree first, then lexicographically by exponents
        // (so x1-heavy terms print before x2-heavy ones).
        terms.sort_by(|(ka, _), (kb, _)| {
            let da: u32 = ka.iter().sum();
            let db: u32 = kb.iter().sum();
            db.cmp(&da).then(kb.cmp(ka))
        });
        let mut out = String::new();
        for (idx, (k, c)) in terms.iter().enumerate() {
            let neg = *c < 0.0;
            let mag = c.abs();
            if idx == 0 {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            let mut factors: Vec<String> = Vec::new();
            let is_const_term = k.iter().all(|&e| e == 0);
            if mag != 1.0 || is_const_term {
                factors.push(format!("{mag}"));
            }
            for (flat, &e) in k.iter().enumerate() {
                if e == 1 {
                    factors.push(var_name(flat, n));
                } else if e > 1 {
                    factors.push(format!("{}^{}", var_name(flat, n), e));
                }
            }
            out.push_str(&factors.join("*"));
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::{Interval, IntervalBox};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn box2(lo: f64, hi: f64) -> IntervalBox {
        IntervalBox::new(vec![Interval::new(lo, hi), Interval::new(lo, hi)])
    }

    #[test]
    fn parse_cubic_damping() {
        let e = parse("-x1*(x1^2 + x2^2)", 2, 0).unwrap();
        let want = Expr::Neg(Box::new(Expr::Mul(
            Box::new(Expr::Var(VarRef::state(0))),
            Box::new(Expr::Add(
                Box::new(Expr::PowInt(Box::new(Expr::Var(VarRef::state(0))), 2)),
                Box::new(Expr::PowInt(Box::new(Expr::Var(VarRef::state(1))), 2)),
            )),
        )));
        // The grammar attaches the leading minus to the first factor, so
        // the tree is Mul(Neg(x1), ...); both shapes evaluate identically,
        // assert the semantic value and the variable structure instead.
        let alt = Expr::Mul(
            Box::new(Expr::Neg(Box::new(Expr::Var(VarRef::state(0))))),
            Box::new(Expr::Add(
                Box::new(Expr::PowInt(Box::new(Expr::Var(VarRef::state(0))), 2)),
                Box::new(Expr::PowInt(Box::new(Expr::Var(VarRef::state(1))), 2)),
            )),
        );
        assert!(e == want || e == alt, "unexpected tree: {e:?}");
        assert_eq!(e.eval_point(&[1.0, 0.0], 2).unwrap(), -1.0);
    }

    #[test]
    fn parse_zero_and_simple() {
        assert_eq!(parse("0", 1, 0).unwrap(), Expr::Const(0.0));
        let e = parse("sin(x1)+u1", 1, 1).unwrap();
        assert_eq!(
            e,
            Expr::Add(
                Box::new(Expr::Call(Func::Sin, Box::new(Expr::Var(VarRef::state(0))))),
                Box::new(Expr::Var(VarRef::input(0))),
            )
        );
    }

    #[test]
    fn parse_errors() {
        match parse("x1 + @", 2, 0) {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("expected syntax error, got {other:?}"),
        }
        assert!(matches!(
            parse("x3", 2, 0),
            Err(ExprError::UnknownVariable { .. })
        ));
        assert!(matches!(
            parse("u1", 2, 0),
            Err(ExprError::UnknownVariable { .. })
        ));
        assert!(matches!(
            parse("sinh(x1)", 2, 0),
            Err(ExprError::UnknownFunction { .. })
        ));
        assert!(matches!(
            parse("x1^-2", 2, 0),
            Err(ExprError::Syntax { .. })
        ));
        assert!(matches!(
            parse("x1^2.5", 2, 0),
            Err(ExprError::Syntax { .. })
        ));
    }

    #[test]
    fn diff_moving_object_entries() {
        let e = parse("-x1*(x1^2 + x2^2)", 2, 0).unwrap();
        let d1 = e.diff(0).unwrap();
        let d2 = e.diff(1).unwrap();
        // Semantically -3x1^2 - x2^2 and -2x1x2.
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..100 {
            let x1 = rng.gen_range(-5.0..5.0);
            let x2 = rng.gen_range(-5.0..5.0);
            let z = [x1, x2];
            let v1 = d1.eval_point(&z, 2).unwrap();
            let v2 = d2.eval_point(&z, 2).unwrap();
            assert!((v1 - (-3.0 * x1 * x1 - x2 * x2)).abs() < 1e-10);
            assert!((v2 - (-2.0 * x1 * x2)).abs() < 1e-10);
        }
    }

    #[test]
    fn diff_input_is_constant() {
        let e = parse("u1", 2, 1).unwrap();
        assert_eq!(e.diff(0).unwrap(), Expr::Const(0.0));
    }

    #[test]
    fn diff_rejects_abs() {
        let e = parse("abs(x1)", 1, 0).unwrap();
        assert_eq!(e.diff(0), Err(ExprError::NonDifferentiable));
    }

    #[test]
    fn eval_point_examples() {
        let e = parse("-x1*(x1^2+x2^2)", 2, 0).unwrap();
        assert_eq!(e.eval_point(&[1.0, 0.0], 2).unwrap(), -1.0);
    }

    #[test]
    fn eval_interval_square() {
        let e = parse("x1^2", 1, 0).unwrap();
        let out = e
            .eval_interval(&IntervalBox::new(vec![Interval::new(-5.0, 5.0)]), 1)
            .unwrap();
        assert_eq!(out.lo, 0.0);
        assert!((out.hi - 25.0).abs() < 1e-10);
    }

    /// Row objective of the lower spectral bound: enclosure must cover and
    /// stay close to the true range, which a dense grid pins to [-150, 0].
    #[test]
    fn eval_interval_row_objective_range() {
        let e = parse("-3*x1^2 - x2^2 - 2*abs(x1*x2)", 2, 0).unwrap();
        // Grid oracle for the true range.
        let mut true_min = f64::INFINITY;
        let mut true_max = f64::NEG_INFINITY;
        let steps = 1000;
        for i in 0..=steps {
            for j in 0..=steps {
                let x1 = -5.0 + 10.0 * i as f64 / steps as f64;
                let x2 = -5.0 + 10.0 * j as f64 / steps as f64;
                let v = e.eval_point(&[x1, x2], 2).unwrap();
                true_min = true_min.min(v);
                true_max = true_max.max(v);
            }
        }
        assert!((true_min + 150.0).abs() < 1e-9);
        assert!(true_max.abs() < 1e-9);
        let out = e.eval_interval(&box2(-5.0, 5.0), 2).unwrap();
        assert!(out.lo <= true_min && true_max <= out.hi);
        assert!(out.lo >= -150.0 - 1e-9 && out.hi <= 0.0 + 1e-9);
    }

    #[test]
    fn eval_point_inside_eval_interval() {
        let mut rng = StdRng::seed_from_u64(11);
        let exprs = [
            parse("-x1*(x1^2+x2^2)", 2, 0).unwrap(),
            parse("sin(x1)*cos(x2) + x1/(x2 + 10)", 2, 0).unwrap(),
            parse("exp(x1/5)*tanh(x2)", 2, 0).unwrap(),
        ];
        for e in &exprs {
            for _ in 0..2000 {
                let lo1 = rng.gen_range(-5.0..4.0);
                let hi1 = lo1 + rng.gen_range(0.01..1.0);
                let lo2 = rng.gen_range(-5.0..4.0);
                let hi2 = lo2 + rng.gen_range(0.01..1.0);
                let bx = IntervalBox::new(vec![
                    Interval::new(lo1, hi1),
                    Interval::new(lo2, hi2),
                ]);
                let x1 = rng.gen_range(lo1..=hi1);
                let x2 = rng.gen_range(lo2..=hi2);
                let enc = e.eval_interval(&bx, 2).unwrap();
                let v = e.eval_point(&[x1, x2], 2).unwrap();
                assert!(enc.contains(v), "{e}: {v} not in {enc}");
            }
        }
    }

    /// Symbolic derivatives match central finite differences on random
    /// trees at random interior points.
    #[test]
    fn diff_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(1234);
        for _ in 0..300 {
            let e = random_smooth_expr(&mut rng, 0);
            let d = match e.diff(0) {
                Ok(d) => d,
                Err(_) => continue,
            };
            for _ in 0..5 {
                let x1 = rng.gen_range(-1.5..1.5);
                let x2 = rng.gen_range(-1.5..1.5);
                let h = 1e-6;
                let fp = e.eval_point(&[x1 + h, x2], 2);
                let fm = e.eval_point(&[x1 - h, x2], 2);
                let dv = d.eval_point(&[x1, x2], 2);
                if let (Ok(fp), Ok(fm), Ok(dv)) = (fp, fm, dv) {
                    let fd = (fp - fm) / (2.0 * h);
                    if fd.abs() > 1e6 || !fd.is_finite() {
                        continue;
                    }
                    let tol = 1e-5 * (1.0 + fd.abs().max(dv.abs()));
                    assert!(
                        (fd - dv).abs() <= tol,
                        "{e}: fd={fd}, sym={dv} at ({x1},{x2})"
                    );
                }
            }
        }
    }

    fn random_smooth_expr(rng: &mut StdRng, depth: usize) -> Expr {
        if depth >= 5 {
            return match rng.gen_range(0..3) {
                0 => Expr::Const(rng.gen_range(-3.0..3.0)),
                1 => Expr::state(0),
                _ => Expr::state(1),
            };
        }
        match rng.gen_range(0..8) {
            0 => Expr::Const(rng.gen_range(-3.0..3.0)),
            1 => Expr::state(rng.gen_range(0..2)),
            2 => Expr::add(
                random_smooth_expr(rng, depth + 1),
                random_smooth_expr(rng, depth + 1),
            ),
            3 => Expr::sub(
                random_smooth_expr(rng, depth + 1),
                random_smooth_expr(rng, depth + 1),
            ),
            4 => Expr::mul(
                random_smooth_expr(rng, depth + 1),
                random_smooth_expr(rng, depth + 1),
            ),
            5 => Expr::pow(random_smooth_expr(rng, depth + 1), rng.gen_range(0..4)),
            6 => Expr::call(
                [Func::Sin, Func::Cos, Func::Tanh][rng.gen_range(0..3)],
                random_smooth_expr(rng, depth + 1),
            ),
            _ => Expr::neg(random_smooth_expr(rng, depth + 1)),
        }
    }

    #[test]
    fn jacobian_moving_object() {
        let model = SystemModel::moving_object();
        let xi = model.jacobian_exprs().unwrap();
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..200 {
            let x1: f64 = rng.gen_range(-5.0..5.0);
            let x2: f64 = rng.gen_range(-5.0..5.0);
            let j = model.jacobian_at(&xi, &[x1, x2], &[]).unwrap();
            let want = [
                [-3.0 * x1 * x1 - x2 * x2, -2.0 * x1 * x2],
                [-2.0 * x1 * x2, -x1 * x1 - 3.0 * x2 * x2],
            ];
            for r in 0..2 {
                for c in 0..2 {
                    assert!((j.get(r, c) - want[r][c]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn jacobian_linear_is_constant_and_zero_f_is_zero() {
        let a = Mat::identity(2);
        let model = SystemModel::new(
            2,
            0,
            1,
            2,
            a.clone(),
            Mat::zeros(2, 0),
            Mat::from_rows(&[&[1.0, 0.0]]),
            Mat::identity(2),
            vec![parse("2*x1 - x2", 2, 0).unwrap(), parse("x2", 2, 0).unwrap()],
            IntervalBox::new(vec![Interval::new(-1.0, 1.0), Interval::new(-1.0, 1.0)]),
        )
        .unwrap();
        let xi = model.jacobian_exprs().unwrap();
        assert_eq!(xi[0][0], Expr::Const(2.0));
        assert_eq!(xi[0][1], Expr::Const(-1.0));
        assert_eq!(xi[1][0], Expr::Const(0.0));
        assert_eq!(xi[1][1], Expr::Const(1.0));

        let zero = SystemModel::new(
            2,
            0,
            1,
            2,
            a,
            Mat::zeros(2, 0),
            Mat::from_rows(&[&[1.0, 0.0]]),
            Mat::identity(2),
            vec![Expr::Const(0.0), Expr::Const(0.0)],
            IntervalBox::new(vec![Interval::new(-1.0, 1.0), Interval::new(-1.0, 1.0)]),
        )
        .unwrap();
        let xi0 = zero.jacobian_exprs().unwrap();
        for row in &xi0 {
            for e in row {
                assert_eq!(*e, Expr::Const(0.0));
            }
        }
    }

    #[test]
    fn polynomial_rendering() {
        let e = parse("-x1*(x1^2 + x2^2)", 2, 0).unwrap();
        let d0 = e.diff(0).unwrap();
        let d1 = e.diff(1).unwrap();
        assert_eq!(
            poly::to_polynomial_string(&d0, 2, 0).unwrap(),
            "-3*x1^2 - x2^2"
        );
        assert_eq!(poly::to_polynomial_string(&d1, 2, 0).unwrap(), "-2*x1*x2");
        assert_eq!(
            poly::to_polynomial_string(&Expr::Const(0.0), 2, 0).unwrap(),
            "0"
        );
        assert!(poly::to_polynomial_string(&parse("sin(x1)", 2, 0).unwrap(), 2, 0).is_none());
    }

    #[test]
    fn render_reparse_roundtrip_corpus() {
        let mut rng = StdRng::seed_from_u64(777);
        for _ in 0..100 {
            let e = random_render_expr(&mut rng, 0);
            let s = e.to_string();
            let back = parse(&s, 2, 1).unwrap_or_else(|err| panic!("reparse `{s}`: {err}"));
            assert_eq!(back, e, "render round-trip failed for `{s}`");
        }
    }

    fn random_render_expr(rng: &mut StdRng, depth: usize) -> Expr {
        if depth >= 4 {
            return match rng.gen_range(0..4) {
                0 => Expr::Const(rng.gen_range(-4i32..10) as f64 / 2.0),
                1 => Expr::state(0),
                2 => Expr::state(1),
                _ => Expr::input(0),
            };
        }
        let a = random_render_expr(rng, depth + 1);
        let b = random_render_expr(rng, depth + 1);
        match rng.gen_range(0..9) {
            0 => Expr::Add(Box::new(a), Box::new(b)),
            1 => Expr::Sub(Box::new(a), Box::new(b)),
            2 => Expr::Mul(Box::new(a), Box::new(b)),
            3 => Expr::Div(Box::new(a), Box::new(b)),
            4 => Expr::Neg(Box::new(a)),
            5 => Expr::PowInt(Box::new(a), rng.gen_range(0..4)),
            6 => Expr::Call(
                [Func::Sin, Func::Cos, Func::Exp, Func::Abs, Func::Tanh][rng.gen_range(0..5)],
                Box::new(a),
            ),
            7 => Expr::Const(rng.gen_range(-4i32..10) as f64 / 2.0),
            _ => a,
        }
    }

    #[test]
    fn model_validation_errors() {
        let bad_b = SystemModel::new(
            2,
            0,
            1,
            2,
            Mat::identity(2),
            Mat::zeros(2, 1),
            Mat::from_rows(&[&[1.0, 0.0]]),
            Mat::identity(2),
            vec![Expr::Const(0.0), Expr::Const(0.0)],
            IntervalBox::new(vec![Interval::new(-1.0, 1.0), Interval::new(-1.0, 1.0)]),
        );
        match bad_b {
            Err(ModelError::Dimension { field, .. }) => assert_eq!(field, "B"),
            other => panic!("expected B dimension error, got {other:?}"),
        }

        let empty_interior = SystemModel::new(
            1,
            0,
            1,
            1,
            Mat::identity(1),
            Mat::zeros(1, 0),
            Mat::identity(1),
            Mat::identity(1),
            vec![Expr::Const(0.0)],
            IntervalBox::new(vec![Interval::point(2.0)]),
        );
        assert!(matches!(empty_interior, Err(ModelError::EmptyInterior(0))));
    }
}
