//! Symbolic loop-bound expressions.
//!
//! The surface syntax is the range grammar used by the runtime layer:
//!
//! ```text
//! linear ::= number | ident | number '*' linear | linear '+' linear | linear '-' linear
//! expr   ::= linear
//!          | MIN(expr, expr) | MAX(expr, expr)
//!          | CEIL(linear, number) | FLOOR(linear, number)
//!          | SHIFTL(linear, number) | SHIFTR(linear, number)
//! ```
//!
//! Parentheses are accepted around linear sub-expressions so that the
//! canonical printer can express right-nested sums.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Index;

use thiserror::Error;

use crate::sym::Sym;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Induction,
    Parameter,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    Var(Sym, VarKind),
    Scale(i64, Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    CeilDiv(Box<Expr>, i64),
    FloorDiv(Box<Expr>, i64),
    ShiftL(Box<Expr>, u32),
    ShiftR(Box<Expr>, u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("unbound variable `{0}`")]
    Unbound(Sym),
    #[error("variable `{0}` is missing from the bounding box")]
    MissingFromBox(Sym),
    #[error("integer overflow while evaluating `{0}`")]
    Overflow(String),
    #[error("divisor must be positive, got {0}")]
    NonPositiveDivisor(i64),
    #[error("operand of {0} must be a linear expression")]
    NonLinearOperand(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

/// Variable bindings at which expressions are evaluated.
///
/// Bindings are a small stack; lookups scan from the innermost binding so a
/// loop walker can `push`/`pop` induction variables cheaply.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Env {
    slots: Vec<(Sym, i64)>,
}

impl Env {
    pub fn new() -> Env {
        Env::default()
    }

    pub fn get(&self, sym: Sym) -> Option<i64> {
        self.slots.iter().rev().find(|(s, _)| *s == sym).map(|&(_, v)| v)
    }

    /// Sets `sym`, replacing the innermost existing binding.
    pub fn set(&mut self, sym: Sym, value: i64) {
        match self.slots.iter_mut().rev().find(|(s, _)| *s == sym) {
            Some(slot) => slot.1 = value,
            None => self.slots.push((sym, value)),
        }
    }

    pub fn push(&mut self, sym: Sym, value: i64) {
        self.slots.push((sym, value));
    }

    pub fn pop(&mut self) -> Option<(Sym, i64)> {
        self.slots.pop()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn truncate(&mut self, len: usize) {
        self.slots.truncate(len);
    }

    pub fn iter(&self) -> impl Iterator<Item = (Sym, i64)> + '_ {
        self.slots.iter().copied()
    }
}

impl Index<Sym> for Env {
    type Output = i64;

    fn index(&self, sym: Sym) -> &i64 {
        self.slots
            .iter()
            .rev()
            .find(|(s, _)| *s == sym)
            .map(|(_, v)| v)
            .unwrap_or_else(|| panic!("unbound variable `{sym}`"))
    }
}

impl<S: Into<Sym>> FromIterator<(S, i64)> for Env {
    fn from_iter<I: IntoIterator<Item = (S, i64)>>(iter: I) -> Env {
        let mut env = Env::new();
        for (s, v) in iter {
            env.set(s.into(), v);
        }
        env
    }
}

/// Per-variable inclusive intervals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntervalBox {
    ranges: BTreeMap<Sym, (i64, i64)>,
}

impl IntervalBox {
    pub fn new() -> IntervalBox {
        IntervalBox::default()
    }

    /// Adds `sym ∈ [lo, hi]`. Panics when `lo > hi`.
    pub fn with(mut self, sym: impl Into<Sym>, lo: i64, hi: i64) -> IntervalBox {
        assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        self.ranges.insert(sym.into(), (lo, hi));
        self
    }

    pub fn get(&self, sym: Sym) -> Option<(i64, i64)> {
        self.ranges.get(&sym).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Sym, (i64, i64))> + '_ {
        self.ranges.iter().map(|(s, r)| (*s, *r))
    }
}

/// `constant + Σ coeff·var`, the normal form of a linear sub-tree.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Affine {
    constant: i64,
    terms: Vec<(Sym, i64)>,
}

impl Affine {
    fn add_term(&mut self, sym: Sym, coeff: i64) -> Option<()> {
        match self.terms.iter_mut().find(|(s, _)| *s == sym) {
            Some(t) => t.1 = t.1.checked_add(coeff)?,
            None => self.terms.push((sym, coeff)),
        }
        Some(())
    }

    fn scaled(&self, k: i64) -> Option<Affine> {
        let mut out = Affine {
            constant: self.constant.checked_mul(k)?,
            terms: Vec::with_capacity(self.terms.len()),
        };
        for &(s, c) in &self.terms {
            out.terms.push((s, c.checked_mul(k)?));
        }
        Some(out)
    }

    fn combine(mut self, other: &Affine, sign: i64) -> Option<Affine> {
        self.constant = self.constant.checked_add(other.constant.checked_mul(sign)?)?;
        for &(s, c) in &other.terms {
            self.add_term(s, c.checked_mul(sign)?)?;
        }
        Some(self)
    }
}

fn floor_div(x: i64, d: i64) -> i64 {
    x.div_euclid(d)
}

fn ceil_div(x: i64, d: i64) -> Option<i64> {
    // d > 0: ceil(x/d) = -floor(-x/d)
    Some(-(x.checked_neg()?.div_euclid(d)))
}

fn shift_left(x: i64, amount: u32) -> Option<i64> {
    if amount >= 63 {
        return if x == 0 { Some(0) } else { None };
    }
    x.checked_mul(1i64 << amount)
}

fn shift_right(x: i64, amount: u32) -> i64 {
    x >> amount.min(63)
}

impl Expr {
    pub fn int(v: i64) -> Expr {
        Expr::Int(v)
    }

    pub fn ind(name: impl Into<Sym>) -> Expr {
        Expr::Var(name.into(), VarKind::Induction)
    }

    pub fn param(name: impl Into<Sym>) -> Expr {
        Expr::Var(name.into(), VarKind::Parameter)
    }

    /// Parses with every identifier classified as an induction variable.
    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        Parser::new(text, &[]).parse_top()
    }

    /// Parses, classifying identifiers listed in `params` as parameters.
    pub fn parse_with_params(text: &str, params: &[Sym]) -> Result<Expr, ParseError> {
        Parser::new(text, params).parse_top()
    }

    pub fn scale(coeff: i64, child: Expr) -> Result<Expr, ExprError> {
        child.require_linear("*")?;
        Ok(Expr::Scale(coeff, Box::new(child)))
    }

    pub fn add(a: Expr, b: Expr) -> Result<Expr, ExprError> {
        a.require_linear("+")?;
        b.require_linear("+")?;
        Ok(Expr::Add(Box::new(a), Box::new(b)))
    }

    pub fn sub(a: Expr, b: Expr) -> Result<Expr, ExprError> {
        a.require_linear("-")?;
        b.require_linear("-")?;
        Ok(Expr::Sub(Box::new(a), Box::new(b)))
    }

    pub fn min(a: Expr, b: Expr) -> Expr {
        Expr::Min(Box::new(a), Box::new(b))
    }

    pub fn max(a: Expr, b: Expr) -> Expr {
        Expr::Max(Box::new(a), Box::new(b))
    }

    pub fn floor_div(child: Expr, divisor: i64) -> Result<Expr, ExprError> {
        child.require_linear("FLOOR")?;
        if divisor <= 0 {
            return Err(ExprError::NonPositiveDivisor(divisor));
        }
        Ok(Expr::FloorDiv(Box::new(child), divisor))
    }

    pub fn ceil_div(child: Expr, divisor: i64) -> Result<Expr, ExprError> {
        child.require_linear("CEIL")?;
        if divisor <= 0 {
            return Err(ExprError::NonPositiveDivisor(divisor));
        }
        Ok(Expr::CeilDiv(Box::new(child), divisor))
    }

    pub fn shift_left(child: Expr, amount: u32) -> Result<Expr, ExprError> {
        child.require_linear("SHIFTL")?;
        Ok(Expr::ShiftL(Box::new(child), amount))
    }

    pub fn shift_right(child: Expr, amount: u32) -> Result<Expr, ExprError> {
        child.require_linear("SHIFTR")?;
        Ok(Expr::ShiftR(Box::new(child), amount))
    }

    fn require_linear(&self, op: &'static str) -> Result<(), ExprError> {
        if self.is_linear() {
            Ok(())
        } else {
            Err(ExprError::NonLinearOperand(op))
        }
    }

    pub fn is_linear(&self) -> bool {
        match self {
            Expr::Int(_) | Expr::Var(..) => true,
            Expr::Scale(_, c) => c.is_linear(),
            Expr::Add(a, b) | Expr::Sub(a, b) => a.is_linear() && b.is_linear(),
            _ => false,
        }
    }

    /// Checks the structural invariants: positive divisors and linear
    /// operands wherever the grammar demands `<linear-expr>`.
    pub fn validate(&self) -> Result<(), ExprError> {
        match self {
            Expr::Int(_) | Expr::Var(..) => Ok(()),
            Expr::Scale(..) | Expr::Add(..) | Expr::Sub(..) => self.require_linear("+"),
            Expr::Min(a, b) | Expr::Max(a, b) => {
                a.validate()?;
                b.validate()
            }
            Expr::CeilDiv(c, d) | Expr::FloorDiv(c, d) => {
                c.require_linear("division")?;
                if *d <= 0 {
                    return Err(ExprError::NonPositiveDivisor(*d));
                }
                Ok(())
            }
            Expr::ShiftL(c, _) | Expr::ShiftR(c, _) => c.require_linear("shift"),
        }
    }

    pub fn free_vars(&self) -> Vec<Sym> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<Sym>) {
        match self {
            Expr::Int(_) => {}
            Expr::Var(s, _) => {
                if !out.contains(s) {
                    out.push(*s)
                }
            }
            Expr::Scale(_, c)
            | Expr::CeilDiv(c, _)
            | Expr::FloorDiv(c, _)
            | Expr::ShiftL(c, _)
            | Expr::ShiftR(c, _) => c.collect_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Min(a, b) | Expr::Max(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    fn overflow(&self) -> ExprError {
        ExprError::Overflow(self.to_string())
    }

    pub fn eval(&self, env: &Env) -> Result<i64, ExprError> {
        let v = match self {
            Expr::Int(v) => Some(*v),
            Expr::Var(s, _) => Some(env.get(*s).ok_or(ExprError::Unbound(*s))?),
            Expr::Scale(k, c) => k.checked_mul(c.eval(env)?),
            Expr::Add(a, b) => a.eval(env)?.checked_add(b.eval(env)?),
            Expr::Sub(a, b) => a.eval(env)?.checked_sub(b.eval(env)?),
            Expr::Min(a, b) => Some(a.eval(env)?.min(b.eval(env)?)),
            Expr::Max(a, b) => Some(a.eval(env)?.max(b.eval(env)?)),
            Expr::FloorDiv(c, d) => Some(floor_div(c.eval(env)?, *d)),
            Expr::CeilDiv(c, d) => ceil_div(c.eval(env)?, *d),
            Expr::ShiftL(c, a) => shift_left(c.eval(env)?, *a),
            Expr::ShiftR(c, a) => Some(shift_right(c.eval(env)?, *a)),
        };
        v.ok_or_else(|| self.overflow())
    }

    fn affine(&self) -> Result<Affine, ExprError> {
        let a = match self {
            Expr::Int(v) => Some(Affine {
                constant: *v,
                terms: Vec::new(),
            }),
            Expr::Var(s, _) => Some(Affine {
                constant: 0,
                terms: vec![(*s, 1)],
            }),
            Expr::Scale(k, c) => c.affine()?.scaled(*k),
            Expr::Add(a, b) => a.affine()?.combine(&b.affine()?, 1),
            Expr::Sub(a, b) => a.affine()?.combine(&b.affine()?, -1),
            _ => return Err(ExprError::NonLinearOperand("affine form")),
        };
        a.ok_or_else(|| self.overflow())
    }

    /// Minimum and maximum of the expression over every point of `bx`.
    ///
    /// Linear sub-trees are reduced to affine form and bounded by picking the
    /// box corner selected by each coefficient's sign, which is exact. Every
    /// other node is monotone in its operands, so intervals compose. The
    /// composite is exact unless the two operands of a MIN/MAX share a
    /// variable, in which case it is a sound enclosure.
    pub fn bounding_box(&self, bx: &IntervalBox) -> Result<(i64, i64), ExprError> {
        let over = || self.overflow();
        match self {
            Expr::Int(_) | Expr::Var(..) | Expr::Scale(..) | Expr::Add(..) | Expr::Sub(..) => {
                let aff = self.affine()?;
                let (mut lo, mut hi) = (aff.constant, aff.constant);
                for &(s, c) in &aff.terms {
                    let (vlo, vhi) = bx.get(s).ok_or(ExprError::MissingFromBox(s))?;
                    let (a, b) = (c.checked_mul(vlo).ok_or_else(over)?, c.checked_mul(vhi).ok_or_else(over)?);
                    lo = lo.checked_add(a.min(b)).ok_or_else(over)?;
                    hi = hi.checked_add(a.max(b)).ok_or_else(over)?;
                }
                Ok((lo, hi))
            }
            Expr::Min(a, b) => {
                let (alo, ahi) = a.bounding_box(bx)?;
                let (blo, bhi) = b.bounding_box(bx)?;
                Ok((alo.min(blo), ahi.min(bhi)))
            }
            Expr::Max(a, b) => {
                let (alo, ahi) = a.bounding_box(bx)?;
                let (blo, bhi) = b.bounding_box(bx)?;
                Ok((alo.max(blo), ahi.max(bhi)))
            }
            Expr::FloorDiv(c, d) => {
                let (lo, hi) = c.bounding_box(bx)?;
                Ok((floor_div(lo, *d), floor_div(hi, *d)))
            }
            Expr::CeilDiv(c, d) => {
                let (lo, hi) = c.bounding_box(bx)?;
                Ok((ceil_div(lo, *d).ok_or_else(over)?, ceil_div(hi, *d).ok_or_else(over)?))
            }
            Expr::ShiftL(c, a) => {
                let (lo, hi) = c.bounding_box(bx)?;
                Ok((shift_left(lo, *a).ok_or_else(over)?, shift_left(hi, *a).ok_or_else(over)?))
            }
            Expr::ShiftR(c, a) => {
                let (lo, hi) = c.bounding_box(bx)?;
                Ok((shift_right(lo, *a), shift_right(hi, *a)))
            }
        }
    }

    fn fmt_linear_operand(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Add(..) | Expr::Sub(..) => write!(f, "({self})"),
            _ => write!(f, "{self}"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(v) => write!(f, "{v}"),
            Expr::Var(s, _) => write!(f, "{s}"),
            Expr::Scale(k, c) => {
                write!(f, "{k}*")?;
                c.fmt_linear_operand(f)
            }
            Expr::Add(a, b) => {
                write!(f, "{a} + ")?;
                b.fmt_linear_operand(f)
            }
            Expr::Sub(a, b) => {
                write!(f, "{a} - ")?;
                b.fmt_linear_operand(f)
            }
            Expr::Min(a, b) => write!(f, "MIN({a}, {b})"),
            Expr::Max(a, b) => write!(f, "MAX({a}, {b})"),
            Expr::CeilDiv(c, d) => write!(f, "CEIL({c}, {d})"),
            Expr::FloorDiv(c, d) => write!(f, "FLOOR({c}, {d})"),
            Expr::ShiftL(c, a) => write!(f, "SHIFTL({c}, {a})"),
            Expr::ShiftR(c, a) => write!(f, "SHIFTR({c}, {a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(i128),
    Ident(String),
    Plus,
    Minus,
    Star,
    LParen,
    RParen,
    Comma,
    Eof,
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    idx: usize,
    params: &'a [Sym],
    lex_error: Option<ParseError>,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'0'..=b'9' => {
                let mut v: i128 = 0;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    v = v * 10 + (bytes[i] - b'0') as i128;
                    if v > i64::MAX as i128 + 1 {
                        return Err(ParseError {
                            pos: start,
                            msg: "integer literal out of range".into(),
                        });
                    }
                    i += 1;
                }
                out.push((start, Tok::Num(v)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(text[start..i].to_owned())));
                continue;
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    pos: start,
                    msg: format!("unexpected character `{ch}`"),
                });
            }
        };
        out.push((start, tok));
        i += 1;
    }
    out.push((text.len(), Tok::Eof));
    Ok(out)
}

const FUNCTIONS: [&str; 6] = ["MIN", "MAX", "CEIL", "FLOOR", "SHIFTL", "SHIFTR"];

impl<'a> Parser<'a> {
    fn new(text: &str, params: &'a [Sym]) -> Parser<'a> {
        let (toks, lex_error) = match lex(text) {
            Ok(t) => (t, None),
            Err(e) => (vec![(0, Tok::Eof)], Some(e)),
        };
        Parser {
            toks,
            idx: 0,
            params,
            lex_error,
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.idx].1
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.idx + 1).min(self.toks.len() - 1)].1
    }

    fn pos(&self) -> usize {
        self.toks[self.idx].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.idx].1.clone();
        if self.idx + 1 < self.toks.len() {
            self.idx += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn at_function(&self) -> Option<&'static str> {
        match (self.peek(), self.peek2()) {
            (Tok::Ident(name), Tok::LParen) => FUNCTIONS.iter().copied().find(|f| f == name),
            _ => None,
        }
    }

    fn parse_top(mut self) -> Result<Expr, ParseError> {
        if let Some(e) = self.lex_error.take() {
            return Err(e);
        }
        let e = self.parse_expr()?;
        if *self.peek() != Tok::Eof {
            return self.err("unexpected trailing input");
        }
        Ok(e)
    }

    fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        match self.at_function() {
            Some(name) => self.parse_call(name),
            None => self.parse_linear(),
        }
    }

    fn parse_call(&mut self, name: &'static str) -> Result<Expr, ParseError> {
        self.bump();
        self.bump();
        let e = match name {
            "MIN" | "MAX" => {
                let a = self.parse_expr()?;
                self.expect(Tok::Comma, "`,`")?;
                let b = self.parse_expr()?;
                if name == "MIN" {
                    Expr::min(a, b)
                } else {
                    Expr::max(a, b)
                }
            }
            _ => {
                let child = self.parse_linear()?;
                self.expect(Tok::Comma, "`,`")?;
                let pos = self.pos();
                let n = self.parse_literal(name)?;
                let fail = |msg: String| Err(ParseError { pos, msg });
                match name {
                    "CEIL" | "FLOOR" => {
                        if n <= 0 {
                            return fail(format!("divisor must be positive, got {n}"));
                        }
                        if name == "CEIL" {
                            Expr::CeilDiv(Box::new(child), n)
                        } else {
                            Expr::FloorDiv(Box::new(child), n)
                        }
                    }
                    _ => {
                        if !(0..=u32::MAX as i64).contains(&n) {
                            return fail(format!("shift amount must be non-negative, got {n}"));
                        }
                        if name == "SHIFTL" {
                            Expr::ShiftL(Box::new(child), n as u32)
                        } else {
                            Expr::ShiftR(Box::new(child), n as u32)
                        }
                    }
                }
            }
        };
        self.expect(Tok::RParen, "`)`")?;
        Ok(e)
    }

    fn parse_literal(&mut self, func: &str) -> Result<i64, ParseError> {
        let negative = *self.peek() == Tok::Minus;
        if negative {
            self.bump();
        }
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                let v = if negative { -v } else { v };
                i64::try_from(v).or_else(|_| self.err("integer literal out of range"))
            }
            _ => self.err(format!("second operand of {func} must be an integer literal")),
        }
    }

    fn parse_linear(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.parse_term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.parse_term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn number_term(&mut self, v: i128) -> Result<Expr, ParseError> {
        let v = match i64::try_from(v) {
            Ok(v) => v,
            Err(_) => return self.err("integer literal out of range"),
        };
        if *self.peek() == Tok::Star {
            self.bump();
            let child = self.parse_term()?;
            Ok(Expr::Scale(v, Box::new(child)))
        } else {
            Ok(Expr::Int(v))
        }
    }

    fn parse_term(&mut self) -> Result<Expr, ParseError> {
        if let Some(name) = self.at_function() {
            return self.err(format!("{name} is not allowed inside a linear expression"));
        }
        match self.peek().clone() {
            Tok::Minus => {
                self.bump();
                if let Some(name) = self.at_function() {
                    return self.err(format!("{name} is not allowed inside a linear expression"));
                }
                match self.peek().clone() {
                    Tok::Num(v) => {
                        self.bump();
                        self.number_term(-v)
                    }
                    Tok::Ident(_) | Tok::LParen => {
                        let child = self.parse_term()?;
                        Ok(Expr::Scale(-1, Box::new(child)))
                    }
                    _ => self.err("expected a term after `-`"),
                }
            }
            Tok::Num(v) => {
                self.bump();
                self.number_term(v)
            }
            Tok::Ident(name) => {
                self.bump();
                let sym = Sym::new(&name);
                let kind = if self.params.contains(&sym) {
                    VarKind::Parameter
                } else {
                    VarKind::Induction
                };
                Ok(Expr::Var(sym, kind))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.parse_linear()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Eof => self.err("unexpected end of input"),
            other => self.err(format!("unexpected token {other:?}")),
        }
    }
}
