use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Binary operators of the arithmetic rule grammar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
    Mod,
}

impl BinOp {
    pub const ALL: [BinOp; 7] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Min,
        BinOp::Max,
        BinOp::Mod,
    ];

    /// Operators whose operands may be swapped (and chains reassociated).
    pub fn is_commutative(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Mul | BinOp::Min | BinOp::Max)
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> BinOp {
        BinOp::ALL[i as usize]
    }

    /// Integer semantics: floor division and floor modulo; `None` when the
    /// divisor is zero or the result overflows.
    #[inline]
    pub fn apply(self, a: i64, b: i64) -> Option<i64> {
        match self {
            BinOp::Add => a.checked_add(b),
            BinOp::Sub => a.checked_sub(b),
            BinOp::Mul => a.checked_mul(b),
            BinOp::Div => floor_div(a, b),
            BinOp::Mod => floor_mod(a, b),
            BinOp::Min => Some(a.min(b)),
            BinOp::Max => Some(a.max(b)),
        }
    }

    fn infix(self) -> Option<(&'static str, u8)> {
        match self {
            BinOp::Add => Some(("+", 1)),
            BinOp::Sub => Some(("-", 1)),
            BinOp::Mul => Some(("*", 2)),
            BinOp::Div => Some(("/", 2)),
            BinOp::Mod => Some(("%", 2)),
            BinOp::Min | BinOp::Max => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Min => "min",
            BinOp::Max => "max",
        }
    }
}

#[inline]
pub fn floor_div(a: i64, b: i64) -> Option<i64> {
    if b == 0 {
        return None;
    }
    let q = a.checked_div(b)?;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        Some(q - 1)
    } else {
        Some(q)
    }
}

#[inline]
pub fn floor_mod(a: i64, b: i64) -> Option<i64> {
    if b == 0 {
        return None;
    }
    let r = a.checked_rem(b)?;
    if r != 0 && ((r < 0) != (b < 0)) {
        Some(r + b)
    } else {
        Some(r)
    }
}

/// Arithmetic expression tree over indexed symbols and integer constants.
///
/// Children are reference counted so larger trees can share smaller ones.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    Sym(u16),
    Const(i64),
    Bin(BinOp, Arc<Expr>, Arc<Expr>),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExprError {
    #[error("symbol index {index} is not bound (environment has {len} symbols)")]
    Unresolved { index: u16, len: usize },
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("parse error at column {col}: {msg}")]
    Parse { col: usize, msg: String },
}

impl Expr {
    pub fn sym(i: u16) -> Expr {
        Expr::Sym(i)
    }

    pub fn lit(v: i64) -> Expr {
        Expr::Const(v)
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Bin(op, Arc::new(l), Arc::new(r))
    }

    pub fn add(self, r: Expr) -> Expr {
        Expr::bin(BinOp::Add, self, r)
    }
    pub fn sub(self, r: Expr) -> Expr {
        Expr::bin(BinOp::Sub, self, r)
    }
    pub fn mul(self, r: Expr) -> Expr {
        Expr::bin(BinOp::Mul, self, r)
    }
    pub fn div(self, r: Expr) -> Expr {
        Expr::bin(BinOp::Div, self, r)
    }
    pub fn rem(self, r: Expr) -> Expr {
        Expr::bin(BinOp::Mod, self, r)
    }
    pub fn min(self, r: Expr) -> Expr {
        Expr::bin(BinOp::Min, self, r)
    }
    pub fn max(self, r: Expr) -> Expr {
        Expr::bin(BinOp::Max, self, r)
    }

    /// Evaluates against positional symbol values. Panics on an unbound
    /// symbol; use [`Expr::try_eval`] when the environment is untrusted.
    pub fn eval(&self, env: &[i64]) -> Option<i64> {
        match self {
            Expr::Sym(i) => Some(env[*i as usize]),
            Expr::Const(v) => Some(*v),
            Expr::Bin(op, l, r) => {
                let a = l.eval(env);
                let b = r.eval(env);
                op.apply(a?, b?)
            }
        }
    }

    pub fn try_eval(&self, env: &[i64]) -> Result<Option<i64>, ExprError> {
        if let Some(max) = self.max_symbol() {
            if max as usize >= env.len() {
                return Err(ExprError::Unresolved {
                    index: max,
                    len: env.len(),
                });
            }
        }
        Ok(self.eval(env))
    }

    pub fn op_count(&self) -> usize {
        match self {
            Expr::Bin(_, l, r) => 1 + l.op_count() + r.op_count(),
            _ => 0,
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.op_count() + 1
    }

    pub fn max_symbol(&self) -> Option<u16> {
        match self {
            Expr::Sym(i) => Some(*i),
            Expr::Const(_) => None,
            Expr::Bin(_, l, r) => match (l.max_symbol(), r.max_symbol()) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            },
        }
    }

    /// Symbols in left-to-right leaf order, with repetitions.
    pub fn symbols(&self) -> Vec<u16> {
        let mut out = Vec::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut Vec<u16>) {
        match self {
            Expr::Sym(i) => out.push(*i),
            Expr::Const(_) => {}
            Expr::Bin(_, l, r) => {
                l.collect_symbols(out);
                r.collect_symbols(out);
            }
        }
    }

    /// Renames every symbol through `map` (old index -> new index).
    pub fn rename(&self, map: &dyn Fn(u16) -> u16) -> Expr {
        match self {
            Expr::Sym(i) => Expr::Sym(map(*i)),
            Expr::Const(v) => Expr::Const(*v),
            Expr::Bin(op, l, r) => Expr::bin(*op, l.rename(map), r.rename(map)),
        }
    }

    pub fn compile(&self) -> Program {
        let mut tokens = Vec::with_capacity(2 * self.op_count() + 1);
        self.emit(&mut tokens);
        Program::new(tokens)
    }

    fn emit(&self, out: &mut Vec<Token>) {
        match self {
            Expr::Sym(i) => out.push(Token::Sym(*i)),
            Expr::Const(v) => out.push(Token::Const(*v)),
            Expr::Bin(op, l, r) => {
                l.emit(out);
                r.emit(out);
                out.push(Token::Op(*op));
            }
        }
    }

    /// Renders with symbol names supplied by `names`.
    pub fn display_with<'a, F>(&'a self, names: F) -> ExprDisplay<'a, F>
    where
        F: Fn(u16) -> String,
    {
        ExprDisplay { expr: self, names }
    }

    /// Renders with symbols from a name table.
    pub fn to_string_named(&self, names: &[String]) -> String {
        self.display_with(|i| {
            names
                .get(i as usize)
                .cloned()
                .unwrap_or_else(|| format!("s{i}"))
        })
        .to_string()
    }

    /// Parses infix text; identifiers are resolved through `lookup`.
    pub fn parse_with(text: &str, lookup: &dyn Fn(&str) -> Option<u16>) -> Result<Expr, ExprError> {
        let mut p = Parser {
            src: text.as_bytes(),
            pos: 0,
            lookup,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("trailing input"));
        }
        Ok(e)
    }

    /// Parses with identifiers resolved against an ordered name table.
    pub fn parse_named(text: &str, names: &[String]) -> Result<Expr, ExprError> {
        Expr::parse_with(text, &|n| names.iter().position(|x| x == n).map(|i| i as u16))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display_with(|i| format!("s{i}")))
    }
}

pub struct ExprDisplay<'a, F> {
    expr: &'a Expr,
    names: F,
}

impl<F: Fn(u16) -> String> ExprDisplay<'_, F> {
    fn prec(e: &Expr) -> u8 {
        match e {
            Expr::Bin(op, _, _) => op.infix().map(|(_, p)| p).unwrap_or(3),
            _ => 3,
        }
    }

    fn write(&self, e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match e {
            Expr::Sym(i) => write!(f, "{}", (self.names)(*i)),
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Bin(op, l, r) => match op.infix() {
                Some((sym, p)) => {
                    self.wrap(l, Self::prec(l) < p, f)?;
                    write!(f, " {sym} ")?;
                    self.wrap(r, Self::prec(r) <= p, f)
                }
                None => {
                    write!(f, "{}(", op.name())?;
                    self.write(l, f)?;
                    write!(f, ", ")?;
                    self.write(r, f)?;
                    write!(f, ")")
                }
            },
        }
    }

    fn wrap(&self, e: &Expr, parens: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parens = parens || matches!(e, Expr::Const(v) if *v < 0);
        if parens {
            write!(f, "(")?;
            self.write(e, f)?;
            write!(f, ")")
        } else {
            self.write(e, f)
        }
    }
}

impl<F: Fn(u16) -> String> fmt::Display for ExprDisplay<'_, F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(self.expr, f)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    lookup: &'a dyn Fn(&str) -> Option<u16>,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ExprError {
        ExprError::Parse {
            col: self.pos + 1,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                Some(b'%') => BinOp::Mod,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'-' => {
                let start = self.pos;
                self.pos += 1;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                text.parse::<i64>()
                    .map(Expr::Const)
                    .map_err(|_| ExprError::Parse {
                        col: start + 1,
                        msg: format!("bad integer `{text}`"),
                    })
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let ident = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let func = match ident {
                    "min" => Some(BinOp::Min),
                    "max" => Some(BinOp::Max),
                    _ => None,
                };
                if let Some(op) = func {
                    if self.peek() == Some(b'(') {
                        self.pos += 1;
                        let a = self.expr()?;
                        self.expect(b',')?;
                        let b = self.expr()?;
                        self.expect(b')')?;
                        return Ok(Expr::bin(op, a, b));
                    }
                }
                (self.lookup)(ident)
                    .map(Expr::Sym)
                    .ok_or_else(|| ExprError::UnknownSymbol(ident.to_string()))
            }
            _ => Err(self.err("expected expression")),
        }
    }
}

/// Postfix token of a compiled expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Token {
    Sym(u16),
    Const(i64),
    Op(BinOp),
}

/// Flat postfix form used on hot evaluation paths.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    tokens: Vec<Token>,
    depth: usize,
}

impl Program {
    pub fn new(tokens: Vec<Token>) -> Program {
        let mut depth = 0usize;
        let mut max = 0usize;
        for t in &tokens {
            match t {
                Token::Op(_) => depth -= 1,
                _ => {
                    depth += 1;
                    max = max.max(depth);
                }
            }
        }
        Program { tokens, depth: max }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn eval(&self, env: &[i64]) -> Option<i64> {
        if self.depth <= 16 {
            let mut stack = [0i64; 16];
            let mut undefined = false;
            let mut sp = 0;
            for t in &self.tokens {
                match *t {
                    Token::Sym(i) => {
                        stack[sp] = env[i as usize];
                        sp += 1;
                    }
                    Token::Const(v) => {
                        stack[sp] = v;
                        sp += 1;
                    }
                    Token::Op(op) => {
                        sp -= 1;
                        match op.apply(stack[sp - 1], stack[sp]) {
                            Some(v) => stack[sp - 1] = v,
                            None => {
                                undefined = true;
                                stack[sp - 1] = 0;
                            }
                        }
                    }
                }
            }
            (!undefined).then_some(stack[0])
        } else {
            let mut stack: Vec<Option<i64>> = Vec::with_capacity(self.depth);
            for t in &self.tokens {
                match *t {
                    Token::Sym(i) => stack.push(Some(env[i as usize])),
                    Token::Const(v) => stack.push(Some(v)),
                    Token::Op(op) => {
                        let b = stack.pop().unwrap();
                        let a = stack.pop().unwrap();
                        stack.push(match (a, b) {
                            (Some(a), Some(b)) => op.apply(a, b),
                            _ => None,
                        });
                    }
                }
            }
            stack.pop().unwrap()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        ["i_h", "pad", "kh", "stride"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn pool_height_formula() {
        let n = names();
        let e = Expr::parse_named("(i_h + 2 * pad - kh) / stride + 1", &n).unwrap();
        assert_eq!(e.eval(&[3, 0, 2, 1]), Some(2));
        assert_eq!(e.op_count(), 5);
    }

    #[test]
    fn division_by_zero_is_undefined() {
        let e = Expr::sym(0).div(Expr::sym(1));
        assert_eq!(e.eval(&[5, 0]), None);
        let m = Expr::sym(0).rem(Expr::sym(1));
        assert_eq!(m.eval(&[5, 0]), None);
        assert_eq!(e.compile().eval(&[5, 0]), None);
    }

    #[test]
    fn min_is_idempotent() {
        let e = Expr::sym(0).min(Expr::sym(1));
        assert_eq!(e.eval(&[7, 7]), Some(7));
    }

    #[test]
    fn floor_semantics() {
        assert_eq!(floor_div(-7, 2), Some(-4));
        assert_eq!(floor_div(7, -2), Some(-4));
        assert_eq!(floor_mod(-7, 2), Some(1));
        assert_eq!(floor_mod(7, -2), Some(-1));
        assert_eq!(floor_div(i64::MIN, -1), None);
    }

    #[test]
    fn unresolved_symbol_is_an_error() {
        let e = Expr::sym(3);
        assert_eq!(
            e.try_eval(&[1, 2]),
            Err(ExprError::Unresolved { index: 3, len: 2 })
        );
    }

    #[test]
    fn display_round_trips_structure() {
        let n = names();
        for src in [
            "i_h - (pad - kh)",
            "(i_h - pad) - kh",
            "i_h / (pad * kh)",
            "min(i_h, pad + 1) % 2",
            "i_h + (pad + kh)",
            "-1 * i_h",
            "i_h - (-2)",
        ] {
            let e = Expr::parse_named(src, &n).unwrap();
            let printed = e.to_string_named(&n);
            let back = Expr::parse_named(&printed, &n).unwrap();
            assert_eq!(e, back, "{src} -> {printed}");
        }
    }

    #[test]
    fn parse_errors_carry_columns() {
        let n = names();
        match Expr::parse_named("i_h + ", &n) {
            Err(ExprError::Parse { col, .. }) => assert_eq!(col, 7),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            Expr::parse_named("q + 1", &n),
            Err(ExprError::UnknownSymbol("q".into()))
        );
    }

    #[test]
    fn program_matches_tree() {
        let n = names();
        let e = Expr::parse_named("max(i_h % (pad + 2), kh) - stride / 2", &n).unwrap();
        let p = e.compile();
        for env in [[3, 0, 2, 1], [9, 4, 1, 3], [0, 0, 0, 0], [5, -2, 7, -3]] {
            assert_eq!(p.eval(&env), e.eval(&env));
        }
    }
}
