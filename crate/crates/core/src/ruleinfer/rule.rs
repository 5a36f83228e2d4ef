use std::fmt;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::key::PartialOperatorKey;
use crate::exprsynth::{BinOp, Expr, ExprError};
use crate::trace::Record;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredKind {
    Eq,
    Lt,
}

/// `0 = expr` or `0 < expr`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Predicate {
    pub kind: PredKind,
    pub expr: Expr,
}

impl Predicate {
    pub fn eq(expr: Expr) -> Predicate {
        Predicate { kind: PredKind::Eq, expr }
    }

    pub fn lt(expr: Expr) -> Predicate {
        Predicate { kind: PredKind::Lt, expr }
    }

    /// Undefined arithmetic makes the predicate false.
    pub fn holds(&self, env: &[i64]) -> bool {
        match (self.kind, self.expr.eval(env)) {
            (PredKind::Eq, Some(v)) => v == 0,
            (PredKind::Lt, Some(v)) => v > 0,
            (_, None) => false,
        }
    }

    pub fn to_string_named(&self, names: &[String]) -> String {
        let rel = match self.kind {
            PredKind::Eq => "=",
            PredKind::Lt => "<",
        };
        format!("0 {rel} {}", self.expr.to_string_named(names))
    }

    pub fn parse_named(text: &str, names: &[String]) -> Result<Predicate, ExprError> {
        let t = text.trim();
        let bad = || ExprError::Parse {
            col: 1,
            msg: format!("predicate must start with `0 =` or `0 <`: `{t}`"),
        };
        let rest = t.strip_prefix('0').ok_or_else(bad)?.trim_start();
        let (kind, body) = if let Some(b) = rest.strip_prefix('=') {
            (PredKind::Eq, b)
        } else if let Some(b) = rest.strip_prefix('<') {
            (PredKind::Lt, b)
        } else {
            return Err(bad());
        };
        Ok(Predicate {
            kind,
            expr: Expr::parse_named(body, names)?,
        })
    }

    /// Symbol indices the predicate reads, sorted.
    pub fn symbols(&self) -> Vec<u16> {
        let mut s = self.expr.symbols();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub(crate) fn plus_one(e: Expr) -> Expr {
        Expr::bin(BinOp::Add, e, Expr::Const(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Inferred,
    Reused,
    Manual,
    EmptyConstraints,
}

/// Input constraints plus one shape expression per output dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorRule {
    pub key: PartialOperatorKey,
    pub symbols: Vec<String>,
    pub constraints: Vec<Predicate>,
    pub shape_prop: Vec<Vec<Expr>>,
    pub provenance: Provenance,
}

impl OperatorRule {
    pub fn accepts(&self, env: &[i64]) -> bool {
        self.constraints.iter().all(|p| p.holds(env))
    }

    /// Output shapes, or `None` if some dimension is undefined or negative.
    pub fn propagate(&self, env: &[i64]) -> Option<Vec<Vec<i64>>> {
        self.shape_prop
            .iter()
            .map(|dims| {
                dims.iter()
                    .map(|e| e.eval(env).filter(|&v| v >= 0))
                    .collect::<Option<Vec<i64>>>()
            })
            .collect()
    }

    /// Same symbol table and output signature.
    pub fn same_form(&self, key: &PartialOperatorKey, symbols: &[String]) -> bool {
        self.symbols == symbols && self.key.outputs == key.outputs
    }

    /// Valid records must be accepted and propagated exactly; invalid ones
    /// must be rejected.
    pub fn agrees_with(&self, r: &Record) -> bool {
        let env = r.env();
        if env.names != self.symbols {
            return false;
        }
        if !r.valid {
            return !self.accepts(&env.values);
        }
        if !self.accepts(&env.values) {
            return false;
        }
        let want: Vec<Vec<i64>> = r.outputs.iter().map(|t| t.shape.clone()).collect();
        self.propagate(&env.values) == Some(want)
    }
}

#[derive(Serialize, Deserialize)]
struct RuleLine {
    key: PartialOperatorKey,
    symbols: Vec<String>,
    constraints: Vec<String>,
    shape_prop: Vec<Vec<String>>,
    provenance: Provenance,
}

#[derive(Debug, Error)]
pub enum BookError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
}

impl OperatorRule {
    pub fn to_line(&self) -> String {
        let line = RuleLine {
            key: self.key.clone(),
            symbols: self.symbols.clone(),
            constraints: self.constraints.iter().map(|p| p.to_string_named(&self.symbols)).collect(),
            shape_prop: self
                .shape_prop
                .iter()
                .map(|d| d.iter().map(|e| e.to_string_named(&self.symbols)).collect())
                .collect(),
            provenance: self.provenance,
        };
        serde_json::to_string(&line).expect("rule serializes")
    }

    pub fn from_line(text: &str) -> Result<OperatorRule, String> {
        let l: RuleLine = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let constraints = l
            .constraints
            .iter()
            .map(|c| Predicate::parse_named(c, &l.symbols).map_err(|e| format!("{c}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        let shape_prop = l
            .shape_prop
            .iter()
            .map(|d| {
                d.iter()
                    .map(|e| Expr::parse_named(e, &l.symbols).map_err(|err| format!("{e}: {err}")))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        if shape_prop.len() != l.key.outputs.len() || shape_prop.iter().zip(&l.key.outputs).any(|(d, &r)| d.len() != r) {
            return Err("shape expressions do not match the output signature".into());
        }
        Ok(OperatorRule {
            key: l.key,
            symbols: l.symbols,
            constraints,
            shape_prop,
            provenance: l.provenance,
        })
    }
}

impl fmt::Display for OperatorRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} [{:?}]", self.key, self.provenance)?;
        for p in &self.constraints {
            writeln!(f, "  {}", p.to_string_named(&self.symbols))?;
        }
        for (t, dims) in self.shape_prop.iter().enumerate() {
            let ds: Vec<String> = dims.iter().map(|e| e.to_string_named(&self.symbols)).collect();
            writeln!(f, "  o{t} = [{}]", ds.join(", "))?;
        }
        Ok(())
    }
}

pub fn write_rulebook(path: &Path, rules: &[OperatorRule]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = io::BufWriter::new(fs::File::create(path)?);
    for r in rules {
        writeln!(w, "{}", r.to_line())?;
    }
    w.flush()
}

pub fn read_rulebook(path: &Path) -> Result<Vec<OperatorRule>, BookError> {
    let f = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in io::BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(OperatorRule::from_line(&line).map_err(|msg| BookError::Line { line: i + 1, msg })?);
    }
    Ok(out)
}
