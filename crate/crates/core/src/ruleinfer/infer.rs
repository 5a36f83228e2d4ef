//! Shape-propagation search and constraint inference for one partial operator.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::dedup::{deduplicate, Domain, Reducer};
use super::key::{key_of, PartialOperatorKey};
use super::rule::{OperatorRule, Predicate, Provenance};
use super::source::{ExprSource, TimedOut};
use crate::exprsynth::Expr;
use crate::trace::Record;

#[derive(Clone, Debug)]
pub struct InferConfig {
    /// Budget for one inference task (one output dimension, or one
    /// constraint pass).
    pub timeout: Duration,
    pub max_ops: usize,
    /// Operator cap for the equality pool of constraint inference.
    pub constraint_max_ops: usize,
    pub reuse: bool,
    /// Without counter examples, fix the constraints to the empty set.
    pub empty_shortcut: bool,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            timeout: Duration::from_secs(1000),
            max_ops: 5,
            constraint_max_ops: 2,
            reuse: true,
            empty_shortcut: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum InferFailure {
    #[error("no passing records")]
    NoPassing,
    #[error("timeout")]
    Timeout,
    #[error("unsat")]
    Unsat,
    #[error("counter example {0} satisfies every inferred predicate")]
    CounterAccepted(usize),
}

/// Records of one partial operator. Counter examples lack outputs and are
/// attached to every key with the same input side.
#[derive(Clone, Debug)]
pub struct PartialOpData {
    pub key: PartialOperatorKey,
    pub symbols: Vec<String>,
    pub passing: Vec<Record>,
    pub counter: Vec<Record>,
}

impl PartialOpData {
    pub fn n_dims(&self) -> usize {
        self.key.inputs.iter().map(|(r, _)| r).sum()
    }

    pub fn domain(&self) -> Domain {
        let envs: Vec<Vec<i64>> = self.passing.iter().chain(&self.counter).map(|r| r.env().values).collect();
        Domain::from_values(self.symbols.len(), self.n_dims(), envs.iter().map(|v| v.as_slice()))
    }
}

/// Groups valid records by key (in first-appearance order) and attaches
/// invalid ones.
pub fn group_records(records: &[Record]) -> Vec<PartialOpData> {
    let mut order: Vec<PartialOperatorKey> = Vec::new();
    let mut groups: BTreeMap<PartialOperatorKey, PartialOpData> = BTreeMap::new();
    for r in records.iter().filter(|r| r.valid) {
        let key = key_of(r);
        let g = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            PartialOpData {
                key,
                symbols: r.env().names,
                passing: Vec::new(),
                counter: Vec::new(),
            }
        });
        if !g.passing.iter().any(|p| p.same_call(r)) {
            g.passing.push(r.clone());
        }
    }
    for r in records.iter().filter(|r| !r.valid) {
        let key = key_of(r);
        for g in groups.values_mut() {
            if g.key.same_input_side(&key) && !g.counter.iter().any(|c| c.same_call(r)) {
                g.counter.push(r.clone());
            }
        }
    }
    order.into_iter().map(|k| groups.remove(&k).unwrap()).collect()
}

fn envs_of(records: &[Record]) -> Vec<Vec<i64>> {
    records.iter().map(|r| r.env().values).collect()
}

/// Shape expressions found so far, with the first failing dimension.
#[derive(Clone, Debug)]
pub struct ShapeFailure {
    pub partial: Vec<Vec<Option<Expr>>>,
    pub dim: (usize, usize),
    pub reason: InferFailure,
}

/// For each output dimension, the first expression in source order that
/// reproduces it on every passing record.
pub fn infer_shape_prop(
    source: &ExprSource,
    passing: &[Record],
    cfg: &InferConfig,
) -> Result<Vec<Vec<Expr>>, ShapeFailure> {
    let Some(first) = passing.first() else {
        return Err(ShapeFailure {
            partial: Vec::new(),
            dim: (0, 0),
            reason: InferFailure::NoPassing,
        });
    };
    let envs = envs_of(passing);
    let n = envs[0].len();
    let mut partial: Vec<Vec<Option<Expr>>> = first.outputs.iter().map(|t| vec![None; t.rank()]).collect();
    let mut failure = None;
    for t in 0..partial.len() {
        for d in 0..partial[t].len() {
            let want: Vec<i64> = passing.iter().map(|r| r.outputs[t].shape[d]).collect();
            let deadline = Instant::now() + cfg.timeout;
            let mut found = None;
            let walked = source.walk(n, cfg.max_ops, Some(deadline), |c| {
                if envs.iter().zip(&want).all(|(e, &w)| c.eval(e) == Some(w)) {
                    found = Some(c.to_expr());
                    true
                } else {
                    false
                }
            });
            match (walked, found) {
                (_, Some(e)) => partial[t][d] = Some(e),
                (Err(TimedOut), None) => {
                    failure.get_or_insert(((t, d), InferFailure::Timeout));
                }
                (Ok(_), None) => {
                    failure.get_or_insert(((t, d), InferFailure::Unsat));
                }
            }
        }
    }
    match failure {
        Some((dim, reason)) => Err(ShapeFailure { partial, dim, reason }),
        None => Ok(partial.into_iter().map(|d| d.into_iter().map(Option::unwrap).collect()).collect()),
    }
}

/// Every candidate predicate satisfied by all passing records: equalities
/// first, then inequalities over at most one operator (with their `+ 1`
/// relaxation). Predicates implied by symbol equalities already collected
/// are skipped (see [`Reducer`]). Collection stops at the deadline; a
/// counter example that satisfies the whole set is a failure.
pub fn collect_predicates(
    source: &ExprSource,
    passing: &[Record],
    counter: &[Record],
    domain: &Domain,
    cfg: &InferConfig,
) -> Result<Vec<Predicate>, InferFailure> {
    if passing.is_empty() {
        return Err(InferFailure::NoPassing);
    }
    let envs = envs_of(passing);
    let n = envs[0].len();
    let deadline = Some(Instant::now() + cfg.timeout);
    let mut preds = Vec::new();
    let mut reducer = Reducer::new(domain);
    let _ = source.walk(n, cfg.constraint_max_ops.min(cfg.max_ops), deadline, |c| {
        if envs.iter().all(|e| c.eval(e) == Some(0)) {
            let p = Predicate::eq(c.to_expr());
            if reducer.admit(&p) {
                preds.push(p);
            }
        }
        false
    });
    let _ = source.walk(n, cfg.max_ops.min(1), deadline, |c| {
        let vals: Option<Vec<i64>> = envs.iter().map(|e| c.eval(e)).collect();
        if let Some(vals) = vals {
            let p = if vals.iter().all(|&v| v > 0) {
                Predicate::lt(c.to_expr())
            } else if vals.iter().all(|&v| v >= 0) {
                Predicate::lt(Predicate::plus_one(c.to_expr()))
            } else {
                return false;
            };
            if reducer.admit(&p) {
                preds.push(p);
            }
        }
        false
    });
    let counter_envs = envs_of(counter);
    let mut open: Vec<usize> = (0..counter_envs.len())
        .filter(|&k| preds.iter().all(|p| p.holds(&counter_envs[k])))
        .collect();
    let base = cfg.constraint_max_ops.min(cfg.max_ops);
    if !open.is_empty() && cfg.max_ops > base {
        let _ = source.walk(n, cfg.max_ops, deadline, |c| {
            if c.ops <= base || !envs.iter().all(|e| c.eval(e) == Some(0)) {
                return false;
            }
            if !open.iter().any(|&k| c.eval(&counter_envs[k]) != Some(0)) {
                return false;
            }
            let p = Predicate::eq(c.to_expr());
            if reducer.admit(&p) {
                open.retain(|&k| p.holds(&counter_envs[k]));
                preds.push(p);
            }
            open.is_empty()
        });
    }
    match open.first() {
        Some(&k) => Err(InferFailure::CounterAccepted(k)),
        None => Ok(preds),
    }
}

/// Constraint inference followed by deduplication. Returns the provenance
/// the constraints should carry.
pub fn infer_input_constraints(
    source: &ExprSource,
    data: &PartialOpData,
    cfg: &InferConfig,
) -> Result<(Vec<Predicate>, Provenance), InferFailure> {
    if data.passing.is_empty() {
        return Err(InferFailure::NoPassing);
    }
    if cfg.empty_shortcut && data.counter.is_empty() {
        return Ok((Vec::new(), Provenance::EmptyConstraints));
    }
    let domain = data.domain();
    let preds = collect_predicates(source, &data.passing, &data.counter, &domain, cfg)?;
    let deadline = Instant::now() + cfg.timeout;
    Ok((deduplicate(&preds, &domain, Some(deadline)), Provenance::Inferred))
}

/// The first rule of the same form that reproduces every passing record and
/// rejects every counter example.
pub fn try_reuse(data: &PartialOpData, rulebook: &[OperatorRule]) -> Option<OperatorRule> {
    rulebook
        .iter()
        .find(|rule| {
            rule.same_form(&data.key, &data.symbols)
                && data.passing.iter().chain(&data.counter).all(|r| rule.agrees_with(r))
        })
        .map(|rule| OperatorRule {
            key: data.key.clone(),
            provenance: Provenance::Reused,
            ..rule.clone()
        })
}

#[derive(Clone, Debug)]
pub struct InferOutcome {
    pub key: PartialOperatorKey,
    pub rule: Result<OperatorRule, InferFailure>,
    /// Per-dimension shape results when shape inference failed.
    pub partial_shape: Option<ShapeFailure>,
    /// The inferred shape function, present even when constraint
    /// inference failed afterwards.
    pub shape_prop: Option<Vec<Vec<Expr>>>,
    pub elapsed: Duration,
}

pub fn infer_rule(source: &ExprSource, data: &PartialOpData, rulebook: &[OperatorRule], cfg: &InferConfig) -> InferOutcome {
    let start = Instant::now();
    let done = |rule: Result<OperatorRule, InferFailure>, partial_shape, shape_prop: Option<Vec<Vec<Expr>>>| InferOutcome {
        key: data.key.clone(),
        shape_prop: shape_prop.or_else(|| rule.as_ref().ok().map(|r| r.shape_prop.clone())),
        rule,
        partial_shape,
        elapsed: start.elapsed(),
    };
    if data.passing.is_empty() {
        return done(Err(InferFailure::NoPassing), None, None);
    }
    if cfg.reuse {
        if let Some(rule) = try_reuse(data, rulebook) {
            return done(Ok(rule), None, None);
        }
    }
    let shape_prop = match infer_shape_prop(source, &data.passing, cfg) {
        Ok(s) => s,
        Err(f) => {
            let reason = f.reason.clone();
            return done(Err(reason), Some(f), None);
        }
    };
    match infer_input_constraints(source, data, cfg) {
        Ok((constraints, provenance)) => done(
            Ok(OperatorRule {
                key: data.key.clone(),
                symbols: data.symbols.clone(),
                constraints,
                shape_prop,
                provenance,
            }),
            None,
            None,
        ),
        Err(e) => done(Err(e), None, Some(shape_prop)),
    }
}

/// Infers every group in order. Each successful rule joins the rulebook
/// consulted by later groups, after the seed rules.
pub fn infer_all(
    source: &ExprSource,
    groups: &[PartialOpData],
    seed_rules: &[OperatorRule],
    cfg: &InferConfig,
) -> Vec<InferOutcome> {
    let mut book = seed_rules.to_vec();
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        let o = infer_rule(source, g, &book, cfg);
        if let Ok(rule) = &o.rule {
            book.push(rule.clone());
        }
        out.push(o);
    }
    out
}
