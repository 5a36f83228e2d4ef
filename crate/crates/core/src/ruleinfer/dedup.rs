//! Predicate deduplication by bounded implication checks.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::time::Instant;

use super::rule::{PredKind, Predicate};
use crate::exprsynth::{BinOp, Expr};

/// Per-symbol inclusive value ranges the implication checks quantify over.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Domain {
    pub ranges: Vec<(i64, i64)>,
}

/// Largest box enumerated for one implication query.
pub const MAX_BOX_POINTS: u64 = 200_000;
/// Largest (points × predicates) budget for a component-level query.
pub const MAX_COMPONENT_WORK: u64 = 20_000_000;

impl Domain {
    /// Shape symbols (the first `n_dims`) range over `[0, hi]`, attribute
    /// symbols over `[min(-4, lo), hi]`, with `hi = max(16, observed + 2)`.
    pub fn from_values<'a>(n_symbols: usize, n_dims: usize, envs: impl Iterator<Item = &'a [i64]>) -> Domain {
        let mut lo = vec![0i64; n_symbols];
        let mut hi = vec![16i64; n_symbols];
        for k in n_dims..n_symbols {
            lo[k] = -4;
        }
        for env in envs {
            for (k, &v) in env.iter().enumerate().take(n_symbols) {
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v + 2);
            }
        }
        Domain {
            ranges: lo.into_iter().zip(hi).collect(),
        }
    }

    /// `[-8, 16]` for every symbol.
    pub fn symmetric(n_symbols: usize) -> Domain {
        Domain {
            ranges: vec![(-8, 16); n_symbols],
        }
    }

    fn points(&self, vars: &[u16]) -> u64 {
        vars.iter()
            .map(|&v| {
                let (lo, hi) = self.ranges[v as usize];
                (hi - lo + 1) as u64
            })
            .try_fold(1u64, |acc, w| acc.checked_mul(w))
            .unwrap_or(u64::MAX)
    }

    pub fn contains(&self, env: &[i64]) -> bool {
        env.iter().zip(&self.ranges).all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

/// Whether every point of the box over `vars` satisfying all of `premises`
/// satisfies `goal`. `premises` may only read symbols in `vars`.
fn implied_on_box(premises: &[&Predicate], goal: &Predicate, vars: &[u16], domain: &Domain) -> bool {
    let n = domain.ranges.len();
    let mut env: Vec<i64> = domain.ranges.iter().map(|r| r.0).collect();
    env.resize(n, 0);
    loop {
        if !goal.holds(&env) && premises.iter().all(|p| p.holds(&env)) {
            return false;
        }
        let mut k = 0;
        loop {
            if k == vars.len() {
                return true;
            }
            let v = vars[k] as usize;
            if env[v] < domain.ranges[v].1 {
                env[v] += 1;
                break;
            }
            env[v] = domain.ranges[v].0;
            k += 1;
        }
    }
}

fn subset(a: &[u16], b: &BTreeSet<u16>) -> bool {
    a.iter().all(|x| b.contains(x))
}

/// Whether `others` imply `goal` on the domain: first from the predicates
/// over the goal's own symbols, then from its connected component.
pub fn implies(others: &[&Predicate], goal: &Predicate, domain: &Domain) -> bool {
    let gv = goal.symbols();
    let own: BTreeSet<u16> = gv.iter().copied().collect();
    if domain.points(&gv) <= MAX_BOX_POINTS {
        let local: Vec<&Predicate> = others.iter().copied().filter(|p| subset(&p.symbols(), &own)).collect();
        if implied_on_box(&local, goal, &gv, domain) {
            return true;
        }
    }
    let mut comp = own.clone();
    loop {
        let before = comp.len();
        for p in others {
            let ps = p.symbols();
            if ps.iter().any(|s| comp.contains(s)) {
                comp.extend(ps);
            }
        }
        if comp.len() == before {
            break;
        }
    }
    if comp.len() == own.len() {
        return false;
    }
    let cv: Vec<u16> = comp.iter().copied().collect();
    let members: Vec<&Predicate> = others.iter().copied().filter(|p| subset(&p.symbols(), &comp)).collect();
    let pts = domain.points(&cv);
    if pts > MAX_BOX_POINTS || pts.saturating_mul(members.len() as u64 + 1) > MAX_COMPONENT_WORK {
        return false;
    }
    implied_on_box(&members, goal, &cv, domain)
}

fn symbol_equality(p: &Predicate) -> Option<(u16, u16)> {
    match (&p.kind, &p.expr) {
        (PredKind::Eq, Expr::Bin(BinOp::Sub, l, r)) => match (&**l, &**r) {
            (Expr::Sym(a), Expr::Sym(b)) if a != b => Some((*a, *b)),
            _ => None,
        },
        _ => None,
    }
}

/// Largest box a [`Reducer`] enumerates for one symbol set.
pub const MAX_LOCAL_POINTS: u64 = 100_000;

/// Points of the box over `vars` that satisfy every kept predicate whose
/// symbols lie in `vars`, as a bitset in mixed-radix order.
struct LocalBox {
    vars: Vec<u16>,
    lo: Vec<i64>,
    size: Vec<u64>,
    sat: Vec<u64>,
}

impl LocalBox {
    fn new<'p>(vars: &[u16], domain: &Domain, premises: impl Iterator<Item = &'p Predicate>, env: &mut [i64]) -> LocalBox {
        let lo: Vec<i64> = vars.iter().map(|&v| domain.ranges[v as usize].0).collect();
        let size: Vec<u64> = vars
            .iter()
            .map(|&v| {
                let (l, h) = domain.ranges[v as usize];
                (h - l + 1) as u64
            })
            .collect();
        let points: u64 = size.iter().product();
        let words = points.div_ceil(64) as usize;
        let mut sat = vec![u64::MAX; words];
        if !points.is_multiple_of(64) {
            sat[words - 1] = (1u64 << (points % 64)) - 1;
        }
        let mut b = LocalBox {
            vars: vars.to_vec(),
            lo,
            size,
            sat,
        };
        for p in premises {
            b.refine(p, env);
        }
        b
    }

    fn decode(&self, mut idx: u64, env: &mut [i64]) {
        for (k, &v) in self.vars.iter().enumerate() {
            env[v as usize] = self.lo[k] + (idx % self.size[k]) as i64;
            idx /= self.size[k];
        }
    }

    fn set_bits(&self) -> impl Iterator<Item = u64> + '_ {
        self.sat.iter().enumerate().flat_map(|(w, &bits)| {
            let mut b = bits;
            std::iter::from_fn(move || {
                if b == 0 {
                    return None;
                }
                let t = b.trailing_zeros() as u64;
                b &= b - 1;
                Some(w as u64 * 64 + t)
            })
        })
    }

    fn refine(&mut self, p: &Predicate, env: &mut [i64]) {
        let idxs: Vec<u64> = self.set_bits().collect();
        for i in idxs {
            self.decode(i, env);
            if !p.holds(env) {
                self.sat[(i / 64) as usize] &= !(1u64 << (i % 64));
            }
        }
    }

    fn implies(&self, p: &Predicate, env: &mut [i64]) -> bool {
        for i in self.set_bits() {
            self.decode(i, env);
            if !p.holds(env) {
                return false;
            }
        }
        true
    }
}

/// Streaming forward pass. Symbol equalities `0 = a - b` are merged; every
/// other predicate is rewritten to the merged symbols and rejected if the
/// rewrite repeats an admitted one or is implied, on the box over its own
/// symbols, by admitted predicates over those symbols. Every rejection is
/// implied by admitted predicates.
pub struct Reducer<'a> {
    domain: &'a Domain,
    parent: Vec<u16>,
    seen: HashSet<Predicate>,
    kept: Vec<Predicate>,
    boxes: HashMap<Vec<u16>, LocalBox>,
    env: Vec<i64>,
}

impl<'a> Reducer<'a> {
    pub fn new(domain: &'a Domain) -> Reducer<'a> {
        let n = domain.ranges.len();
        Reducer {
            domain,
            parent: (0..n as u16).collect(),
            seen: HashSet::new(),
            kept: Vec::new(),
            boxes: HashMap::new(),
            env: domain.ranges.iter().map(|r| r.0).collect(),
        }
    }

    fn root(&self, mut s: u16) -> u16 {
        while self.parent[s as usize] != s {
            s = self.parent[s as usize];
        }
        s
    }

    fn locally_implied(&mut self, p: &Predicate) -> bool {
        let vars = p.symbols();
        if self.domain.points(&vars) > MAX_LOCAL_POINTS {
            return false;
        }
        if !self.boxes.contains_key(&vars) {
            let premises = self.kept.iter().filter(|q| q.symbols().iter().all(|s| vars.contains(s)));
            let b = LocalBox::new(&vars, self.domain, premises, &mut self.env);
            self.boxes.insert(vars.clone(), b);
        }
        self.boxes[&vars].implies(p, &mut self.env)
    }

    /// Whether `p` should be kept.
    pub fn admit(&mut self, p: &Predicate) -> bool {
        if let Some((a, b)) = symbol_equality(p) {
            let (ra, rb) = (self.root(a), self.root(b));
            if ra != rb {
                self.parent[ra.max(rb) as usize] = ra.min(rb);
                return true;
            }
        }
        let renamed = Predicate {
            kind: p.kind,
            expr: p.expr.rename(&|s| self.root(s)),
        };
        if self.seen.contains(&renamed) || self.locally_implied(&renamed) {
            return false;
        }
        let vars = renamed.symbols();
        for b in self.boxes.values_mut() {
            if vars.iter().all(|v| b.vars.contains(v)) {
                b.refine(&renamed, &mut self.env);
            }
        }
        self.seen.insert(renamed.clone());
        self.kept.push(renamed);
        true
    }
}

/// [`Reducer`] over a finished list, in order.
pub fn reduce_by_equalities(preds: &[Predicate], domain: &Domain) -> Vec<Predicate> {
    let mut r = Reducer::new(domain);
    preds.iter().filter(|p| r.admit(p)).cloned().collect()
}

/// Removes predicates implied by the rest, scanning from the most recently
/// added, until a pass changes nothing. Past the deadline the remaining
/// predicates are kept. A [`reduce_by_equalities`] pass runs first.
pub fn deduplicate(preds: &[Predicate], domain: &Domain, deadline: Option<Instant>) -> Vec<Predicate> {
    let mut cur: Vec<Predicate> = Vec::new();
    let mut uniq = HashSet::new();
    for p in preds {
        if uniq.insert(p) {
            cur.push(p.clone());
        }
    }
    loop {
        let before = cur.len();
        cur = reduce_by_equalities(&cur, domain);
        cur = remove_implied(cur, domain, deadline);
        if cur.len() == before || deadline.is_some_and(|d| Instant::now() >= d) {
            return cur;
        }
    }
}

/// The reverse-order implication sweep, repeated until nothing changes.
fn remove_implied(mut cur: Vec<Predicate>, domain: &Domain, deadline: Option<Instant>) -> Vec<Predicate> {
    loop {
        let mut changed = false;
        let mut idx = cur.len();
        while idx > 0 {
            idx -= 1;
            if deadline.is_some_and(|d| Instant::now() >= d) {
                return cur;
            }
            let others: Vec<&Predicate> = cur.iter().enumerate().filter(|(k, _)| *k != idx).map(|(_, p)| p).collect();
            if implies(&others, &cur[idx], domain) {
                cur.remove(idx);
                changed = true;
            }
        }
        if !changed {
            return cur;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    fn p(s: &str) -> Predicate {
        Predicate::parse_named(s, &names()).unwrap()
    }

    fn show(ps: &[Predicate]) -> Vec<String> {
        ps.iter().map(|x| x.to_string_named(&names())).collect()
    }

    #[test]
    fn worked_sets() {
        let d = Domain::symmetric(2);
        assert_eq!(show(&deduplicate(&[p("0 < a"), p("0 < a + 1")], &d, None)), vec!["0 < a"]);
        assert_eq!(show(&deduplicate(&[p("0 < a"), p("0 < b")], &d, None)), vec!["0 < a", "0 < b"]);
        assert_eq!(
            show(&deduplicate(&[p("0 = a - b"), p("0 < a - b + 1"), p("0 < b - a + 1")], &d, None)),
            vec!["0 = a - b"]
        );
    }

    #[test]
    fn brute_force_equivalence_on_small_box() {
        // independent check over a, b in 0..=8
        let set = vec![p("0 = a - b"), p("0 < a - b + 1"), p("0 < b - a + 1"), p("0 < a + 1"), p("0 < a * 2 + 1")];
        let d = Domain {
            ranges: vec![(0, 8), (0, 8)],
        };
        let out = deduplicate(&set, &d, None);
        for a in 0..=8 {
            for b in 0..=8 {
                let env = [a, b];
                assert_eq!(set.iter().all(|x| x.holds(&env)), out.iter().all(|x| x.holds(&env)));
            }
        }
        assert_eq!(deduplicate(&out, &d, None), out);
    }

    #[test]
    fn tautologies_vanish() {
        let d = Domain {
            ranges: vec![(0, 16), (0, 16)],
        };
        let taut = Predicate::eq(Expr::sym(0).rem(Expr::lit(1)));
        assert!(deduplicate(&[taut, p("0 < b")], &d, None) == vec![p("0 < b")]);
    }

    #[test]
    fn component_level_implication() {
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let q = |s: &str| Predicate::parse_named(s, &names).unwrap();
        let d = Domain::symmetric(3);
        // a < b and b < c imply a < c only through b
        let out = deduplicate(&[q("0 < c - a"), q("0 < b - a"), q("0 < c - b")], &d, None);
        assert_eq!(out.len(), 2);
    }
}
