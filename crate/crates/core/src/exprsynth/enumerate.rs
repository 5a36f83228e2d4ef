//! Bottom-up construction of the pruned hole-template set.
//!
//! Templates are built level by level (one level per operator count) from
//! the survivors of earlier levels. A composite template stores its two
//! children by node id together with the hole relabelling applied to each,
//! so smaller templates are shared by reference rather than copied.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::expr::{BinOp, Expr};
use super::normal::Normalizer;

/// Upper bound on distinct placeholders in a template.
pub const MAX_HOLES: usize = 6;

const HOLE_BASE: u8 = 0;
const CONST_BASE: u8 = 16;
const OP_BASE: u8 = 32;

const FINGERPRINT_POOL: [i64; 8] = [0, 1, 2, 3, 5, 7, 17, 256];
/// Inclusive upper bound of the exhaustive check box, by hole count.
const BOX_LIMIT: [i64; MAX_HOLES + 1] = [0, 64, 24, 10, 7, 5, 4];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarConfig {
    pub max_ops: usize,
    pub constants: Vec<i64>,
    pub ops: Vec<BinOp>,
    pub max_holes: usize,
}

impl Default for GrammarConfig {
    fn default() -> Self {
        GrammarConfig {
            max_ops: 5,
            constants: vec![1, 2],
            ops: BinOp::ALL.to_vec(),
            max_holes: MAX_HOLES,
        }
    }
}

impl GrammarConfig {
    pub fn with_max_ops(max_ops: usize) -> Self {
        GrammarConfig {
            max_ops,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruningConfig {
    pub rarity: bool,
    pub equivalence: bool,
    pub fingerprint_len: usize,
    pub fingerprint_seed: u64,
}

impl Default for PruningConfig {
    fn default() -> Self {
        PruningConfig {
            rarity: true,
            equivalence: true,
            fingerprint_len: 16,
            fingerprint_seed: 0x5eed_f19e,
        }
    }
}

impl PruningConfig {
    pub fn none() -> Self {
        PruningConfig {
            rarity: false,
            equivalence: false,
            ..Default::default()
        }
    }
    pub fn rarity_only() -> Self {
        PruningConfig {
            equivalence: false,
            ..Default::default()
        }
    }
    pub fn equivalence_only() -> Self {
        PruningConfig {
            rarity: false,
            ..Default::default()
        }
    }
}

/// A template expression whose symbol `j` stands for placeholder `j + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HoleExpr {
    pub expr: Arc<Expr>,
    pub holes: u8,
    pub ops: u8,
}

impl HoleExpr {
    pub fn new(expr: Expr) -> HoleExpr {
        let holes = expr.max_symbol().map(|m| m + 1).unwrap_or(0) as u8;
        let ops = expr.op_count() as u8;
        HoleExpr {
            expr: Arc::new(expr),
            holes,
            ops,
        }
    }
}

impl std::fmt::Display for HoleExpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.expr.display_with(|i| format!("□{}", i + 1)))
    }
}

/// Fixed placeholder assignments used to group candidate equivalents.
#[derive(Clone, Debug)]
pub struct Fingerprinter {
    assignments: Vec<[i64; MAX_HOLES]>,
}

impl Fingerprinter {
    pub fn new(len: usize, seed: u64) -> Fingerprinter {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut assignments = Vec::with_capacity(len);
        for k in 0..len {
            let mut a = [0i64; MAX_HOLES];
            match k {
                0 => {}
                1 => a = [1; MAX_HOLES],
                _ => {
                    for v in a.iter_mut() {
                        *v = *FINGERPRINT_POOL.choose(&mut rng).unwrap();
                    }
                }
            }
            assignments.push(a);
        }
        Fingerprinter { assignments }
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn fingerprint(&self, e: &Expr) -> Vec<Option<i64>> {
        self.assignments.iter().map(|a| e.eval(a)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Equivalence {
    Equal,
    Different,
    Unknown,
}

/// Decides equivalence of two templates over non-negative placeholder
/// values: an algebraic proof first, otherwise an exhaustive comparison on
/// a bounded box that either finds a distinguishing point or accepts.
pub fn decide_equivalence(a: &Expr, b: &Expr, holes: usize) -> Equivalence {
    if Normalizer::new().proves_equal(a, b) {
        return Equivalence::Equal;
    }
    if holes > MAX_HOLES {
        return Equivalence::Unknown;
    }
    let pa = a.compile();
    let pb = b.compile();
    let limit = BOX_LIMIT[holes.max(1)];
    let mut point = [0i64; MAX_HOLES];
    loop {
        if pa.eval(&point) != pb.eval(&point) {
            return Equivalence::Different;
        }
        let mut i = 0;
        loop {
            if i == holes {
                return Equivalence::Equal;
            }
            if point[i] < limit {
                point[i] += 1;
                break;
            }
            point[i] = 0;
            i += 1;
        }
    }
}

#[derive(Clone, Debug)]
enum Node {
    Hole,
    Const(u8),
    Bin {
        op: BinOp,
        left: u32,
        right: u32,
        left_map: [u8; MAX_HOLES],
        right_map: [u8; MAX_HOLES],
    },
}

/// The pruned template set, ordered by (operator count, canonical form).
#[derive(Clone, Debug)]
pub struct HoleSet {
    grammar: GrammarConfig,
    pruning: PruningConfig,
    nodes: Vec<Node>,
    tokens: Vec<Vec<u8>>,
    holes: Vec<u8>,
    ops: Vec<u8>,
    levels: Vec<Vec<u32>>,
}

#[derive(Clone, Debug)]
struct Embedding {
    holes: u8,
    left: [u8; MAX_HOLES],
    right: [u8; MAX_HOLES],
}

/// All ways to place the holes of two children into one parent so that the
/// parent's holes are exactly `0..h` and each child keeps its hole order.
fn embeddings(hl: usize, hr: usize, disjoint: bool, max_holes: usize) -> Vec<Embedding> {
    let mut out = Vec::new();
    let lo = if disjoint { hl + hr } else { hl.max(hr) };
    for h in lo..=(hl + hr) {
        if h > max_holes {
            break;
        }
        for lsel in increasing_maps(hl, h) {
            for rsel in increasing_maps(hr, h) {
                let mut covered = vec![false; h];
                for &x in lsel.iter().chain(rsel.iter()) {
                    covered[x as usize] = true;
                }
                if !covered.iter().all(|&c| c) {
                    continue;
                }
                if disjoint && lsel.iter().any(|x| rsel.contains(x)) {
                    continue;
                }
                let mut left = [0u8; MAX_HOLES];
                let mut right = [0u8; MAX_HOLES];
                left[..hl].copy_from_slice(&lsel);
                right[..hr].copy_from_slice(&rsel);
                out.push(Embedding {
                    holes: h as u8,
                    left,
                    right,
                });
            }
        }
    }
    out
}

fn increasing_maps(k: usize, n: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, k: usize, n: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i as u8);
            rec(i + 1, k, n, cur, out);
            cur.pop();
        }
    }
    rec(0, k, n, &mut cur, &mut out);
    out
}

fn relabel(tokens: &[u8], map: &[u8; MAX_HOLES], out: &mut Vec<u8>) {
    out.clear();
    out.extend(tokens.iter().map(|&t| if t < CONST_BASE { map[t as usize] } else { t }));
}

/// Evaluates a postfix byte program; `holes[j]` is the value of hole `j`.
#[inline]
pub(crate) fn eval_tokens(tokens: &[u8], consts: &[i64], holes: &[i64]) -> Option<i64> {
    let mut stack = [0i64; 8];
    let mut sp = 0usize;
    let mut undefined = false;
    for &t in tokens {
        if t < CONST_BASE {
            stack[sp] = holes[t as usize];
            sp += 1;
        } else if t < OP_BASE {
            stack[sp] = consts[(t - CONST_BASE) as usize];
            sp += 1;
        } else {
            sp -= 1;
            match BinOp::from_index(t - OP_BASE).apply(stack[sp - 1], stack[sp]) {
                Some(v) => stack[sp - 1] = v,
                None => {
                    undefined = true;
                    stack[sp - 1] = 0;
                }
            }
        }
    }
    (!undefined).then_some(stack[0])
}

/// Evaluates a postfix program whose hole `j` reads `values[symbols[j]]`.
#[inline]
pub(crate) fn eval_tokens_mapped(
    tokens: &[u8],
    consts: &[i64],
    symbols: &[u16],
    values: &[i64],
) -> Option<i64> {
    let mut stack = [0i64; 8];
    let mut sp = 0usize;
    let mut undefined = false;
    for &t in tokens {
        if t < CONST_BASE {
            stack[sp] = values[symbols[t as usize] as usize];
            sp += 1;
        } else if t < OP_BASE {
            stack[sp] = consts[(t - CONST_BASE) as usize];
            sp += 1;
        } else {
            sp -= 1;
            match BinOp::from_index(t - OP_BASE).apply(stack[sp - 1], stack[sp]) {
                Some(v) => stack[sp - 1] = v,
                None => {
                    undefined = true;
                    stack[sp - 1] = 0;
                }
            }
        }
    }
    (!undefined).then_some(stack[0])
}

fn tokens_to_expr(tokens: &[u8], consts: &[i64]) -> Expr {
    let mut stack: Vec<Expr> = Vec::new();
    for &t in tokens {
        if t < CONST_BASE {
            stack.push(Expr::Sym((t - HOLE_BASE) as u16));
        } else if t < OP_BASE {
            stack.push(Expr::Const(consts[(t - CONST_BASE) as usize]));
        } else {
            let r = stack.pop().unwrap();
            let l = stack.pop().unwrap();
            stack.push(Expr::bin(BinOp::from_index(t - OP_BASE), l, r));
        }
    }
    stack.pop().unwrap()
}

/// Like [`tokens_to_expr`] with hole `j` renamed to `symbols[j]`.
pub(crate) fn tokens_to_expr_mapped(tokens: &[u8], consts: &[i64], symbols: &[u16]) -> Expr {
    tokens_to_expr(tokens, consts).rename(&|j| symbols[j as usize])
}

fn expr_to_tokens(e: &Expr, consts: &[i64], out: &mut Vec<u8>) -> Option<()> {
    match e {
        Expr::Sym(i) => {
            if *i as usize >= MAX_HOLES {
                return None;
            }
            out.push(HOLE_BASE + *i as u8)
        }
        Expr::Const(v) => out.push(CONST_BASE + consts.iter().position(|c| c == v)? as u8),
        Expr::Bin(op, l, r) => {
            expr_to_tokens(l, consts, out)?;
            expr_to_tokens(r, consts, out)?;
            out.push(OP_BASE + op.index());
        }
    }
    Some(())
}

fn canonical_key_le(a: &[u8], b: &[u8]) -> bool {
    (a.len(), a) <= (b.len(), b)
}

fn hash_fingerprint(fp: &[Option<i64>]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    fp.hash(&mut h);
    h.finish()
}

struct Builder<'a> {
    grammar: &'a GrammarConfig,
    pruning: &'a PruningConfig,
    fingerprinter: Fingerprinter,
    set: HoleSet,
    groups: HashMap<(u8, u64), Vec<u32>>,
    node_level: Vec<u8>,
}

impl Builder<'_> {
    fn fingerprint_tokens(&self, tokens: &[u8]) -> Vec<Option<i64>> {
        self.fingerprinter
            .assignments
            .iter()
            .map(|a| eval_tokens(tokens, &self.grammar.constants, a))
            .collect()
    }

    fn push_node(&mut self, node: Node, tokens: Vec<u8>, holes: u8, ops: u8, level: u8) -> u32 {
        let id = self.set.nodes.len() as u32;
        self.set.nodes.push(node);
        self.set.tokens.push(tokens);
        self.set.holes.push(holes);
        self.set.ops.push(ops);
        self.node_level.push(level);
        id
    }

    /// Registers a candidate unless an equivalent survivor already covers it.
    fn offer(&mut self, node: Node, tokens: Vec<u8>, holes: u8, ops: u8, level: u8, fp: &[Option<i64>]) {
        if !self.pruning.equivalence {
            let id = self.push_node(node, tokens, holes, ops, level);
            self.set.levels[level as usize].push(id);
            return;
        }
        let key = (holes, hash_fingerprint(fp));
        if let Some(existing) = self.groups.get(&key) {
            let consts = &self.grammar.constants;
            let mut cand_expr: Option<Expr> = None;
            for &eid in existing {
                let etoks = &self.set.tokens[eid as usize];
                if self.fingerprint_tokens(etoks) != fp {
                    continue;
                }
                let a = cand_expr.get_or_insert_with(|| tokens_to_expr(&tokens, consts));
                let b = tokens_to_expr(etoks, consts);
                if decide_equivalence(a, &b, holes as usize) == Equivalence::Equal {
                    if self.node_level[eid as usize] == level && tokens < *etoks {
                        self.set.nodes[eid as usize] = node;
                        self.set.tokens[eid as usize] = tokens;
                    }
                    return;
                }
            }
        }
        let id = self.push_node(node, tokens, holes, ops, level);
        self.set.levels[level as usize].push(id);
        self.groups.entry(key).or_default().push(id);
    }

    fn build_level(&mut self, n: usize) {
        let consts = self.grammar.constants.clone();
        let ops: Vec<BinOp> = self.grammar.ops.clone();
        let rarity = self.pruning.rarity;
        let filters = self.pruning.equivalence;
        let mut emb_cache: HashMap<(u8, u8), Vec<Embedding>> = HashMap::new();
        let mut ltoks = Vec::new();
        let mut rtoks = Vec::new();
        let fl = self.fingerprinter.len();
        for a in 0..n {
            let b = n - 1 - a;
            let lefts = self.set.levels[a].clone();
            let rights = self.set.levels[b].clone();
            for &lid in &lefts {
                for &rid in &rights {
                    let hl = self.set.holes[lid as usize];
                    let hr = self.set.holes[rid as usize];
                    if rarity && hl == 0 && hr == 0 {
                        continue;
                    }
                    let embs = emb_cache
                        .entry((hl, hr))
                        .or_insert_with(|| {
                            embeddings(hl as usize, hr as usize, rarity, self.grammar.max_holes)
                        })
                        .clone();
                    let lroot = match self.set.nodes[lid as usize] {
                        Node::Bin { op, right, .. } => Some((op, right)),
                        _ => None,
                    };
                    let rroot = match self.set.nodes[rid as usize] {
                        Node::Bin { op, .. } => Some(op),
                        _ => None,
                    };
                    for emb in &embs {
                        relabel(&self.set.tokens[lid as usize], &emb.left, &mut ltoks);
                        relabel(&self.set.tokens[rid as usize], &emb.right, &mut rtoks);
                        let mut lv = Vec::with_capacity(fl);
                        let mut rv = Vec::with_capacity(fl);
                        for asg in &self.fingerprinter.assignments {
                            lv.push(eval_tokens(&ltoks, &consts, asg));
                            rv.push(eval_tokens(&rtoks, &consts, asg));
                        }
                        for &op in &ops {
                            if filters && op.is_commutative() {
                                if rroot == Some(op) {
                                    continue;
                                }
                                let ok = match lroot {
                                    Some((lop, lright)) if lop == op => {
                                        let len = self.set.tokens[lright as usize].len();
                                        let end = ltoks.len() - 1;
                                        canonical_key_le(&ltoks[end - len..end], &rtoks)
                                    }
                                    _ => canonical_key_le(&ltoks, &rtoks),
                                };
                                if !ok {
                                    continue;
                                }
                            }
                            let fp: Vec<Option<i64>> = lv
                                .iter()
                                .zip(&rv)
                                .map(|(x, y)| match (x, y) {
                                    (Some(x), Some(y)) => op.apply(*x, *y),
                                    _ => None,
                                })
                                .collect();
                            let mut tokens = Vec::with_capacity(ltoks.len() + rtoks.len() + 1);
                            tokens.extend_from_slice(&ltoks);
                            tokens.extend_from_slice(&rtoks);
                            tokens.push(OP_BASE + op.index());
                            let node = Node::Bin {
                                op,
                                left: lid,
                                right: rid,
                                left_map: emb.left,
                                right_map: emb.right,
                            };
                            self.offer(node, tokens, emb.holes, n as u8, n as u8, &fp);
                        }
                    }
                }
            }
        }
        let tokens = &self.set.tokens;
        self.set.levels[n].sort_by(|x, y| tokens[*x as usize].cmp(&tokens[*y as usize]));
    }
}

/// Builds the pruned template set bottom-up.
pub fn enumerate_hole_exprs(grammar: &GrammarConfig, pruning: &PruningConfig) -> HoleSet {
    assert!(grammar.max_ops <= 5, "operator bound above 5 is not supported");
    assert!(grammar.max_holes <= MAX_HOLES);
    assert!(grammar.constants.len() <= 16);
    let mut b = Builder {
        grammar,
        pruning,
        fingerprinter: Fingerprinter::new(pruning.fingerprint_len, pruning.fingerprint_seed),
        set: HoleSet {
            grammar: grammar.clone(),
            pruning: pruning.clone(),
            nodes: Vec::new(),
            tokens: Vec::new(),
            holes: Vec::new(),
            ops: Vec::new(),
            levels: vec![Vec::new(); grammar.max_ops + 1],
        },
        groups: HashMap::new(),
        node_level: Vec::new(),
    };
    if grammar.max_holes >= 1 {
        let fp = b.fingerprint_tokens(&[HOLE_BASE]);
        b.offer(Node::Hole, vec![HOLE_BASE], 1, 0, 0, &fp);
    }
    for (k, _) in grammar.constants.iter().enumerate() {
        let t = vec![CONST_BASE + k as u8];
        let fp = b.fingerprint_tokens(&t);
        b.offer(Node::Const(k as u8), t, 0, 0, 0, &fp);
    }
    {
        let tokens = &b.set.tokens;
        b.set.levels[0].sort_by(|x, y| tokens[*x as usize].cmp(&tokens[*y as usize]));
    }
    for n in 1..=grammar.max_ops {
        b.build_level(n);
    }
    b.set
}

impl HoleSet {
    pub fn grammar(&self) -> &GrammarConfig {
        &self.grammar
    }

    pub fn pruning(&self) -> &PruningConfig {
        &self.pruning
    }

    /// Template ids in canonical order.
    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.levels.iter().flat_map(|l| l.iter().copied())
    }

    pub fn ids_up_to_ops(&self, max_ops: usize) -> impl Iterator<Item = u32> + '_ {
        self.levels
            .iter()
            .take(max_ops + 1)
            .flat_map(|l| l.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.len()).collect()
    }

    /// Count of templates with exactly `h` holes.
    pub fn count_with_holes(&self, h: usize) -> usize {
        self.ids().filter(|&i| self.holes[i as usize] as usize == h).count()
    }

    pub fn holes_of(&self, id: u32) -> usize {
        self.holes[id as usize] as usize
    }

    pub fn ops_of(&self, id: u32) -> usize {
        self.ops[id as usize] as usize
    }

    pub(crate) fn tokens_of(&self, id: u32) -> &[u8] {
        &self.tokens[id as usize]
    }

    pub fn constants(&self) -> &[i64] {
        &self.grammar.constants
    }

    pub fn expr_of(&self, id: u32) -> HoleExpr {
        HoleExpr::new(tokens_to_expr(&self.tokens[id as usize], &self.grammar.constants))
    }

    /// Rebuilds the template tree by walking the shared node structure.
    pub fn expr_from_nodes(&self, id: u32) -> Expr {
        match &self.nodes[id as usize] {
            Node::Hole => Expr::Sym(0),
            Node::Const(k) => Expr::Const(self.grammar.constants[*k as usize]),
            Node::Bin {
                op,
                left,
                right,
                left_map,
                right_map,
            } => {
                let l = self.expr_from_nodes(*left);
                let r = self.expr_from_nodes(*right);
                Expr::bin(
                    *op,
                    l.rename(&|i| left_map[i as usize] as u16),
                    r.rename(&|i| right_map[i as usize] as u16),
                )
            }
        }
    }

    /// Child ids of a composite template.
    pub fn children(&self, id: u32) -> Option<(u32, u32)> {
        match self.nodes[id as usize] {
            Node::Bin { left, right, .. } => Some((left, right)),
            _ => None,
        }
    }

    pub fn exprs(&self) -> Vec<HoleExpr> {
        self.ids().map(|i| self.expr_of(i)).collect()
    }

    pub fn eval(&self, id: u32, holes: &[i64]) -> Option<i64> {
        eval_tokens(&self.tokens[id as usize], &self.grammar.constants, holes)
    }

    /// Reassembles a set from templates in canonical order (used by the cache).
    pub(crate) fn from_templates(
        grammar: GrammarConfig,
        pruning: PruningConfig,
        templates: Vec<Vec<u8>>,
    ) -> Result<HoleSet, String> {
        let mut set = HoleSet {
            levels: vec![Vec::new(); grammar.max_ops + 1],
            grammar,
            pruning,
            nodes: Vec::new(),
            tokens: Vec::new(),
            holes: Vec::new(),
            ops: Vec::new(),
        };
        let mut by_tokens: HashMap<Vec<u8>, u32> = HashMap::new();
        for t in templates {
            let ops = t.iter().filter(|&&x| x >= OP_BASE).count();
            if ops > set.grammar.max_ops || t.is_empty() {
                return Err("template exceeds operator bound".into());
            }
            let holes = t
                .iter()
                .filter(|&&x| x < CONST_BASE)
                .map(|&x| x + 1)
                .max()
                .unwrap_or(0);
            let node = if ops == 0 {
                if t[0] < CONST_BASE {
                    Node::Hole
                } else {
                    Node::Const(t[0] - CONST_BASE)
                }
            } else {
                let split = split_postfix(&t).ok_or("malformed template")?;
                let (lt, rt) = (&t[..split], &t[split..t.len() - 1]);
                let (lc, lmap) = compact(lt);
                let (rc, rmap) = compact(rt);
                let left = *by_tokens.get(&lc).ok_or("template child missing")?;
                let right = *by_tokens.get(&rc).ok_or("template child missing")?;
                Node::Bin {
                    op: BinOp::from_index(t[t.len() - 1] - OP_BASE),
                    left,
                    right,
                    left_map: lmap,
                    right_map: rmap,
                }
            };
            let id = set.nodes.len() as u32;
            set.nodes.push(node);
            set.holes.push(holes);
            set.ops.push(ops as u8);
            set.levels[ops].push(id);
            by_tokens.insert(t.clone(), id);
            set.tokens.push(t);
        }
        Ok(set)
    }

    pub(crate) fn raw_tokens(&self) -> impl Iterator<Item = &[u8]> + '_ {
        self.ids().map(|i| self.tokens[i as usize].as_slice())
    }
}

/// Index where the right operand of a postfix binary program starts.
fn split_postfix(t: &[u8]) -> Option<usize> {
    let body = &t[..t.len().checked_sub(1)?];
    let mut need = 1i32;
    for i in (0..body.len()).rev() {
        if body[i] >= OP_BASE {
            need += 1;
        } else {
            need -= 1;
        }
        if need == 0 {
            return Some(i);
        }
    }
    None
}

/// Renumbers holes to `0..h` preserving order; returns the map back.
fn compact(t: &[u8]) -> (Vec<u8>, [u8; MAX_HOLES]) {
    let mut used: Vec<u8> = t.iter().copied().filter(|&x| x < CONST_BASE).collect();
    used.sort_unstable();
    used.dedup();
    let mut map = [0u8; MAX_HOLES];
    for (local, &global) in used.iter().enumerate() {
        map[local] = global;
    }
    let out = t
        .iter()
        .map(|&x| {
            if x < CONST_BASE {
                used.iter().position(|&u| u == x).unwrap() as u8
            } else {
                x
            }
        })
        .collect();
    (out, map)
}

/// Groups by (hole count, fingerprint) and keeps the minimal member of each
/// semantic class (fewest operators, then canonical order).
pub fn prune_equivalence(exprs: &[HoleExpr], pruning: &PruningConfig) -> Vec<HoleExpr> {
    let fpr = Fingerprinter::new(pruning.fingerprint_len, pruning.fingerprint_seed);
    let mut order: Vec<usize> = (0..exprs.len()).collect();
    let key = |e: &HoleExpr| {
        let mut t = Vec::new();
        let ok = expr_to_tokens(&e.expr, &[1, 2], &mut t);
        (e.ops, ok.map(|_| t), e.expr.to_string())
    };
    order.sort_by_key(|&i| key(&exprs[i]));
    let mut groups: HashMap<(u8, Vec<Option<i64>>), Vec<usize>> = HashMap::new();
    let mut kept = Vec::new();
    'outer: for i in order {
        let e = &exprs[i];
        let fp = fpr.fingerprint(&e.expr);
        let g = groups.entry((e.holes, fp)).or_default();
        for &j in g.iter() {
            if decide_equivalence(&e.expr, &exprs[j].expr, e.holes as usize) != Equivalence::Different {
                continue 'outer;
            }
        }
        g.push(i);
        kept.push(i);
    }
    kept.sort_unstable();
    kept.into_iter().map(|i| exprs[i].clone()).collect()
}

/// Lexicographic `k`-combinations of `0..n`.
pub struct Combinations {
    n: usize,
    cur: Vec<u16>,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Combinations {
        Combinations {
            n,
            cur: (0..k as u16).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<u16>;
    fn next(&mut self) -> Option<Vec<u16>> {
        if self.done {
            return None;
        }
        let out = self.cur.clone();
        let k = self.cur.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if (self.cur[i] as usize) < self.n - k + i {
                self.cur[i] += 1;
                for j in i + 1..k {
                    self.cur[j] = self.cur[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Fills each template's holes with every order-preserving choice of
/// distinct symbols: `C(n, h)` expressions per `h`-hole template.
pub fn extend_holes(templates: &[HoleExpr], n_symbols: usize) -> Vec<Expr> {
    let mut out = Vec::new();
    for t in templates {
        let h = t.holes as usize;
        if h == 0 || h > n_symbols {
            continue;
        }
        for combo in Combinations::new(n_symbols, h) {
            out.push(t.expr.rename(&|j| combo[j as usize]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hole_names() -> Vec<String> {
        (1..=6).map(|i| format!("h{i}")).collect()
    }

    fn h(s: &str) -> HoleExpr {
        HoleExpr::new(Expr::parse_named(s, &hole_names()).unwrap())
    }

    fn strings(set: &HoleSet) -> Vec<String> {
        set.exprs().iter().map(|e| e.to_string()).collect()
    }

    #[test]
    fn leaves_only() {
        let set = enumerate_hole_exprs(&GrammarConfig::with_max_ops(0), &PruningConfig::default());
        assert_eq!(strings(&set), vec!["□1", "1", "2"]);
    }

    #[test]
    fn one_operator_level() {
        let set = enumerate_hole_exprs(&GrammarConfig::with_max_ops(1), &PruningConfig::default());
        let s = strings(&set);
        for want in ["□1 + □2", "□1 + 1", "□1 - 1", "□1 / □2", "□2 / □1", "2 - □1"] {
            assert!(s.contains(&want.to_string()), "missing {want}: {s:?}");
        }
        for banned in ["□1 + □1", "1 + 2", "□2 + □1", "1 + □1"] {
            assert!(!s.contains(&banned.to_string()), "unexpected {banned}");
        }
        // x * 1, x / 1, min(x, x) style identities collapse onto their operand
        assert!(!s.contains(&"□1 * 1".to_string()));
        assert!(!s.contains(&"□1 / 1".to_string()));
    }

    #[test]
    fn shared_nodes_rebuild_the_same_trees() {
        let set = enumerate_hole_exprs(&GrammarConfig::with_max_ops(2), &PruningConfig::default());
        for id in set.ids() {
            assert_eq!(set.expr_from_nodes(id), *set.expr_of(id).expr);
        }
    }

    #[test]
    fn equivalence_examples() {
        let p = PruningConfig::default();
        assert_eq!(prune_equivalence(&[h("h1 + h2"), h("h2 + h1")], &p).len(), 1);
        let kept = prune_equivalence(&[h("(h1 + 1) + 1"), h("h1 + 2")], &p);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].to_string(), "□1 + 2");
        assert_eq!(prune_equivalence(&[h("h1 / 2"), h("h1 - 1")], &p).len(), 2);
    }

    #[test]
    fn extension_counts() {
        let t = vec![h("h1 / h2")];
        let ext = extend_holes(&t, 4);
        assert_eq!(ext.len(), 6);
        let names: Vec<String> = (1..=4).map(|i| format!("s{i}")).collect();
        let shown: Vec<String> = ext.iter().map(|e| e.to_string_named(&names)).collect();
        assert!(shown.contains(&"s1 / s2".to_string()));
        assert!(!shown.contains(&"s2 / s1".to_string()));
        assert!(extend_holes(&[h("1")], 4).is_empty());
        assert!(extend_holes(&[h("h1 + h2 - h3")], 2).is_empty());
    }

    #[test]
    fn combinations_are_lexicographic() {
        let c: Vec<Vec<u16>> = Combinations::new(4, 2).collect();
        assert_eq!(c.len(), 6);
        assert_eq!(c[0], vec![0, 1]);
        assert_eq!(c[5], vec![2, 3]);
        assert_eq!(Combinations::new(2, 3).count(), 0);
        assert_eq!(Combinations::new(3, 0).count(), 1);
    }

    #[test]
    fn postfix_split_and_compact() {
        // (h1 + h3) - h2  ->  [0, 2, +, 1, -]
        let t = vec![0, 2, OP_BASE, 1, OP_BASE + 1];
        assert_eq!(split_postfix(&t), Some(3));
        let (c, map) = compact(&t[..3]);
        assert_eq!(c, vec![0, 1, OP_BASE]);
        assert_eq!(&map[..2], &[0, 2]);
    }

    #[test]
    fn enumeration_is_deterministic() {
        let g = GrammarConfig::with_max_ops(2);
        let a = strings(&enumerate_hole_exprs(&g, &PruningConfig::default()));
        let b = strings(&enumerate_hole_exprs(&g, &PruningConfig::default()));
        assert_eq!(a, b);
    }
}
