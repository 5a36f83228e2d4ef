//! Concolic graph generation: operators are inserted from rules (solved
//! attributes, propagated shapes) or copied from records, and every value
//! stays concretely typed.

mod solve;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exprsynth::{BinOp, Expr};
use crate::graphir::{Binding, Graph, NewInstruction, ValueId};
use crate::ruleinfer::{key_of, OperatorRule, Predicate};
use crate::tensor::{DType, TensorType};
use crate::trace::{Record, SymbolEnv};

pub use solve::{solve, SolveBudget, SolveRequest, SolveResult};

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub target_op_count: usize,
    /// Probability of a rule-based insertion when records are also usable.
    pub symbolic_prob: f64,
    /// Probability of picking an inferred rule when manual rules also exist.
    pub inferred_prob: f64,
    pub forward_prob: f64,
    pub seed: u64,
    /// Range for dimensions of new placeholders.
    pub dim_bounds: (i64, i64),
    pub attr_bounds: (i64, i64),
    /// Lower attribute bound for attributes observed negative in records.
    pub negative_attr_lo: i64,
    /// Failed insertions allowed per requested operator.
    pub max_retries: usize,
    pub max_tuples: usize,
    /// Values with more elements are not created.
    pub max_numel: i64,
    pub solve: SolveBudget,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            target_op_count: 5,
            symbolic_prob: 0.5,
            inferred_prob: 0.5,
            forward_prob: 0.5,
            seed: 0,
            dim_bounds: (1, 9),
            attr_bounds: (0, 16),
            negative_attr_lo: -4,
            max_retries: 16,
            max_tuples: 64,
            max_numel: 4096,
            solve: SolveBudget::default(),
        }
    }
}

/// Records by the type at one of their input (or output) slots.
#[derive(Clone, Debug, Default)]
pub struct TypeIndex {
    map: BTreeMap<TensorType, Vec<(usize, usize)>>,
}

impl TypeIndex {
    pub fn of_inputs(records: &[Record]) -> TypeIndex {
        Self::build(records, |r| &r.inputs)
    }

    pub fn of_outputs(records: &[Record]) -> TypeIndex {
        Self::build(records, |r| &r.outputs)
    }

    fn build(records: &[Record], side: impl Fn(&Record) -> &Vec<TensorType>) -> TypeIndex {
        let mut map: BTreeMap<TensorType, Vec<(usize, usize)>> = BTreeMap::new();
        for (id, r) in records.iter().enumerate() {
            for (slot, t) in side(r).iter().enumerate() {
                map.entry(t.clone()).or_default().push((id, slot));
            }
        }
        TypeIndex { map }
    }

    /// `(record id, slot)` pairs whose slot has type `t`.
    pub fn lookup(&self, t: &TensorType) -> &[(usize, usize)] {
        self.map.get(t).map_or(&[], |v| v.as_slice())
    }
}

/// A rule plus what generation needs beyond it: a template record for
/// non-symbolic attributes, observed dtype transfers, and attribute bounds.
#[derive(Clone, Debug)]
pub struct RuleEntry {
    pub rule: OperatorRule,
    pub template: Record,
    pub transfers: Vec<(Vec<DType>, Vec<DType>)>,
    pub n_dims: usize,
    pub negative: Vec<bool>,
}

impl RuleEntry {
    fn out_dtypes(&self, ins: &[DType]) -> Option<&[DType]> {
        self.transfers.iter().find(|(i, _)| i == ins).map(|(_, o)| o.as_slice())
    }
}

/// Immutable generator inputs shared by every test case.
pub struct GenContext {
    pub inferred: Vec<RuleEntry>,
    pub manual: Vec<RuleEntry>,
    pub records: Vec<Record>,
    pub index: TypeIndex,
    pub out_index: TypeIndex,
}

fn entries(rules: &[OperatorRule], by_key: &BTreeMap<String, Vec<&Record>>) -> Vec<RuleEntry> {
    let mut out = Vec::new();
    for rule in rules {
        let Some(rs) = by_key.get(&rule.key.id()) else {
            continue;
        };
        let mut transfers: Vec<(Vec<DType>, Vec<DType>)> = Vec::new();
        for r in rs {
            let t = (
                r.inputs.iter().map(|t| t.dtype).collect(),
                r.outputs.iter().map(|t| t.dtype).collect(),
            );
            if !transfers.contains(&t) {
                transfers.push(t);
            }
        }
        let n_dims = rule.key.inputs.iter().map(|(r, _)| r).sum();
        let mut negative = vec![false; rule.symbols.len()];
        for r in rs {
            for (k, v) in r.env().values.iter().enumerate() {
                negative[k] |= *v < 0;
            }
        }
        out.push(RuleEntry {
            rule: rule.clone(),
            template: rs[0].clone(),
            transfers,
            n_dims,
            negative,
        });
    }
    out
}

impl GenContext {
    /// Only valid records are used. Rules without a valid record of their
    /// key are dropped (their dtype behaviour is unknown).
    pub fn new(inferred: &[OperatorRule], manual: &[OperatorRule], records: &[Record]) -> GenContext {
        let records: Vec<Record> = records.iter().filter(|r| r.valid).cloned().collect();
        let mut by_key: BTreeMap<String, Vec<&Record>> = BTreeMap::new();
        for r in &records {
            by_key.entry(key_of(r).id()).or_default().push(r);
        }
        GenContext {
            inferred: entries(inferred, &by_key),
            manual: entries(manual, &by_key),
            index: TypeIndex::of_inputs(&records),
            out_index: TypeIndex::of_outputs(&records),
            records,
        }
    }

    /// The rule with this key id, inferred rules first.
    pub fn rule_by_id(&self, id: &str) -> Option<&RuleEntry> {
        self.inferred.iter().chain(&self.manual).find(|e| e.rule.key.id() == id)
    }
}

#[derive(Clone, Debug, Default)]
pub struct GenStats {
    pub solve_time: Duration,
    pub solver_calls: usize,
    pub failed_insertions: usize,
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub graph: Graph,
    /// False when the retry budget ran out before the target size.
    pub complete: bool,
    pub stats: GenStats,
}

struct Gen<'a> {
    ctx: &'a GenContext,
    cfg: &'a GenConfig,
    rng: ChaCha8Rng,
    graph: Graph,
    stats: GenStats,
}

fn shape_ok(shape: &[i64], max_numel: i64) -> bool {
    let mut n: i64 = 1;
    for &d in shape {
        if d < 1 {
            return false;
        }
        n = match n.checked_mul(d) {
            Some(v) if v <= max_numel => v,
            _ => return false,
        };
    }
    true
}

impl Gen<'_> {
    fn values_newest_first(&self) -> Vec<ValueId> {
        let mut v: Vec<ValueId> = self.graph.value_ids().collect();
        v.reverse();
        v
    }

    fn placeholders(&self) -> Vec<ValueId> {
        self.graph.inputs.clone()
    }

    fn solve(&mut self, preds: &[Predicate], fixed: Vec<Option<i64>>, bounds: Vec<(i64, i64)>) -> Option<Vec<i64>> {
        let t = Instant::now();
        let req = SolveRequest {
            predicates: preds,
            fixed,
            bounds,
            budget: self.cfg.solve,
        };
        let r = solve(&req, &mut self.rng).ok();
        self.stats.solve_time += t.elapsed();
        self.stats.solver_calls += 1;
        r
    }

    fn attr_bounds(&self, e: &RuleEntry) -> Vec<(i64, i64)> {
        (0..e.rule.symbols.len())
            .map(|k| {
                if k < e.n_dims {
                    self.cfg.dim_bounds
                } else if e.negative[k] {
                    (self.cfg.negative_attr_lo.min(self.cfg.attr_bounds.0), self.cfg.attr_bounds.1)
                } else {
                    self.cfg.attr_bounds
                }
            })
            .collect()
    }

    fn instantiate(&self, e: &RuleEntry, env: &[i64]) -> Record {
        SymbolEnv {
            names: e.rule.symbols.clone(),
            values: env.to_vec(),
        }
        .apply_to(&e.template)
    }

    fn pick_rule(&mut self) -> Option<&'_ RuleEntry> {
        let ctx = self.ctx;
        let pool = match (ctx.inferred.is_empty(), ctx.manual.is_empty()) {
            (true, true) => return None,
            (false, true) => &ctx.inferred,
            (true, false) => &ctx.manual,
            (false, false) => {
                if self.rng.gen_bool(self.cfg.inferred_prob) {
                    &ctx.inferred
                } else {
                    &ctx.manual
                }
            }
        };
        pool.choose(&mut self.rng)
    }

    /// Tuples of values matching each operand's rank and dtype class,
    /// newest-first per slot, lexicographic, capped.
    fn tuples(&self, e: &RuleEntry) -> Vec<Vec<ValueId>> {
        let values = self.values_newest_first();
        let slots: Vec<Vec<ValueId>> = e
            .rule
            .key
            .inputs
            .iter()
            .map(|&(rank, class)| {
                values
                    .iter()
                    .copied()
                    .filter(|v| {
                        let t = self.graph.ty(*v).unwrap();
                        t.rank() == rank && t.dtype.class() == class
                    })
                    .collect()
            })
            .collect();
        let mut out = Vec::new();
        if slots.iter().any(|s| s.is_empty()) {
            return out;
        }
        let mut idx = vec![0usize; slots.len()];
        loop {
            out.push(idx.iter().zip(&slots).map(|(&i, s)| s[i]).collect());
            if out.len() >= self.cfg.max_tuples {
                return out;
            }
            let mut k = slots.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < slots[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    fn insert_symbolic_forward(&mut self, e: &RuleEntry) -> bool {
        for tuple in self.tuples(e) {
            let types: Vec<TensorType> = tuple.iter().map(|v| self.graph.ty(*v).unwrap().clone()).collect();
            let dtypes: Vec<DType> = types.iter().map(|t| t.dtype).collect();
            let Some(out_dtypes) = e.out_dtypes(&dtypes).map(|d| d.to_vec()) else {
                continue;
            };
            let mut fixed: Vec<Option<i64>> = types.iter().flat_map(|t| t.shape.iter().map(|&d| Some(d))).collect();
            fixed.resize(e.rule.symbols.len(), None);
            let bounds = self.attr_bounds(e);
            let Some(env) = self.solve(&e.rule.constraints, fixed, bounds) else {
                continue;
            };
            let Some(shapes) = e.rule.propagate(&env) else {
                continue;
            };
            if !shapes.iter().all(|s| shape_ok(s, self.cfg.max_numel)) {
                continue;
            }
            let rec = self.instantiate(e, &env);
            let api = e.rule.key.api.clone();
            let inst = NewInstruction {
                in_place: api.ends_with('_'),
                api,
                attrs: rec.attrs,
                operands: tuple,
                result_types: shapes.into_iter().zip(out_dtypes).map(|(s, d)| TensorType::new(d, s)).collect(),
                binding: Binding::Symbolic(e.rule.key.id()),
            };
            if self.graph.push(inst).is_ok() {
                return true;
            }
        }
        false
    }

    fn insert_symbolic_backward(&mut self, e: &RuleEntry) -> bool {
        let mut holders = self.placeholders();
        holders.shuffle(&mut self.rng);
        for p in holders {
            let target = self.graph.ty(p).unwrap().clone();
            for (j, &rank) in e.rule.key.outputs.iter().enumerate() {
                if rank != target.rank() {
                    continue;
                }
                let Some((in_dtypes, out_dtypes)) = e
                    .transfers
                    .iter()
                    .find(|(_, o)| o[j] == target.dtype)
                    .cloned()
                else {
                    continue;
                };
                let mut preds = e.rule.constraints.clone();
                for (d, expr) in e.rule.shape_prop[j].iter().enumerate() {
                    preds.push(Predicate::eq(Expr::bin(BinOp::Sub, expr.clone(), Expr::Const(target.shape[d]))));
                }
                let bounds = self.attr_bounds(e);
                let Some(env) = self.solve(&preds, vec![None; e.rule.symbols.len()], bounds) else {
                    continue;
                };
                let Some(shapes) = e.rule.propagate(&env) else {
                    continue;
                };
                if shapes[j] != target.shape || !shapes.iter().all(|s| shape_ok(s, self.cfg.max_numel)) {
                    continue;
                }
                let rec = self.instantiate(e, &env);
                if !rec.inputs.iter().all(|t| shape_ok(&t.shape, self.cfg.max_numel)) {
                    continue;
                }
                let api = e.rule.key.api.clone();
                let result_types = shapes.into_iter().zip(out_dtypes).map(|(s, d)| TensorType::new(d, s)).collect();
                let in_types = rec.inputs.iter().zip(&in_dtypes).map(|(t, &d)| TensorType::new(d, t.shape.clone())).collect();
                if self.produce(p, j, api, rec.attrs, in_types, result_types, Binding::Symbolic(e.rule.key.id())) {
                    return true;
                }
            }
        }
        false
    }

    /// Replaces placeholder `p` with result `j` of a new first instruction
    /// whose operands are fresh placeholders.
    #[allow(clippy::too_many_arguments)]
    fn produce(
        &mut self,
        p: ValueId,
        j: usize,
        api: String,
        attrs: crate::trace::Attrs,
        in_types: Vec<TensorType>,
        result_types: Vec<TensorType>,
        binding: Binding,
    ) -> bool {
        let before = self.graph.clone();
        let operands: Vec<ValueId> = in_types.into_iter().map(|t| self.graph.add_input(t)).collect();
        let inst = NewInstruction {
            in_place: api.ends_with('_'),
            api,
            attrs,
            operands,
            result_types,
            binding,
        };
        let ok = self
            .graph
            .insert(inst, 0)
            .and_then(|res| self.graph.replace_alluse(p, res[j]))
            .and_then(|_| self.graph.remove_input(p));
        if ok.is_err() {
            self.graph = before;
            return false;
        }
        true
    }

    fn insert_concrete_forward(&mut self) -> bool {
        let values = self.values_newest_first();
        let mut cands: Vec<usize> = Vec::new();
        for v in &values {
            for &(id, _) in self.ctx.index.lookup(self.graph.ty(*v).unwrap()) {
                if !cands.contains(&id) {
                    cands.push(id);
                }
            }
        }
        cands.shuffle(&mut self.rng);
        for id in cands.into_iter().take(self.cfg.max_tuples) {
            let r = &self.ctx.records[id];
            let mut operands = Vec::new();
            for t in &r.inputs {
                let matching: Vec<ValueId> = values.iter().copied().filter(|v| self.graph.ty(*v) == Some(t)).collect();
                match matching.choose(&mut self.rng) {
                    Some(&v) => operands.push(v),
                    None => break,
                }
            }
            if operands.len() != r.inputs.len() {
                continue;
            }
            let inst = NewInstruction {
                api: r.api.clone(),
                attrs: r.attrs.clone(),
                operands,
                result_types: r.outputs.clone(),
                in_place: r.api.ends_with('_'),
                binding: Binding::Concrete(id as u64),
            };
            if self.graph.push(inst).is_ok() {
                return true;
            }
        }
        false
    }

    fn insert_concrete_backward(&mut self) -> bool {
        let mut holders = self.placeholders();
        holders.shuffle(&mut self.rng);
        for p in holders {
            let t = self.graph.ty(p).unwrap().clone();
            let mut cands = self.ctx.out_index.lookup(&t).to_vec();
            cands.shuffle(&mut self.rng);
            for (id, j) in cands.into_iter().take(self.cfg.max_tuples) {
                let r = &self.ctx.records[id];
                if self.produce(
                    p,
                    j,
                    r.api.clone(),
                    r.attrs.clone(),
                    r.inputs.clone(),
                    r.outputs.clone(),
                    Binding::Concrete(id as u64),
                ) {
                    return true;
                }
            }
        }
        false
    }

    fn seed_placeholder(&mut self) -> bool {
        let ctx = self.ctx;
        let from_records = !ctx.records.is_empty();
        let t = if from_records {
            let r = ctx.records.choose(&mut self.rng).unwrap();
            match r.inputs.choose(&mut self.rng) {
                Some(t) => t.clone(),
                None => return false,
            }
        } else {
            return false;
        };
        self.graph.add_input(t);
        true
    }

    fn step(&mut self) -> bool {
        let has_rules = !self.ctx.inferred.is_empty() || !self.ctx.manual.is_empty();
        let has_records = !self.ctx.records.is_empty();
        let symbolic = match (has_rules, has_records) {
            (true, true) => self.rng.gen_bool(self.cfg.symbolic_prob),
            (r, _) => r,
        };
        let forward = self.rng.gen_bool(self.cfg.forward_prob);
        if symbolic {
            let Some(e) = self.pick_rule().cloned() else {
                return false;
            };
            if forward {
                self.insert_symbolic_forward(&e)
            } else {
                self.insert_symbolic_backward(&e)
            }
        } else if forward {
            self.insert_concrete_forward()
        } else {
            self.insert_concrete_backward()
        }
    }
}

/// Builds one graph. Outputs are the values without uses.
pub fn generate(ctx: &GenContext, cfg: &GenConfig) -> Generated {
    let mut g = Gen {
        ctx,
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        graph: Graph::new(),
        stats: GenStats::default(),
    };
    if !g.seed_placeholder() {
        return Generated {
            graph: g.graph,
            complete: false,
            stats: g.stats,
        };
    }
    let budget = cfg.target_op_count * cfg.max_retries.max(1);
    let mut tries = 0;
    while g.graph.len() < cfg.target_op_count && tries < budget {
        if !g.step() {
            g.stats.failed_insertions += 1;
        }
        tries += 1;
    }
    g.graph.set_outputs_to_unused();
    Generated {
        complete: g.graph.len() >= cfg.target_op_count,
        graph: g.graph,
        stats: g.stats,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opref::{execute_eager, Category, Library};
    use crate::ruleinfer::{group_records, manual_rule};
    use crate::tensor::Tensor;
    use crate::trace::collect_seeds;

    fn fixture() -> (Library, Vec<Record>, Vec<OperatorRule>) {
        let lib = Library::new();
        let records: Vec<Record> = collect_seeds(&lib, 6, 3)
            .records
            .into_iter()
            .filter(|r| lib.get(&r.api).is_some_and(|o| o.category == Category::Standard))
            .collect();
        let manual = group_records(&records)
            .iter()
            .filter_map(|g| manual_rule(&lib, &g.passing[0]).map(|r| r.unwrap()))
            .collect();
        (lib, records, manual)
    }

    fn cfg(seed: u64) -> GenConfig {
        GenConfig {
            seed,
            ..GenConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let (_, records, manual) = fixture();
        let ctx = GenContext::new(&[], &manual, &records);
        for seed in 0..20 {
            assert_eq!(generate(&ctx, &cfg(seed)).graph, generate(&ctx, &cfg(seed)).graph);
        }
        assert_ne!(generate(&ctx, &cfg(1)).graph, generate(&ctx, &cfg(2)).graph);
    }

    #[test]
    fn graphs_are_concrete_and_well_typed() {
        let (lib, records, manual) = fixture();
        let ctx = GenContext::new(&[], &manual, &records);
        let mut valid = 0;
        for seed in 0..300 {
            let g = generate(&ctx, &cfg(seed)).graph;
            g.check().unwrap();
            assert!(!g.outputs.is_empty());
            for inst in &g.instructions {
                let ins: Vec<TensorType> = inst.operands.iter().map(|v| g.ty(*v).unwrap().clone()).collect();
                let outs: Vec<TensorType> = inst.results.iter().map(|v| g.ty(*v).unwrap().clone()).collect();
                assert!(outs.iter().all(|t| t.shape.iter().all(|&d| d >= 0)));
                // ground-truth rules agree with the library's own type inference
                if matches!(inst.binding, Binding::Symbolic(_)) {
                    assert_eq!(lib.infer_types(&inst.api, &ins, &inst.attrs).unwrap(), outs, "{g}");
                }
            }
            let inputs: Vec<Tensor> = g.input_types().into_iter().map(Tensor::zeros).collect();
            valid += execute_eager(&lib, &g, &inputs).is_ok() as usize;
        }
        assert!(valid >= 297, "{valid}");
    }

    #[test]
    fn record_only_and_rule_only() {
        let (_, records, manual) = fixture();
        let concrete = GenContext::new(&[], &[], &records);
        let g = generate(&concrete, &cfg(4)).graph;
        assert!(g.instructions.iter().all(|i| matches!(i.binding, Binding::Concrete(_))));
        let symbolic = GenConfig {
            symbolic_prob: 1.0,
            ..cfg(4)
        };
        let g = generate(&GenContext::new(&[], &manual, &records), &symbolic).graph;
        assert!(g.instructions.iter().all(|i| matches!(i.binding, Binding::Symbolic(_))));
        let empty = GenContext::new(&[], &[], &[]);
        let out = generate(&empty, &cfg(0));
        assert!(!out.complete && out.graph.is_empty());
    }

    #[test]
    fn forward_and_backward_insertion() {
        let (_, records, manual) = fixture();
        let relu: Vec<OperatorRule> = manual.iter().filter(|r| r.key.api == "relu").cloned().collect();
        assert!(!relu.is_empty());
        let ctx = GenContext::new(&[], &relu, &records);
        let e = ctx.manual[0].clone();
        let mut g = Gen {
            ctx: &ctx,
            cfg: &cfg(0),
            rng: ChaCha8Rng::seed_from_u64(0),
            graph: Graph::new(),
            stats: GenStats::default(),
        };
        let x = g.graph.add_input(e.template.inputs[0].clone());
        assert!(g.insert_symbolic_forward(&e));
        assert_eq!(g.graph.instructions[0].operands, vec![x]);
        assert_eq!(g.graph.ty(g.graph.instructions[0].results[0]), g.graph.ty(x));
        // backward: the placeholder is replaced by a new first instruction
        assert!(g.insert_symbolic_backward(&e));
        g.graph.check().unwrap();
        assert_eq!(g.graph.len(), 2);
        assert!(!g.graph.inputs.contains(&x));
        assert_eq!(g.graph.instructions[1].operands, vec![g.graph.instructions[0].results[0]]);
    }
}
