//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::Pipeline;
use rulefuzz::exprsynth::counts::{extended_count, PruningRow};
use rulefuzz::exprsynth::{enumerate_hole_exprs, GrammarConfig, PruningConfig};
use rulefuzz::fuzz::{payloads, run_campaign, CampaignConfig, CampaignReport};
use rulefuzz::generate::{generate, GenConfig, GenContext};
use rulefuzz::graphir::Binding;
use rulefuzz::opref::{execute_eager, BugPlan, BuiltinBackend, Category, ExecError};
use rulefuzz::ruleinfer::{collect_predicates, deduplicate, Domain, OperatorRule, PartialOpData, Predicate, Provenance};
use rulefuzz::trace::SymbolEnv;

struct Line {
    id: &'static str,
    pass: bool,
    text: String,
}

impl Line {
    fn print(&self) {
        println!("{} {} {}", self.id, if self.pass { "PASS" } else { "FAIL" }, self.text);
    }
}

/// Calls `leaf` on every environment with dims in 1..=9 and attributes in
/// 0..=4 that satisfies `preds`. Predicates are checked as soon as their
/// highest symbol is bound.
fn for_each_env(n: usize, n_dims: usize, preds: &[Predicate], leaf: &mut dyn FnMut(&[i64])) {
    let mut ready: Vec<Vec<&Predicate>> = vec![Vec::new(); n];
    for p in preds {
        match p.symbols().last() {
            Some(&s) => ready[s as usize].push(p),
            None if !p.holds(&[]) => return,
            None => {}
        }
    }
    fn rec(k: usize, n_dims: usize, env: &mut Vec<i64>, ready: &[Vec<&Predicate>], leaf: &mut dyn FnMut(&[i64])) {
        if k == env.len() {
            leaf(env);
            return;
        }
        let (lo, hi) = if k < n_dims { (1, 9) } else { (0, 4) };
        for v in lo..=hi {
            env[k] = v;
            if ready[k].iter().all(|p| p.holds(env)) {
                rec(k + 1, n_dims, env, ready, leaf);
            }
        }
    }
    let mut env = vec![0; n];
    rec(0, n_dims, &mut env, &ready, leaf);
}

#[derive(Default)]
struct ShapeCheck {
    envs: usize,
    wrong: usize,
    /// Accepted by the catalog rule but rejected by the library.
    manual_unsound: usize,
}

/// Compares `shape` against the library's type inference on every valid
/// environment of the exhaustive domain.
fn check_shape(p: &Pipeline, g: &PartialOpData, manual: &OperatorRule, shape: &[Vec<rulefuzz::exprsynth::Expr>]) -> ShapeCheck {
    let mut c = ShapeCheck::default();
    let template = &g.passing[0];
    for_each_env(g.symbols.len(), g.n_dims(), &manual.constraints, &mut |env| {
        let r = SymbolEnv {
            names: g.symbols.clone(),
            values: env.to_vec(),
        }
        .apply_to(template);
        let Ok(outs) = p.lib.infer_types(&r.api, &r.inputs, &r.attrs) else {
            c.manual_unsound += 1;
            return;
        };
        c.envs += 1;
        let ok = outs.len() == shape.len()
            && outs.iter().zip(shape).all(|(t, dims)| {
                t.shape.len() == dims.len() && t.shape.iter().zip(dims).all(|(&d, e)| e.eval(env) == Some(d))
            });
        c.wrong += !ok as usize;
    });
    c
}

struct Ac1 {
    line: Line,
    /// Key ids whose inferred rule matches ground truth.
    matching: HashSet<String>,
}

fn ac1(p: &Pipeline) -> Ac1 {
    let apis: BTreeSet<&str> = p.groups.iter().map(|g| g.key.api.as_str()).collect();
    let mut recovered = 0;
    let mut shape_only = 0;
    let mut unsound = 0;
    let mut envs = 0;
    let mut misses = Vec::new();
    let mut matching = HashSet::new();
    for (g, o) in p.groups.iter().zip(&p.outcomes) {
        let manual = rulefuzz::ruleinfer::manual_rule(&p.lib, &g.passing[0])
            .expect("every reference operator has a catalog rule")
            .expect("catalog rule parses");
        let Some(shape) = &o.shape_prop else {
            misses.push(format!("{}:{}", g.key.api, o.rule.as_ref().err().map_or("?".into(), |e| e.to_string())));
            continue;
        };
        let c = check_shape(p, g, &manual, shape);
        envs += c.envs;
        unsound += c.manual_unsound;
        if c.wrong > 0 {
            misses.push(format!("{}:{}/{} envs wrong", g.key.api, c.wrong, c.envs));
            continue;
        }
        match &o.rule {
            Ok(_) => {
                recovered += 1;
                matching.insert(g.key.id());
            }
            Err(e) => {
                shape_only += 1;
                misses.push(format!("{}:{e}", g.key.api));
            }
        }
    }
    let n = p.groups.len();
    let rate = recovered as f64 / n as f64;
    let limit = Duration::from_secs(300);
    let pass = apis.len() >= 18 && n >= 40 && rate >= 0.9 && p.elapsed < limit && unsound == 0;
    let text = format!(
        "rule recovery {recovered}/{n} partial operators ({:.1}%, need >= 90%) from {} operators; \
         {shape_only} more with correct shape but no constraints; {envs} envs checked, {unsound} catalog-unsound; \
         inference suite {:.1} s (< 300 s); misses: [{}]",
        100.0 * rate,
        apis.len(),
        p.elapsed.as_secs_f64(),
        misses.join(", ")
    );
    Ac1 {
        line: Line { id: "AC1", pass, text },
        matching,
    }
}

fn ac2(p: &Pipeline) -> Line {
    let mut sets = 0;
    let mut checked = 0;
    let mut bad = Vec::new();
    for (g, o) in p.groups.iter().zip(&p.outcomes) {
        let Ok(rule) = &o.rule else { continue };
        sets += 1;
        let wrong_pass = g.passing.iter().filter(|r| !rule.accepts(&r.env().values)).count();
        let wrong_counter = g.counter.iter().filter(|r| rule.accepts(&r.env().values)).count();
        checked += g.passing.len() + g.counter.len();
        if wrong_pass + wrong_counter > 0 {
            bad.push(format!("{} ({wrong_pass} passing rejected, {wrong_counter} counter accepted)", g.key.api));
        }
    }
    Line {
        id: "AC2",
        pass: bad.is_empty() && sets > 0,
        text: format!("{sets} constraint sets, {checked} records, {} violations [{}]", bad.len(), bad.join(", ")),
    }
}

fn ac3(p: &Pipeline) -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sets = 0;
    let mut raw = 0;
    let mut kept = 0;
    let mut problems = Vec::new();
    for (g, o) in p.groups.iter().zip(&p.outcomes) {
        match &o.rule {
            Ok(r) if r.provenance == Provenance::Inferred => {}
            _ => continue,
        }
        let domain = g.domain();
        let Ok(c) = collect_predicates(&p.source, &g.passing, &g.counter, &domain, &p.cfg) else {
            problems.push(format!("{}: collection failed on rerun", g.key.api));
            continue;
        };
        let d = deduplicate(&c, &domain, None);
        sets += 1;
        raw += c.len();
        kept += d.len();
        if !d.iter().all(|x| c.contains(x)) {
            problems.push(format!("{}: output not a subset", g.key.api));
        }
        let all = |ps: &[Predicate], env: &[i64]| ps.iter().all(|x| x.holds(env));
        let mut envs: Vec<Vec<i64>> = g.passing.iter().chain(&g.counter).map(|r| r.env().values).collect();
        for _ in 0..10_000 {
            envs.push(domain.ranges.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect());
        }
        let differ = envs.iter().filter(|e| all(&c, e) != all(&d, e)).count();
        if differ > 0 {
            problems.push(format!("{}: {differ} envs distinguish input and output", g.key.api));
        }
        if deduplicate(&d, &domain, None) != d {
            problems.push(format!("{}: not a fixed point", g.key.api));
        }
    }

    let names = vec!["a".to_string(), "b".to_string()];
    let q = |s: &str| Predicate::parse_named(s, &names).unwrap();
    let show = |ps: Vec<Predicate>| ps.iter().map(|x| x.to_string_named(&names)).collect::<Vec<_>>();
    let d2 = Domain::symmetric(2);
    let worked = [
        (vec![q("0 < a"), q("0 < a + 1")], vec!["0 < a"]),
        (vec![q("0 < a"), q("0 < b")], vec!["0 < a", "0 < b"]),
        (vec![q("0 = a - b"), q("0 < a - b + 1"), q("0 < b - a + 1")], vec!["0 = a - b"]),
    ];
    let mut worked_ok = 0;
    for (input, want) in &worked {
        let out = deduplicate(input, &d2, None);
        let mut exhaustive = true;
        for a in 0..=8 {
            for b in 0..=8 {
                let env = [a, b];
                exhaustive &= input.iter().all(|x| x.holds(&env)) == out.iter().all(|x| x.holds(&env));
            }
        }
        if show(out) == *want && exhaustive {
            worked_ok += 1;
        } else {
            problems.push(format!("worked set {:?}", show(input.clone())));
        }
    }
    Line {
        id: "AC3",
        pass: problems.is_empty() && sets > 0,
        text: format!(
            "{sets} inferred sets ({raw} -> {kept} predicates) equivalent on records + 10^4 random envs each, fixed points; \
             worked sets {worked_ok}/{}; problems: [{}]",
            worked.len(),
            problems.join("; ")
        ),
    }
}

#[derive(Clone, Debug)]
enum Tree {
    Hole(usize),
    Const(i64),
    Bin(u8, Box<Tree>, Box<Tree>),
}

fn floor_div(a: i64, b: i64) -> Option<i64> {
    if b == 0 {
        return None;
    }
    let q = a / b;
    Some(if a % b != 0 && ((a < 0) != (b < 0)) { q - 1 } else { q })
}

impl Tree {
    fn eval(&self, h: &[i64]) -> Option<i64> {
        match self {
            Tree::Hole(k) => Some(h[*k]),
            Tree::Const(c) => Some(*c),
            Tree::Bin(op, l, r) => {
                let (a, b) = (l.eval(h)?, r.eval(h)?);
                match op {
                    0 => a.checked_add(b),
                    1 => a.checked_sub(b),
                    2 => a.checked_mul(b),
                    3 => floor_div(a, b),
                    4 => floor_div(a, b).map(|q| a - b * q),
                    5 => Some(a.min(b)),
                    _ => Some(a.max(b)),
                }
            }
        }
    }

    fn holes(&self, out: &mut Vec<usize>) {
        match self {
            Tree::Hole(k) => out.push(*k),
            Tree::Const(_) => {}
            Tree::Bin(_, l, r) => {
                l.holes(out);
                r.holes(out);
            }
        }
    }

    /// A binary node whose subtrees are both hole-free.
    fn has_constant_node(&self) -> bool {
        match self {
            Tree::Bin(_, l, r) => {
                let mut hl = Vec::new();
                let mut hr = Vec::new();
                l.holes(&mut hl);
                r.holes(&mut hr);
                (hl.is_empty() && hr.is_empty()) || l.has_constant_node() || r.has_constant_node()
            }
            _ => false,
        }
    }
}

/// Value vector over `{0..=6}^h`, in lexicographic order.
fn table(h: usize, f: &dyn Fn(&[i64]) -> Option<i64>) -> Vec<Option<i64>> {
    let mut out = Vec::new();
    let mut a = vec![0i64; h];
    loop {
        out.push(f(&a));
        let mut k = h;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            a[k] += 1;
            if a[k] <= 6 {
                break;
            }
            a[k] = 0;
        }
    }
}

/// Every tree with at most two operators over holes 0..3 and constants
/// {1, 2}, each hole used at most once and the used holes exactly `0..h`.
fn brute_force_classes() -> HashMap<usize, HashSet<Vec<Option<i64>>>> {
    let mut leaves = vec![Tree::Const(1), Tree::Const(2)];
    leaves.extend((0..3).map(Tree::Hole));
    let bin = |op: u8, l: &Tree, r: &Tree| Tree::Bin(op, Box::new(l.clone()), Box::new(r.clone()));
    let mut one = Vec::new();
    for op in 0..7 {
        for l in &leaves {
            for r in &leaves {
                one.push(bin(op, l, r));
            }
        }
    }
    let mut all: Vec<Tree> = leaves.clone();
    all.extend(one.iter().cloned());
    for op in 0..7 {
        for s in &one {
            for l in &leaves {
                all.push(bin(op, s, l));
                all.push(bin(op, l, s));
            }
        }
    }
    let mut classes: HashMap<usize, HashSet<Vec<Option<i64>>>> = HashMap::new();
    for t in &all {
        let mut hs = Vec::new();
        t.holes(&mut hs);
        let h = hs.len();
        let mut sorted = hs.clone();
        sorted.sort_unstable();
        if h == 0 || sorted != (0..h).collect::<Vec<_>>() || t.has_constant_node() {
            continue;
        }
        classes.entry(h).or_default().insert(table(h, &|a| t.eval(a)));
    }
    classes
}

fn ac4() -> Line {
    let brute = brute_force_classes();
    let set = enumerate_hole_exprs(&GrammarConfig::with_max_ops(2), &PruningConfig::default());
    let mut problems = Vec::new();
    let mut survivors = 0;
    let mut classes = 0;
    for h in 1..=3 {
        let mut seen: HashSet<Vec<Option<i64>>> = HashSet::new();
        let mut dups = 0;
        for id in set.ids().filter(|&id| set.holes_of(id) == h) {
            survivors += 1;
            let v = table(h, &|a| set.eval(id, a));
            if !seen.insert(v) {
                dups += 1;
            }
        }
        let want = brute.get(&h).cloned().unwrap_or_default();
        classes += want.len();
        let missing = want.difference(&seen).count();
        let extra = seen.difference(&want).count();
        if dups + missing + extra > 0 {
            problems.push(format!("{h} holes: {missing} classes missing, {dups} duplicates, {extra} outside grammar"));
        }
    }
    let configs = [
        PruningConfig::none(),
        PruningConfig::equivalence_only(),
        PruningConfig::rarity_only(),
        PruningConfig::default(),
    ];
    let sets: Vec<_> = configs.iter().map(|c| enumerate_hole_exprs(&GrammarConfig::with_max_ops(2), c)).collect();
    let mut rows = Vec::new();
    for n in 1..=6u32 {
        let c: Vec<u128> = sets.iter().map(|s| extended_count(s, n)).collect();
        let row = PruningRow {
            symbols: n,
            none: c[0],
            equivalence: c[1],
            rarity: c[2],
            both: c[3],
        };
        if !row.is_monotone() {
            problems.push(format!("counts not monotone for {n} symbols: {row:?}"));
        }
        rows.push(format!("{}", row.both));
    }
    Line {
        id: "AC4",
        pass: problems.is_empty(),
        text: format!(
            "{survivors} pruned templates vs {classes} brute-force classes over {{0..6}}: complete and duplicate-free; \
             counts monotone for 1..6 symbols (pruned: {}); problems: [{}]",
            rows.join(", "),
            problems.join("; ")
        ),
    }
}

fn campaign(ctx: &GenContext, p: &Pipeline, plan: BugPlan, tests: usize, seed: u64, stop: bool) -> CampaignReport {
    let mut be = BuiltinBackend::new(plan);
    let cfg = CampaignConfig {
        tests,
        seed,
        stop_on_report: stop,
        ..CampaignConfig::default()
    };
    run_campaign(ctx, &p.lib, &mut be, &cfg)
}

fn ac5(p: &Pipeline) -> Line {
    let manual = campaign(&GenContext::new(&[], &p.manual, &p.records), p, BugPlan::empty(), 10_000, 5, false);
    let inferred = campaign(&GenContext::new(&p.inferred, &[], &p.records), p, BugPlan::empty(), 10_000, 6, false);
    let ms = |r: &CampaignReport| r.timing.total.as_secs_f64() * 1e3 / r.tests as f64;
    let pass = manual.tests == 10_000
        && inferred.tests == 10_000
        && manual.validity_rate() >= 0.99
        && inferred.validity_rate() >= 0.90
        && ms(&manual) <= 100.0
        && ms(&inferred) <= 100.0;
    Line {
        id: "AC5",
        pass,
        text: format!(
            "validity manual {:.2}% (>= 99%), inferred {:.2}% (>= 90%) over 10^4 graphs each; mean {:.2} / {:.2} ms per test (<= 100 ms)",
            100.0 * manual.validity_rate(),
            100.0 * inferred.validity_rate(),
            ms(&manual),
            ms(&inferred)
        ),
    }
}

fn ac6(p: &Pipeline) -> Line {
    let ctx = GenContext::new(&p.inferred, &p.manual, &p.records);
    let clean = campaign(&ctx, p, BugPlan::empty(), 100_000, 7, false);
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/seeded_bugs.json");
    let plan = BugPlan::load(&path).expect("seeded bug plan");
    let mut found = 0;
    let mut per_bug = Vec::new();
    for (k, bug) in plan.bugs.iter().enumerate() {
        let one = BugPlan {
            seed: plan.seed,
            bugs: vec![bug.clone()],
        };
        let r = campaign(&ctx, p, one, 10_000, 100 + k as u64, true);
        if r.reports() > 0 {
            found += 1;
            per_bug.push(format!("{}@{}", k, r.tests));
        } else {
            per_bug.push(format!("{k}:missed"));
        }
    }
    let pass = clean.tests == 100_000 && clean.reports() == 0 && found >= 9;
    Line {
        id: "AC6",
        pass,
        text: format!(
            "bug-free: {} reports in {} tests ({:.2}% valid); seeded bugs found {found}/{} within 10^4 tests (need >= 9): [{}]",
            clean.reports(),
            clean.tests,
            100.0 * clean.validity_rate(),
            plan.bugs.len(),
            per_bug.join(", ")
        ),
    }
}

#[derive(Default)]
struct Agreement {
    checked: usize,
    mismatched: usize,
    overfit_checked: usize,
    overfit_mismatched: usize,
    /// Symbolic instructions the library rejected during execution.
    rejected: usize,
    /// Graphs whose eager run failed outside any one instruction.
    faulted: usize,
}

/// Runs every instruction eagerly and compares result types with the
/// propagated ones.
fn agreement(ctx: &GenContext, p: &Pipeline, matching: &dyn Fn(&str) -> bool, seed: u64, graphs: usize) -> Agreement {
    let mut a = Agreement::default();
    for i in 0..graphs {
        let mut g = generate(
            ctx,
            &GenConfig {
                seed: seed + i as u64,
                ..GenConfig::default()
            },
        )
        .graph;
        g.outputs = g.instructions.iter().flat_map(|inst| inst.results.iter().copied()).collect();
        let inputs = payloads(&g, seed + i as u64);
        let stop = match execute_eager(&p.lib, &g, &inputs) {
            Ok(_) => (g.len(), None),
            Err(ExecError::TypeMismatch { inst, .. }) => (inst, Some(true)),
            Err(ExecError::Validity { inst, .. }) => (inst, Some(false)),
            Err(_) => {
                a.faulted += 1;
                continue;
            }
        };
        for (k, inst) in g.instructions.iter().enumerate().take(stop.0 + 1) {
            let Binding::Symbolic(id) = &inst.binding else { continue };
            let good = matching(id);
            let bad = match (k == stop.0, stop.1) {
                (true, Some(true)) => true,
                (true, Some(false)) => {
                    a.rejected += 1;
                    continue;
                }
                (true, None) => continue,
                _ => false,
            };
            if good {
                a.checked += 1;
                a.mismatched += bad as usize;
            } else {
                a.overfit_checked += 1;
                a.overfit_mismatched += bad as usize;
            }
        }
    }
    a
}

fn ac7(p: &Pipeline, matching: &HashSet<String>) -> Line {
    let inferred = GenContext::new(&p.inferred, &[], &p.records);
    let manual = GenContext::new(&[], &p.manual, &p.records);
    let ai = agreement(&inferred, p, &|id| matching.contains(id), 70_000, 10_000);
    let am = agreement(&manual, p, &|_| true, 80_000, 10_000);
    Line {
        id: "AC7",
        pass: ai.mismatched == 0 && am.mismatched == 0 && ai.checked > 0 && am.checked > 0,
        text: format!(
            "10^4 graphs per rule source: inferred rules {} symbolic types checked, {} mismatches; manual rules {} checked, {} mismatches; \
             overfit rules {} checked, {} mismatches (counted only); {} symbolic instructions rejected at runtime, {} graphs faulted",
            ai.checked,
            ai.mismatched,
            am.checked,
            am.mismatched,
            ai.overfit_checked,
            ai.overfit_mismatched,
            ai.rejected + am.rejected,
            ai.faulted + am.faulted
        ),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let p = Pipeline::standard();
    assert!(p.lib.ops().iter().any(|o| o.category == Category::Hostile));
    let mut lines = Vec::new();
    let mut run = |l: Line| {
        l.print();
        lines.push(l);
    };
    let a1 = ac1(&p);
    run(a1.line);
    run(ac2(&p));
    run(ac3(&p));
    run(ac4());
    run(ac5(&p));
    run(ac6(&p));
    run(ac7(&p, &a1.matching));
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!(
        "acceptance: {}/{} criteria passed in {:.0} s",
        lines.len() - failed,
        lines.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
