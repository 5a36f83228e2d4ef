#![allow(dead_code)]

use std::sync::Arc;
use std::time::{Duration, Instant};

use rulefuzz::augment::{augment_all, AugmentBudget};
use rulefuzz::exprsynth::{enumerate_hole_exprs, GrammarConfig, PruningConfig};
use rulefuzz::opref::{Category, Library};
use rulefuzz::ruleinfer::{
    group_records, infer_all, manual_rule, ExprSource, InferConfig, InferOutcome, OperatorRule, PartialOpData,
};
use rulefuzz::trace::{collect_seeds, Record};

/// Seed collection, augmentation and inference over the non-hostile
/// reference operators.
pub struct Pipeline {
    pub lib: Library,
    pub source: ExprSource,
    pub seeds: Vec<Record>,
    pub records: Vec<Record>,
    pub groups: Vec<PartialOpData>,
    pub outcomes: Vec<InferOutcome>,
    pub inferred: Vec<OperatorRule>,
    pub manual: Vec<OperatorRule>,
    pub cfg: InferConfig,
    /// Template enumeration, augmentation and inference.
    pub elapsed: Duration,
}

impl Pipeline {
    pub fn build(per_op: usize, seed: u64, timeout: Duration) -> Pipeline {
        let start = Instant::now();
        let lib = Library::new();
        let source = ExprSource::new(Arc::new(enumerate_hole_exprs(
            &GrammarConfig::with_max_ops(3),
            &PruningConfig::default(),
        )));
        let seeds: Vec<Record> = collect_seeds(&lib, per_op, seed)
            .records
            .into_iter()
            .filter(|r| lib.get(&r.api).is_some_and(|o| o.category != Category::Hostile))
            .collect();
        let mut records = Vec::new();
        for (_, a) in augment_all(&seeds, &AugmentBudget::default(), &lib) {
            records.extend(a.passing);
            records.extend(a.counter);
        }
        let groups = group_records(&records);
        let cfg = InferConfig {
            timeout,
            max_ops: 3,
            ..InferConfig::default()
        };
        let outcomes = infer_all(&source, &groups, &[], &cfg);
        let elapsed = start.elapsed();
        let inferred = outcomes.iter().filter_map(|o| o.rule.clone().ok()).collect();
        let manual = groups
            .iter()
            .filter_map(|g| manual_rule(&lib, &g.passing[0]).map(|r| r.expect("catalog rule parses")))
            .collect();
        Pipeline {
            lib,
            source,
            seeds,
            records,
            groups,
            outcomes,
            inferred,
            manual,
            cfg,
            elapsed,
        }
    }

    pub fn standard() -> Pipeline {
        Pipeline::build(12, 1, Duration::from_secs(2))
    }
}

/// Seed records of the standard operators with their catalog rules.
pub fn manual_fixture() -> (Library, Vec<Record>, Vec<OperatorRule>) {
    let lib = Library::new();
    let records: Vec<Record> = collect_seeds(&lib, 6, 3)
        .records
        .into_iter()
        .filter(|r| lib.get(&r.api).is_some_and(|o| o.category == Category::Standard))
        .collect();
    let mut manual: Vec<OperatorRule> = Vec::new();
    for g in group_records(&records) {
        if let Some(r) = manual_rule(&lib, &g.passing[0]) {
            manual.push(r.expect("catalog rule parses"));
        }
    }
    (lib, records, manual)
}
