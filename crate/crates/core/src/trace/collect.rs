use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::filter::{check_determinism, check_value_independence};
use super::simplify::{simplify, RawArg, RawInvocation, SkipReason};
use super::{AttrValue, Record};
use crate::opref::{Invoker, Library};
use crate::tensor::Tensor;

#[derive(Clone, Debug, Default)]
pub struct CollectReport {
    pub records: Vec<Record>,
    pub skipped: BTreeMap<SkipReason, usize>,
}

/// Samples `per_op` invocations of every catalog operator, runs them with
/// random payloads, simplifies them and keeps those that pass both filters.
pub fn collect_seeds(lib: &Library, per_op: usize, seed: u64) -> CollectReport {
    let mut report = CollectReport::default();
    for (k, op) in lib.ops().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((k as u64 + 1) << 32));
        for _ in 0..per_op {
            let (types, attrs) = (op.sample)(&mut rng);
            let inputs: Vec<Tensor> = types.iter().map(|t| Tensor::random(t, 5.0, 10, &mut rng)).collect();
            let result = lib.invoke(op.name, &inputs, &attrs);
            let args = attrs
                .iter()
                .map(|(n, v)| {
                    let a = match v {
                        AttrValue::Int(x) => RawArg::Int(*x),
                        AttrValue::IntList(x) => RawArg::IntList(x.clone()),
                        AttrValue::Float(x) => RawArg::Float(*x),
                        AttrValue::Bool(x) => RawArg::Bool(*x),
                        AttrValue::Str(x) => RawArg::Str(x.clone()),
                    };
                    (n.clone(), a)
                })
                .collect();
            let raw = RawInvocation {
                api: op.name.to_string(),
                inputs,
                args,
                result,
            };
            let verdict = simplify(&raw).and_then(|r| {
                if !r.valid {
                    return Ok(r);
                }
                if !check_determinism(lib, &r, &mut rng) {
                    return Err(SkipReason::Nondeterministic);
                }
                if !check_value_independence(lib, &r, &mut rng) {
                    return Err(SkipReason::ValueDependent);
                }
                Ok(r)
            });
            match verdict {
                Ok(r) => {
                    if !report.records.iter().any(|x| x.same_call(&r)) {
                        report.records.push(r);
                    }
                }
                Err(reason) => *report.skipped.entry(reason).or_default() += 1,
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opref::Category;

    #[test]
    fn hostile_operators_are_filtered_out() {
        let lib = Library::new();
        let report = collect_seeds(&lib, 4, 11);
        for op in lib.ops() {
            let n = report.records.iter().filter(|r| r.api == op.name && r.valid).count();
            match op.category {
                Category::Standard | Category::Probe => assert!(n > 0, "{}", op.name),
                Category::Hostile => assert_eq!(n, 0, "{}", op.name),
            }
        }
        assert!(report.skipped.contains_key(&SkipReason::Nondeterministic));
        assert!(report.skipped.contains_key(&SkipReason::ValueDependent));
        let again = collect_seeds(&lib, 4, 11);
        assert_eq!(again.records, report.records);
    }
}
