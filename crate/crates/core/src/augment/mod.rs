//! Record augmentation: offset, swap and special-value mutations labelled by
//! executing the mutant.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exprsynth::Combinations;
use crate::opref::{Invoker, OpError};
use crate::ruleinfer::{key_of, PartialOperatorKey};
use crate::tensor::Tensor;
use crate::trace::{write_records, Record};

/// Mutants with more elements than this in any input are not executed.
pub const MAX_MUTANT_NUMEL: i64 = 1 << 18;

#[derive(Clone, Debug)]
pub struct AugmentBudget {
    pub target_records: usize,
    pub wall_clock_limit: Duration,
    pub rng_seed: u64,
    /// Largest subset size tried by the offset phase.
    pub max_subset: usize,
    /// Offset rounds; each round mutates the passing set of the last.
    pub max_rounds: usize,
}

impl Default for AugmentBudget {
    fn default() -> Self {
        AugmentBudget {
            target_records: 100,
            wall_clock_limit: Duration::from_secs(10),
            rng_seed: 0,
            max_subset: 3,
            max_rounds: 3,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AugmentError {
    #[error("no seed records")]
    NoSeeds,
    #[error("seed records span several partial operators")]
    MixedKeys,
}

/// Executes a mutant and labels it. `None` means the mutant is discarded
/// (unbuildable input, oversized, or a non-validity failure).
pub fn label<R: rand::Rng>(exec: &dyn Invoker, r: &Record, rng: &mut R) -> Option<Record> {
    for t in &r.inputs {
        match t.numel() {
            Some(n) if t.shape.iter().all(|&d| d >= 0) && n <= MAX_MUTANT_NUMEL => {}
            _ => return None,
        }
    }
    let inputs: Vec<Tensor> = r.inputs.iter().map(|t| Tensor::random(t, 5.0, 10, rng)).collect();
    let mut out = r.clone();
    match exec.invoke(&r.api, &inputs, &r.attrs) {
        Ok(outs) => {
            out.valid = true;
            out.outputs = outs.into_iter().map(|t| t.ty).collect();
        }
        Err(OpError::Validity(_)) => {
            out.valid = false;
            out.outputs.clear();
        }
        Err(_) => return None,
    }
    Some(out)
}

fn with_values(record: &Record, values: Vec<i64>) -> Record {
    let mut env = record.env();
    env.values = values;
    env.apply_to(record)
}

/// Increments every symbol in `subset` (indices into the symbol env).
pub fn offset_mutation<R: rand::Rng>(exec: &dyn Invoker, record: &Record, subset: &[usize], rng: &mut R) -> Option<Record> {
    let mut v = record.env().values;
    for &k in subset {
        v[k] += 1;
    }
    label(exec, &with_values(record, v), rng)
}

pub fn swap_mutation<R: rand::Rng>(exec: &dyn Invoker, record: &Record, a: usize, b: usize, rng: &mut R) -> Option<Record> {
    let mut v = record.env().values;
    v.swap(a, b);
    label(exec, &with_values(record, v), rng)
}

pub fn special_value_mutation<R: rand::Rng>(
    exec: &dyn Invoker,
    record: &Record,
    attr: usize,
    value: i64,
    rng: &mut R,
) -> Option<Record> {
    let mut v = record.env().values;
    v[attr] = value;
    label(exec, &with_values(record, v), rng)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Augmented {
    /// Valid seeds followed by valid mutants.
    pub passing: Vec<Record>,
    /// Invalid seeds followed by invalid mutants.
    pub counter: Vec<Record>,
}

struct Acc<'a> {
    key: PartialOperatorKey,
    out: Augmented,
    exec: &'a dyn Invoker,
    rng: ChaCha8Rng,
}

impl Acc<'_> {
    fn seen(&self, r: &Record) -> bool {
        self.out.passing.iter().chain(&self.out.counter).any(|x| x.same_call(r))
    }

    /// Returns whether the mutant was a new passing record.
    fn add(&mut self, m: Option<Record>) -> bool {
        let Some(m) = m else {
            return false;
        };
        if self.seen(&m) {
            return false;
        }
        if m.valid {
            if key_of(&m) != self.key {
                return false;
            }
            self.out.passing.push(m);
            true
        } else {
            self.out.counter.push(m);
            false
        }
    }
}

/// Offset rounds until the passing target, then one pass of pairwise swaps
/// and special attribute values over the seeds.
pub fn augment_partial_op(records: &[Record], budget: &AugmentBudget, exec: &dyn Invoker) -> Result<Augmented, AugmentError> {
    let seeds: Vec<&Record> = records.iter().filter(|r| r.valid).collect();
    let Some(first) = seeds.first() else {
        return Err(AugmentError::NoSeeds);
    };
    let key = key_of(first);
    if seeds.iter().any(|r| key_of(r) != key) {
        return Err(AugmentError::MixedKeys);
    }
    let deadline = Instant::now() + budget.wall_clock_limit;
    let mut acc = Acc {
        key,
        out: Augmented::default(),
        exec,
        rng: ChaCha8Rng::seed_from_u64(budget.rng_seed),
    };
    for r in records {
        if !acc.seen(r) && (!r.valid || key_of(r) == acc.key) && (r.valid || key_of(r).same_input_side(&acc.key)) {
            if r.valid {
                acc.out.passing.push(r.clone());
            } else {
                acc.out.counter.push(r.clone());
            }
        }
    }
    let env = first.env();
    let n = env.len();
    let n_dims: usize = first.inputs.iter().map(|t| t.rank()).sum();
    let done = |acc: &Acc| acc.out.passing.len() >= budget.target_records || Instant::now() >= deadline;

    let mut frontier: Vec<Record> = acc.out.passing.clone();
    'rounds: for _ in 0..budget.max_rounds {
        let start = acc.out.passing.len();
        for size in 1..=budget.max_subset.min(n) {
            for subset in Combinations::new(n, size) {
                let subset: Vec<usize> = subset.iter().map(|&s| s as usize).collect();
                for r in &frontier {
                    if done(&acc) {
                        break 'rounds;
                    }
                    let m = offset_mutation(acc.exec, r, &subset, &mut acc.rng);
                    acc.add(m);
                }
            }
        }
        frontier = acc.out.passing[start..].to_vec();
        if frontier.is_empty() {
            break;
        }
    }

    let seed_list: Vec<Record> = seeds.iter().map(|r| (*r).clone()).collect();
    for r in &seed_list {
        let values = r.env().values;
        for a in 0..n {
            for b in a + 1..n {
                if Instant::now() >= deadline {
                    return Ok(acc.out);
                }
                if values[a] != values[b] {
                    let m = swap_mutation(acc.exec, r, a, b, &mut acc.rng);
                    acc.add(m);
                }
            }
        }
    }
    for r in &seed_list {
        for attr in n_dims..n {
            for value in [0, -1] {
                if Instant::now() >= deadline {
                    return Ok(acc.out);
                }
                let m = special_value_mutation(acc.exec, r, attr, value, &mut acc.rng);
                acc.add(m);
            }
        }
    }
    Ok(acc.out)
}

/// Splits valid seeds by key; each invalid seed goes to every key with the
/// same input side.
pub fn partition_seeds(records: &[Record]) -> Vec<(PartialOperatorKey, Vec<Record>)> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<PartialOperatorKey, Vec<Record>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.valid) {
        let k = key_of(r);
        groups
            .entry(k.clone())
            .or_insert_with(|| {
                order.push(k);
                Vec::new()
            })
            .push(r.clone());
    }
    for r in records.iter().filter(|r| !r.valid) {
        let k = key_of(r);
        for (g, rs) in groups.iter_mut() {
            if g.same_input_side(&k) {
                rs.push(r.clone());
            }
        }
    }
    order
        .into_iter()
        .map(|k| {
            let rs = groups.remove(&k).unwrap();
            (k, rs)
        })
        .collect()
}

/// Augments every partial operator in `records`.
pub fn augment_all(records: &[Record], budget: &AugmentBudget, exec: &dyn Invoker) -> Vec<(PartialOperatorKey, Augmented)> {
    partition_seeds(records)
        .into_iter()
        .enumerate()
        .map(|(k, (key, rs))| {
            let b = AugmentBudget {
                rng_seed: budget.rng_seed.wrapping_add(k as u64),
                ..budget.clone()
            };
            let aug = augment_partial_op(&rs, &b, exec).expect("group has a valid seed of its key");
            (key, aug)
        })
        .collect()
}

/// `<dir>/<api>/<key-id>.pass` and `.counter`.
pub fn save_augmented(dir: &Path, key: &PartialOperatorKey, aug: &Augmented) -> io::Result<(PathBuf, PathBuf)> {
    let base = dir.join(&key.api);
    fs::create_dir_all(&base)?;
    let pass = base.join(format!("{}.pass", key.id()));
    let counter = base.join(format!("{}.counter", key.id()));
    write_records(&pass, &aug.passing)?;
    write_records(&counter, &aug.counter)?;
    Ok((pass, counter))
}
