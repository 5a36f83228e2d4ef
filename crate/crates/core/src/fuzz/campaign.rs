use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::repro::{digest, save_reproducer, ReproCase};
use super::{check_pair, Verdict, VerdictKind};
use crate::generate::{generate, GenConfig, GenContext};
use crate::graphir::Graph;
use crate::opref::{execute_eager, Backend, ExecError, Library};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct CampaignConfig {
    pub tests: usize,
    /// Stops early once this much wall-clock time has passed.
    pub time_limit: Option<Duration>,
    /// Generator settings; the seed is replaced per test.
    pub gen: GenConfig,
    pub seed: u64,
    /// Reproducers are written here when set.
    pub out_dir: Option<PathBuf>,
    pub stop_on_report: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            tests: 1000,
            time_limit: None,
            gen: GenConfig::default(),
            seed: 0,
            out_dir: None,
            stop_on_report: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub generation: Duration,
    /// Part of `generation` spent in the constraint solver.
    pub solving: Duration,
    pub evaluation: Duration,
    pub saving: Duration,
    pub total: Duration,
}

impl Timing {
    fn add(&mut self, o: &Timing) {
        self.generation += o.generation;
        self.solving += o.solving;
        self.evaluation += o.evaluation;
        self.saving += o.saving;
        self.total += o.total;
    }
}

/// One deduplicated report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub test: usize,
    pub seed: u64,
    pub kind: VerdictKind,
    pub detail: String,
    pub key: String,
    pub path: Option<PathBuf>,
    /// Reports collapsed onto this one, itself included.
    pub hits: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub backend: String,
    pub tests: usize,
    pub histogram: BTreeMap<VerdictKind, usize>,
    pub timing: Timing,
    pub findings: Vec<Finding>,
    pub aborted: Option<String>,
}

impl CampaignReport {
    pub fn count(&self, k: VerdictKind) -> usize {
        self.histogram.get(&k).copied().unwrap_or(0)
    }

    pub fn valid(&self) -> usize {
        self.tests - self.count(VerdictKind::InvalidDiscarded)
    }

    pub fn validity_rate(&self) -> f64 {
        if self.tests == 0 {
            return 0.0;
        }
        self.valid() as f64 / self.tests as f64
    }

    pub fn reports(&self) -> usize {
        self.count(VerdictKind::Inconsistency) + self.count(VerdictKind::RuntimeError)
    }

    /// Combines reports of disjoint seed shards. Findings with the same key
    /// collapse onto the one from the earliest test.
    pub fn merge(&mut self, other: &CampaignReport) {
        if self.backend.is_empty() {
            self.backend = other.backend.clone();
        }
        self.tests += other.tests;
        for (k, v) in &other.histogram {
            *self.histogram.entry(*k).or_default() += v;
        }
        self.timing.add(&other.timing);
        for f in &other.findings {
            match self.findings.iter_mut().find(|g| g.key == f.key) {
                Some(g) => {
                    let hits = g.hits + f.hits;
                    if (f.seed, f.test) < (g.seed, g.test) {
                        *g = f.clone();
                    }
                    g.hits = hits;
                }
                None => self.findings.push(f.clone()),
            }
        }
        self.findings.sort_by(|a, b| (a.seed, a.test, &a.key).cmp(&(b.seed, b.test, &b.key)));
        if self.aborted.is_none() {
            self.aborted = other.aborted.clone();
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        let per = |d: Duration| if self.tests == 0 { 0.0 } else { ms(d) / self.tests as f64 };
        let share = |d: Duration| {
            if self.timing.total.is_zero() {
                0.0
            } else {
                100.0 * d.as_secs_f64() / self.timing.total.as_secs_f64()
            }
        };
        let _ = writeln!(s, "backend: {}", self.backend);
        let _ = writeln!(s, "tests: {}", self.tests);
        let _ = writeln!(s, "validity: {:.2}% ({} valid)", 100.0 * self.validity_rate(), self.valid());
        for k in [VerdictKind::Pass, VerdictKind::InvalidDiscarded, VerdictKind::Inconsistency, VerdictKind::RuntimeError] {
            let _ = writeln!(s, "  {}: {}", k, self.count(k));
        }
        let t = &self.timing;
        let _ = writeln!(
            s,
            "time per test (ms): generation {:.3} ({:.0}%, solving {:.0}%), evaluation {:.3} ({:.0}%), saving {:.3} ({:.0}%), total {:.3}",
            per(t.generation),
            share(t.generation),
            share(t.solving),
            per(t.evaluation),
            share(t.evaluation),
            per(t.saving),
            share(t.saving),
            per(t.total)
        );
        let _ = writeln!(s, "unique reports: {}", self.findings.len());
        for f in &self.findings {
            let path = f.path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(s, "  [{}] test {} x{} {} :: {} :: {}", f.kind, f.test, f.hits, f.key, f.detail, path);
        }
        if let Some(a) = &self.aborted {
            let _ = writeln!(s, "aborted: {a}");
        }
        s
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of test `i` in a campaign seeded with `base`.
pub fn test_seed(base: u64, i: usize) -> u64 {
    splitmix(splitmix(base) ^ i as u64)
}

/// Input payloads for `graph`: floats uniform in [-5, 5], ints in [-10, 10].
pub fn payloads(graph: &Graph, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    graph.input_types().iter().map(|t| Tensor::random(t, 5.0, 10, &mut rng)).collect()
}

fn run_both(lib: &Library, backend: &mut dyn Backend, graph: &Graph, seed: u64) -> (Verdict, Result<Vec<Tensor>, ExecError>, Result<Vec<Tensor>, ExecError>) {
    let inputs = payloads(graph, seed);
    let eager = execute_eager(lib, graph, &inputs);
    if eager.is_err() {
        let skipped = Err(ExecError::NotImplemented("eager run failed".into()));
        return (check_pair(&eager, &skipped), eager, skipped);
    }
    let opt = backend.run(graph, &inputs);
    (check_pair(&eager, &opt), eager, opt)
}

/// Greedily removes instructions while the verdict kind stays the same.
/// Removed results become graph inputs with fresh payloads from `seed`.
pub fn minimize(lib: &Library, backend: &mut dyn Backend, graph: &Graph, seed: u64, kind: VerdictKind) -> Graph {
    let mut cur = graph.clone();
    loop {
        let mut changed = false;
        let mut k = cur.len();
        while k > 0 {
            k -= 1;
            if cur.len() <= 1 {
                break;
            }
            let mut c = cur.clone();
            if c.cut(k).is_err() {
                continue;
            }
            c.set_outputs_to_unused();
            c.remove_unused_inputs();
            let (v, _, opt) = run_both(lib, backend, &c, seed);
            if matches!(opt, Err(ExecError::BackendLost(_))) {
                return cur;
            }
            if v.kind == kind {
                cur = c;
                changed = true;
                k = k.min(cur.len());
            }
        }
        if !changed {
            return cur;
        }
    }
}

/// Sorted multiset of `api(operand ranks)->(result ranks)` over the graph.
pub fn dedup_key(graph: &Graph) -> String {
    let rank = |v: &u32| graph.ty(*v).map_or(0, |t| t.rank()).to_string();
    let mut parts: Vec<String> = graph
        .instructions
        .iter()
        .map(|i| {
            let ins: Vec<String> = i.operands.iter().map(rank).collect();
            let outs: Vec<String> = i.results.iter().map(rank).collect();
            format!("{}({})->({})", i.api, ins.join(","), outs.join(","))
        })
        .collect();
    parts.sort();
    parts.join(";")
}

/// Generates, runs and checks `cfg.tests` graphs against `backend`.
pub fn run_campaign(ctx: &GenContext, lib: &Library, backend: &mut dyn Backend, cfg: &CampaignConfig) -> CampaignReport {
    let start = Instant::now();
    let mut report = CampaignReport {
        backend: backend.name(),
        ..CampaignReport::default()
    };
    for i in 0..cfg.tests {
        if cfg.time_limit.is_some_and(|l| start.elapsed() >= l) {
            break;
        }
        let seed = test_seed(cfg.seed, i);
        let t = Instant::now();
        let generated = generate(
            ctx,
            &GenConfig {
                seed,
                ..cfg.gen.clone()
            },
        );
        report.timing.generation += t.elapsed();
        report.timing.solving += generated.stats.solve_time;
        let graph = generated.graph;

        let t = Instant::now();
        let (verdict, eager, opt) = run_both(lib, backend, &graph, seed);
        report.timing.evaluation += t.elapsed();
        report.tests += 1;
        *report.histogram.entry(verdict.kind).or_default() += 1;
        let lost = match &opt {
            Err(ExecError::BackendLost(m)) => Some(m.clone()),
            _ => None,
        };
        if verdict.kind.is_report() {
            let t = Instant::now();
            let small = if lost.is_some() {
                graph.clone()
            } else {
                minimize(lib, backend, &graph, seed, verdict.kind)
            };
            let key = format!("{}:{}", verdict.kind, dedup_key(&small));
            match report.findings.iter_mut().find(|f| f.key == key) {
                Some(f) => f.hits += 1,
                None => {
                    let path = cfg.out_dir.as_ref().and_then(|dir| {
                        let case = ReproCase {
                            test: i,
                            seed,
                            backend: report.backend.clone(),
                            kind: verdict.kind,
                            detail: verdict.detail.clone(),
                            key: key.clone(),
                            eager_digest: digest(&eager),
                            optimized_digest: digest(&opt),
                        };
                        save_reproducer(dir, &case, &graph, Some(&small)).ok()
                    });
                    report.findings.push(Finding {
                        test: i,
                        seed,
                        kind: verdict.kind,
                        detail: verdict.detail.clone(),
                        key,
                        path,
                        hits: 1,
                    });
                }
            }
            report.timing.saving += t.elapsed();
            if cfg.stop_on_report {
                break;
            }
        }
        if let Some(m) = lost {
            report.aborted = Some(m);
            break;
        }
    }
    report.timing.total = start.elapsed();
    report
}
