use std::error::Error;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use rulefuzz::augment::{augment_all, save_augmented, AugmentBudget};
use rulefuzz::exprsynth::{cache, enumerate_hole_exprs, GrammarConfig, HoleSet, PruningConfig};
use rulefuzz::fuzz::{replay, run_campaign, CampaignConfig};
use rulefuzz::generate::{generate, GenConfig, GenContext};
use rulefuzz::opref::runner::{serve, ExternalBackend};
use rulefuzz::opref::{Backend, BugPlan, BuiltinBackend, Category, Library};
use rulefuzz::ruleinfer::{
    group_records, infer_all, manual_rule, read_rulebook, write_rulebook, ExprSource, InferConfig, OperatorRule,
};
use rulefuzz::trace::{collect_seeds, read_record_dir, write_records, Record};

type Res<T = ()> = Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "rulefuzz", version, about = "Infer operator rules from traces and fuzz tensor backends")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Record seed invocations of the reference operators.
    Collect {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 12)]
        per_op: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also record operators whose validity is outside the grammar.
        #[arg(long)]
        probes: bool,
    },
    /// Mutate seed records into passing and counter examples.
    Augment {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        target: usize,
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Infer a rulebook from records.
    Infer {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seconds per inference task.
        #[arg(long, default_value_t = 2.0)]
        timeout: f64,
        #[arg(long, default_value_t = 3)]
        max_ops: usize,
        /// Template cache file (built on first use).
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Also write the catalog's ground-truth rules for the same keys.
        #[arg(long)]
        manual_out: Option<PathBuf>,
    },
    /// Generate one graph.
    Gen {
        #[command(flatten)]
        rules: RuleArgs,
        #[arg(long, default_value_t = 5)]
        nodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a differential fuzzing campaign.
    Fuzz {
        #[command(flatten)]
        rules: RuleArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, default_value_t = 1000)]
        tests: usize,
        /// Wall-clock limit; the campaign stops at whichever bound comes first.
        #[arg(long)]
        minutes: Option<f64>,
        #[arg(long, default_value_t = 5)]
        nodes: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Answer runner-protocol requests on stdin with the built-in backend.
    Serve {
        #[arg(long)]
        bug_plan: Option<PathBuf>,
    },
    /// Re-run a saved reproducer.
    Replay {
        case: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
    },
}

#[derive(Args)]
struct RuleArgs {
    /// Inferred rulebook.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Ground-truth rulebook.
    #[arg(long)]
    manual: Option<PathBuf>,
    #[arg(long)]
    records: PathBuf,
}

#[derive(Args)]
struct BackendArgs {
    /// `builtin` or `cmd:<program> [args]`.
    #[arg(long, default_value = "builtin")]
    backend: String,
    #[arg(long)]
    bug_plan: Option<PathBuf>,
    /// Per-request timeout for external runners, in seconds.
    #[arg(long, default_value_t = 10.0)]
    runner_timeout: f64,
}

impl BackendArgs {
    fn open(&self) -> Res<Box<dyn Backend>> {
        if self.backend == "builtin" {
            let plan = match &self.bug_plan {
                Some(p) => BugPlan::load(p)?,
                None => BugPlan::empty(),
            };
            return Ok(Box::new(BuiltinBackend::new(plan)));
        }
        if self.bug_plan.is_some() {
            return Err("--bug-plan only applies to the builtin backend".into());
        }
        ExternalBackend::from_spec(&self.backend, Duration::from_secs_f64(self.runner_timeout))
            .map(|b| Box::new(b) as Box<dyn Backend>)
            .ok_or_else(|| format!("unknown backend `{}`", self.backend).into())
    }
}

fn load_rules(path: &Option<PathBuf>) -> Res<Vec<OperatorRule>> {
    Ok(match path {
        Some(p) => read_rulebook(p)?,
        None => Vec::new(),
    })
}

impl RuleArgs {
    fn context(&self) -> Res<GenContext> {
        if self.rules.is_none() && self.manual.is_none() {
            return Err("give --rules and/or --manual".into());
        }
        let records = read_record_dir(&self.records)?;
        Ok(GenContext::new(&load_rules(&self.rules)?, &load_rules(&self.manual)?, &records))
    }
}

fn hole_set(max_ops: usize, cache_path: &Option<PathBuf>) -> Res<HoleSet> {
    let grammar = GrammarConfig::with_max_ops(max_ops);
    let pruning = PruningConfig::default();
    Ok(match cache_path {
        Some(p) => cache::load_or_build(p, &grammar, &pruning)?,
        None => enumerate_hole_exprs(&grammar, &pruning),
    })
}

fn collect(out: &Path, per_op: usize, seed: u64, probes: bool) -> Res {
    let lib = Library::new();
    let report = collect_seeds(&lib, per_op, seed);
    let keep = |r: &Record| {
        lib.get(&r.api)
            .is_some_and(|op| op.category != Category::Probe || probes)
    };
    let records: Vec<Record> = report.records.into_iter().filter(keep).collect();
    write_records(&out.join("seeds.jsonl"), &records)?;
    println!("{} records", records.len());
    for (reason, n) in &report.skipped {
        println!("  skipped {reason:?}: {n}");
    }
    Ok(())
}

fn augment(records: &Path, out: &Path, target: usize, seconds: f64, seed: u64) -> Res {
    let lib = Library::new();
    let seeds = read_record_dir(records)?;
    let budget = AugmentBudget {
        target_records: target,
        wall_clock_limit: Duration::from_secs_f64(seconds),
        rng_seed: seed,
        ..AugmentBudget::default()
    };
    let groups = augment_all(&seeds, &budget, &lib);
    for (key, aug) in &groups {
        save_augmented(out, key, aug)?;
        println!("{key}: {} passing, {} counter", aug.passing.len(), aug.counter.len());
    }
    Ok(())
}

fn infer(records: &Path, out: &Path, timeout: f64, max_ops: usize, cache_path: &Option<PathBuf>, manual_out: &Option<PathBuf>) -> Res {
    let records = read_record_dir(records)?;
    let groups = group_records(&records);
    let source = ExprSource::new(Arc::new(hole_set(max_ops, cache_path)?));
    let cfg = InferConfig {
        timeout: Duration::from_secs_f64(timeout),
        max_ops,
        ..InferConfig::default()
    };
    let outcomes = infer_all(&source, &groups, &[], &cfg);
    let mut rules = Vec::new();
    for o in outcomes {
        match o.rule {
            Ok(r) => {
                println!("ok   {} ({:?}, {} constraints, {:.2?})", o.key, r.provenance, r.constraints.len(), o.elapsed);
                rules.push(r);
            }
            Err(e) => println!("fail {}: {e} ({:.2?})", o.key, o.elapsed),
        }
    }
    write_rulebook(out, &rules)?;
    println!("{} of {} partial operators have rules", rules.len(), groups.len());
    if let Some(path) = manual_out {
        let lib = Library::new();
        let mut manual = Vec::new();
        for g in &groups {
            if let Some(r) = manual_rule(&lib, &g.passing[0]) {
                manual.push(r?);
            }
        }
        write_rulebook(path, &manual)?;
    }
    Ok(())
}

fn main() -> Res {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Collect { out, per_op, seed, probes } => collect(&out, per_op, seed, probes),
        Cmd::Augment {
            records,
            out,
            target,
            seconds,
            seed,
        } => augment(&records, &out, target, seconds, seed),
        Cmd::Infer {
            records,
            out,
            timeout,
            max_ops,
            cache,
            manual_out,
        } => infer(&records, &out, timeout, max_ops, &cache, &manual_out),
        Cmd::Gen { rules, nodes, seed, out } => {
            let ctx = rules.context()?;
            let g = generate(
                &ctx,
                &GenConfig {
                    target_op_count: nodes,
                    seed,
                    ..GenConfig::default()
                },
            );
            let text = g.graph.to_text();
            match out {
                Some(p) => fs::write(p, text)?,
                None => print!("{text}"),
            }
            if !g.complete {
                eprintln!("only {} of {nodes} operators inserted", g.graph.len());
            }
            Ok(())
        }
        Cmd::Fuzz {
            rules,
            backend,
            tests,
            minutes,
            nodes,
            out,
            seed,
        } => {
            let ctx = rules.context()?;
            let mut be = backend.open()?;
            let cfg = CampaignConfig {
                tests,
                time_limit: minutes.map(|m| Duration::from_secs_f64(m * 60.0)),
                gen: GenConfig {
                    target_op_count: nodes,
                    ..GenConfig::default()
                },
                seed,
                out_dir: Some(out.clone()),
                stop_on_report: false,
            };
            let report = run_campaign(&ctx, &Library::new(), be.as_mut(), &cfg);
            fs::create_dir_all(&out)?;
            fs::write(out.join("report.txt"), report.to_text())?;
            fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
            print!("{}", report.to_text());
            if let Some(reason) = report.aborted {
                return Err(format!("campaign aborted: {reason}").into());
            }
            Ok(())
        }
        Cmd::Serve { bug_plan } => {
            let plan = match bug_plan {
                Some(p) => BugPlan::load(&p)?,
                None => BugPlan::empty(),
            };
            let mut be = BuiltinBackend::new(plan);
            serve(&mut be, io::stdin().lock(), io::stdout().lock())?;
            Ok(())
        }
        Cmd::Replay { case, backend } => {
            let mut be = backend.open()?;
            let (saved, v) = replay(&case, &Library::new(), be.as_mut())?;
            println!("saved: {} ({})", saved.kind, saved.detail);
            println!("now:   {} ({})", v.kind, v.detail);
            if v.kind != saved.kind {
                return Err("verdict changed".into());
            }
            Ok(())
        }
    }
}
