use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use rulefuzz::augment::{augment_all, AugmentBudget};
use rulefuzz::exprsynth::{enumerate_hole_exprs, GrammarConfig, HoleSet, PruningConfig};
use rulefuzz::fuzz::{run_campaign, CampaignConfig, CampaignReport};
use rulefuzz::generate::{generate as gen_graph, GenConfig, GenContext};
use rulefuzz::graphir::Graph as CoreGraph;
use rulefuzz::opref::runner::ExternalBackend;
use rulefuzz::opref::{Backend, BugPlan, BuiltinBackend, Library};
use rulefuzz::ruleinfer::{group_records, infer_all, manual_rule, ExprSource, InferConfig, OperatorRule};
use rulefuzz::trace::{self, collect_seeds as core_collect};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

/// One simplified operator invocation.
#[pyclass(module = "rulefuzz_py", frozen, from_py_object)]
#[derive(Clone)]
struct Record {
    inner: trace::Record,
}

#[pymethods]
impl Record {
    #[staticmethod]
    fn from_line(line: &str) -> PyResult<Record> {
        let inner = trace::Record::from_line(line).map_err(value_err)?;
        inner.check().map_err(value_err)?;
        Ok(Record { inner })
    }

    fn to_line(&self) -> String {
        self.inner.to_line()
    }

    #[getter]
    fn api(&self) -> String {
        self.inner.api.clone()
    }

    #[getter]
    fn valid(&self) -> bool {
        self.inner.valid
    }

    /// Input types as strings such as `f32[3,2]`.
    #[getter]
    fn inputs(&self) -> Vec<String> {
        self.inner.inputs.iter().map(|t| t.to_string()).collect()
    }

    #[getter]
    fn outputs(&self) -> Vec<String> {
        self.inner.outputs.iter().map(|t| t.to_string()).collect()
    }

    /// Symbol names and values in rule order.
    fn env(&self) -> (Vec<String>, Vec<i64>) {
        let e = self.inner.env();
        (e.names, e.values)
    }

    fn __repr__(&self) -> String {
        format!("Record({})", self.inner.to_line())
    }
}

fn unwrap_records(records: &[Record]) -> Vec<trace::Record> {
    records.iter().map(|r| r.inner.clone()).collect()
}

fn wrap_records(records: Vec<trace::Record>) -> Vec<Record> {
    records.into_iter().map(|inner| Record { inner }).collect()
}

#[pyfunction]
fn read_records(path: PathBuf) -> PyResult<Vec<Record>> {
    let rs = if path.is_dir() {
        trace::read_record_dir(&path)
    } else {
        trace::read_records(&path)
    };
    rs.map(wrap_records).map_err(io_err)
}

#[pyfunction]
fn write_records(path: PathBuf, records: Vec<Record>) -> PyResult<()> {
    trace::write_records(&path, &unwrap_records(&records)).map_err(io_err)
}

/// Seed records from the reference operators.
#[pyfunction]
#[pyo3(signature = (per_op = 12, seed = 1))]
fn collect_seeds(per_op: usize, seed: u64) -> Vec<Record> {
    wrap_records(core_collect(&Library::new(), per_op, seed).records)
}

/// Passing and counter examples grown from seeds, flattened.
#[pyfunction]
#[pyo3(signature = (seeds, target = 100, seconds = 10.0, seed = 0))]
fn augment(py: Python<'_>, seeds: Vec<Record>, target: usize, seconds: f64, seed: u64) -> Vec<Record> {
    let seeds = unwrap_records(&seeds);
    let out = py.detach(|| {
        let budget = AugmentBudget {
            target_records: target,
            wall_clock_limit: Duration::from_secs_f64(seconds),
            rng_seed: seed,
            ..AugmentBudget::default()
        };
        let mut out = Vec::new();
        for (_, a) in augment_all(&seeds, &budget, &Library::new()) {
            out.extend(a.passing);
            out.extend(a.counter);
        }
        out
    });
    wrap_records(out)
}

/// Input constraints and shape propagation of one partial operator.
#[pyclass(module = "rulefuzz_py", frozen, from_py_object)]
#[derive(Clone)]
struct Rule {
    inner: OperatorRule,
}

#[pymethods]
impl Rule {
    #[staticmethod]
    fn from_line(line: &str) -> PyResult<Rule> {
        OperatorRule::from_line(line).map(|inner| Rule { inner }).map_err(value_err)
    }

    fn to_line(&self) -> String {
        self.inner.to_line()
    }

    #[getter]
    fn api(&self) -> String {
        self.inner.key.api.clone()
    }

    #[getter]
    fn key(&self) -> String {
        self.inner.key.id()
    }

    #[getter]
    fn symbols(&self) -> Vec<String> {
        self.inner.symbols.clone()
    }

    #[getter]
    fn provenance(&self) -> String {
        match serde_json::to_value(self.inner.provenance) {
            Ok(serde_json::Value::String(s)) => s,
            _ => format!("{:?}", self.inner.provenance),
        }
    }

    #[getter]
    fn constraints(&self) -> Vec<String> {
        self.inner
            .constraints
            .iter()
            .map(|p| p.to_string_named(&self.inner.symbols))
            .collect()
    }

    /// One expression per output dimension.
    #[getter]
    fn shape(&self) -> Vec<Vec<String>> {
        self.inner
            .shape_prop
            .iter()
            .map(|dims| dims.iter().map(|e| e.to_string_named(&self.inner.symbols)).collect())
            .collect()
    }

    fn accepts(&self, env: Vec<i64>) -> PyResult<bool> {
        self.check_arity(&env)?;
        Ok(self.inner.accepts(&env))
    }

    /// Output shapes, or None when a dimension is undefined or negative.
    fn propagate(&self, env: Vec<i64>) -> PyResult<Option<Vec<Vec<i64>>>> {
        self.check_arity(&env)?;
        Ok(self.inner.propagate(&env))
    }

    fn __repr__(&self) -> String {
        format!("Rule({})", self.inner.to_line())
    }
}

impl Rule {
    fn check_arity(&self, env: &[i64]) -> PyResult<()> {
        if env.len() != self.inner.symbols.len() {
            return Err(value_err(format!(
                "expected {} symbol values, got {}",
                self.inner.symbols.len(),
                env.len()
            )));
        }
        Ok(())
    }
}

fn unwrap_rules(rules: &[Rule]) -> Vec<OperatorRule> {
    rules.iter().map(|r| r.inner.clone()).collect()
}

/// Pruned expression templates; build once and reuse across inference calls.
#[pyclass(module = "rulefuzz_py", frozen)]
struct Templates {
    set: Arc<HoleSet>,
}

#[pymethods]
impl Templates {
    #[new]
    #[pyo3(signature = (max_ops = 3))]
    fn new(py: Python<'_>, max_ops: usize) -> PyResult<Templates> {
        if max_ops > 5 {
            return Err(value_err("max_ops must be at most 5"));
        }
        let set = py.detach(|| enumerate_hole_exprs(&GrammarConfig::with_max_ops(max_ops), &PruningConfig::default()));
        Ok(Templates { set: Arc::new(set) })
    }

    #[getter]
    fn max_ops(&self) -> usize {
        self.set.grammar().max_ops
    }

    fn __len__(&self) -> usize {
        self.set.len()
    }

    fn count_with_holes(&self, holes: usize) -> usize {
        self.set.count_with_holes(holes)
    }
}

/// Outcome of inference for one partial operator.
#[pyclass(module = "rulefuzz_py", frozen, get_all)]
struct Outcome {
    api: String,
    key: String,
    rule: Option<Rule>,
    error: Option<String>,
    seconds: f64,
}

/// Infers a rule for every partial operator found in `records`.
#[pyfunction]
#[pyo3(signature = (records, templates, timeout = 2.0))]
fn infer_rules(py: Python<'_>, records: Vec<Record>, templates: &Templates, timeout: f64) -> Vec<Outcome> {
    let records = unwrap_records(&records);
    let set = templates.set.clone();
    let outcomes = py.detach(|| {
        let cfg = InferConfig {
            timeout: Duration::from_secs_f64(timeout),
            max_ops: set.grammar().max_ops,
            ..InferConfig::default()
        };
        let source = ExprSource::new(set);
        infer_all(&source, &group_records(&records), &[], &cfg)
    });
    outcomes
        .into_iter()
        .map(|o| Outcome {
            api: o.key.api.clone(),
            key: o.key.id(),
            error: o.rule.as_ref().err().map(|e| e.to_string()),
            rule: o.rule.ok().map(|inner| Rule { inner }),
            seconds: o.elapsed.as_secs_f64(),
        })
        .collect()
}

/// Ground-truth rules of the reference operators for the keys in `records`.
#[pyfunction]
fn manual_rules(records: Vec<Record>) -> PyResult<Vec<Rule>> {
    let lib = Library::new();
    let mut out = Vec::new();
    for g in group_records(&unwrap_records(&records)) {
        if let Some(r) = manual_rule(&lib, &g.passing[0]) {
            out.push(Rule {
                inner: r.map_err(value_err)?,
            });
        }
    }
    Ok(out)
}

#[pyfunction]
fn read_rulebook(path: PathBuf) -> PyResult<Vec<Rule>> {
    rulefuzz::ruleinfer::read_rulebook(&path)
        .map(|rs| rs.into_iter().map(|inner| Rule { inner }).collect())
        .map_err(io_err)
}

#[pyfunction]
fn write_rulebook(path: PathBuf, rules: Vec<Rule>) -> PyResult<()> {
    rulefuzz::ruleinfer::write_rulebook(&path, &unwrap_rules(&rules)).map_err(io_err)
}

#[pyclass(module = "rulefuzz_py", frozen)]
struct Graph {
    inner: CoreGraph,
}

#[pymethods]
impl Graph {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Graph> {
        CoreGraph::parse(text).map(|inner| Graph { inner }).map_err(value_err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn apis(&self) -> Vec<String> {
        self.inner.instructions.iter().map(|i| i.api.clone()).collect()
    }

    fn input_types(&self) -> Vec<String> {
        self.inner.input_types().iter().map(|t| t.to_string()).collect()
    }

    fn output_types(&self) -> Vec<String> {
        self.inner.output_types().iter().map(|t| t.to_string()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __str__(&self) -> String {
        self.inner.to_text()
    }
}

#[pyfunction]
#[pyo3(signature = (records, rules = Vec::new(), manual = Vec::new(), nodes = 5, seed = 0))]
fn generate(records: Vec<Record>, rules: Vec<Rule>, manual: Vec<Rule>, nodes: usize, seed: u64) -> Graph {
    let ctx = GenContext::new(&unwrap_rules(&rules), &unwrap_rules(&manual), &unwrap_records(&records));
    let cfg = GenConfig {
        target_op_count: nodes,
        seed,
        ..GenConfig::default()
    };
    Graph {
        inner: gen_graph(&ctx, &cfg).graph,
    }
}

/// Summary of a fuzzing campaign.
#[pyclass(module = "rulefuzz_py", frozen)]
struct Report {
    inner: CampaignReport,
}

#[pymethods]
impl Report {
    #[getter]
    fn tests(&self) -> usize {
        self.inner.tests
    }

    #[getter]
    fn validity_rate(&self) -> f64 {
        self.inner.validity_rate()
    }

    #[getter]
    fn reports(&self) -> usize {
        self.inner.reports()
    }

    #[getter]
    fn aborted(&self) -> Option<String> {
        self.inner.aborted.clone()
    }

    /// Verdict name to count.
    #[getter]
    fn histogram(&self) -> BTreeMap<String, usize> {
        self.inner.histogram.iter().map(|(k, v)| (k.name().to_string(), *v)).collect()
    }

    /// Unique findings as `(kind, key, test, hits, path)`.
    #[getter]
    fn findings(&self) -> Vec<(String, String, usize, usize, Option<String>)> {
        self.inner
            .findings
            .iter()
            .map(|f| {
                (
                    f.kind.name().to_string(),
                    f.key.clone(),
                    f.test,
                    f.hits,
                    f.path.as_ref().map(|p| p.display().to_string()),
                )
            })
            .collect()
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("report serializes")
    }

    fn __str__(&self) -> String {
        self.inner.to_text()
    }
}

/// Runs a differential campaign. `backend` is `builtin` or `cmd:<program>`.
#[pyfunction]
#[pyo3(signature = (records, rules = Vec::new(), manual = Vec::new(), tests = 1000, seed = 0, backend = "builtin", bug_plan = None, out_dir = None, nodes = 5))]
#[allow(clippy::too_many_arguments)]
fn fuzz(
    py: Python<'_>,
    records: Vec<Record>,
    rules: Vec<Rule>,
    manual: Vec<Rule>,
    tests: usize,
    seed: u64,
    backend: &str,
    bug_plan: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    nodes: usize,
) -> PyResult<Report> {
    let mut be: Box<dyn Backend + Send> = if backend == "builtin" {
        let plan = match &bug_plan {
            Some(p) => BugPlan::load(p).map_err(io_err)?,
            None => BugPlan::empty(),
        };
        Box::new(BuiltinBackend::new(plan))
    } else {
        if bug_plan.is_some() {
            return Err(value_err("bug_plan only applies to the builtin backend"));
        }
        Box::new(
            ExternalBackend::from_spec(backend, Duration::from_secs(10))
                .ok_or_else(|| value_err(format!("unknown backend `{backend}`")))?,
        )
    };
    let ctx = GenContext::new(&unwrap_rules(&rules), &unwrap_rules(&manual), &unwrap_records(&records));
    let cfg = CampaignConfig {
        tests,
        seed,
        out_dir,
        gen: GenConfig {
            target_op_count: nodes,
            ..GenConfig::default()
        },
        ..CampaignConfig::default()
    };
    let inner = py.detach(|| run_campaign(&ctx, &Library::new(), be.as_mut(), &cfg));
    Ok(Report { inner })
}

#[pymodule]
fn rulefuzz_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Record>()?;
    m.add_class::<Rule>()?;
    m.add_class::<Templates>()?;
    m.add_class::<Outcome>()?;
    m.add_class::<Graph>()?;
    m.add_class::<Report>()?;
    m.add_function(wrap_pyfunction!(read_records, m)?)?;
    m.add_function(wrap_pyfunction!(write_records, m)?)?;
    m.add_function(wrap_pyfunction!(collect_seeds, m)?)?;
    m.add_function(wrap_pyfunction!(augment, m)?)?;
    m.add_function(wrap_pyfunction!(infer_rules, m)?)?;
    m.add_function(wrap_pyfunction!(manual_rules, m)?)?;
    m.add_function(wrap_pyfunction!(read_rulebook, m)?)?;
    m.add_function(wrap_pyfunction!(write_rulebook, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(fuzz, m)?)?;
    Ok(())
}
