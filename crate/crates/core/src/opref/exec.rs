//! Graph executors: a plain interpreter and an optimizing evaluator that
//! fuses elementwise chains, reorders reductions and applies seeded bugs.

use std::collections::HashMap;

use thiserror::Error;

use super::bugplan::{BugPlan, Corruption};
use super::{KernelCtx, Library, OpError};
use crate::graphir::{Graph, ValueId};
use crate::tensor::{DType, Tensor, TensorType};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("instruction {inst} ({api}) rejected its arguments: {msg}")]
    Validity { inst: usize, api: String, msg: String },
    #[error("instruction {inst} ({api}) produced {got}, graph declares {want}")]
    TypeMismatch {
        inst: usize,
        api: String,
        got: String,
        want: String,
    },
    #[error("fault: {0}")]
    Fault(String),
    #[error("not implemented: {0}")]
    NotImplemented(String),
    #[error("bad graph inputs: {0}")]
    Inputs(String),
    /// The backend process is gone (could not start or exited).
    #[error("backend lost: {0}")]
    BackendLost(String),
}

impl ExecError {
    /// Rejections a test case should be discarded for rather than reported.
    pub fn is_validity(&self) -> bool {
        matches!(self, ExecError::Validity { .. } | ExecError::TypeMismatch { .. } | ExecError::Inputs(_))
    }

    fn from_op(inst: usize, api: &str, e: OpError) -> ExecError {
        match e {
            OpError::Validity(msg) => ExecError::Validity {
                inst,
                api: api.to_string(),
                msg,
            },
            OpError::Fault(msg) => ExecError::Fault(format!("instruction {inst} ({api}): {msg}")),
            OpError::NotImplemented(msg) => ExecError::NotImplemented(msg),
        }
    }
}

/// A system under test that runs whole graphs.
pub trait Backend {
    fn name(&self) -> String;
    fn run(&mut self, graph: &Graph, inputs: &[Tensor]) -> Result<Vec<Tensor>, ExecError>;
}

/// The in-process optimizing evaluator.
#[derive(Clone)]
pub struct BuiltinBackend {
    lib: Library,
    plan: BugPlan,
}

impl BuiltinBackend {
    pub fn new(plan: BugPlan) -> BuiltinBackend {
        BuiltinBackend {
            lib: Library::new(),
            plan,
        }
    }

    pub fn plan(&self) -> &BugPlan {
        &self.plan
    }
}

impl Backend for BuiltinBackend {
    fn name(&self) -> String {
        if self.plan.is_empty() {
            "builtin".into()
        } else {
            format!("builtin+{}bugs", self.plan.bugs.len())
        }
    }

    fn run(&mut self, graph: &Graph, inputs: &[Tensor]) -> Result<Vec<Tensor>, ExecError> {
        execute_optimized(&self.lib, graph, inputs, &self.plan)
    }
}

/// The reference interpreter as a backend (used when serving the runner
/// protocol and in protocol tests).
#[derive(Default)]
pub struct EagerBackend {
    lib: Library,
}


impl Backend for EagerBackend {
    fn name(&self) -> String {
        "eager".into()
    }

    fn run(&mut self, graph: &Graph, inputs: &[Tensor]) -> Result<Vec<Tensor>, ExecError> {
        execute_eager(&self.lib, graph, inputs)
    }
}

/// Value store with explicit buffers so in-place results can alias.
struct Store {
    buffers: Vec<Tensor>,
    slot: HashMap<ValueId, usize>,
}

impl Store {
    fn new(graph: &Graph, inputs: &[Tensor]) -> Result<Store, ExecError> {
        if inputs.len() != graph.inputs.len() {
            return Err(ExecError::Inputs(format!(
                "graph takes {} inputs, got {}",
                graph.inputs.len(),
                inputs.len()
            )));
        }
        let mut s = Store {
            buffers: Vec::new(),
            slot: HashMap::new(),
        };
        for (&v, t) in graph.inputs.iter().zip(inputs) {
            let want = graph.ty(v).expect("input typed");
            if &t.ty != want || t.ty.numel() != Some(t.data.len() as i64) {
                return Err(ExecError::Inputs(format!("%{v} expects {want}, got {}", t.ty)));
            }
            s.bind_new(v, t.clone());
        }
        Ok(s)
    }

    fn get(&self, v: ValueId) -> &Tensor {
        &self.buffers[self.slot[&v]]
    }

    fn bind_new(&mut self, v: ValueId, t: Tensor) {
        self.slot.insert(v, self.buffers.len());
        self.buffers.push(t);
    }

    fn outputs(&self, graph: &Graph) -> Vec<Tensor> {
        graph.outputs.iter().map(|&v| self.get(v).clone()).collect()
    }
}

pub fn execute_eager(lib: &Library, graph: &Graph, inputs: &[Tensor]) -> Result<Vec<Tensor>, ExecError> {
    let mut store = Store::new(graph, inputs)?;
    for (k, inst) in graph.instructions.iter().enumerate() {
        let args: Vec<Tensor> = inst.operands.iter().map(|&v| store.get(v).clone()).collect();
        let outs = lib
            .invoke_with(&inst.api, &args, &inst.attrs, KernelCtx::default())
            .map_err(|e| ExecError::from_op(k, &inst.api, e))?;
        let got: Vec<&TensorType> = outs.iter().map(|t| &t.ty).collect();
        let want: Vec<&TensorType> = inst.results.iter().map(|&r| graph.ty(r).expect("result typed")).collect();
        if got != want {
            let show = |ts: &[&TensorType]| ts.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ");
            return Err(ExecError::TypeMismatch {
                inst: k,
                api: inst.api.clone(),
                got: show(&got),
                want: show(&want),
            });
        }
        if inst.in_place {
            let buf = store.slot[&inst.operands[0]];
            store.buffers[buf] = outs.into_iter().next().unwrap();
            store.slot.insert(inst.results[0], buf);
        } else {
            for (&r, t) in inst.results.iter().zip(outs) {
                store.bind_new(r, t);
            }
        }
    }
    Ok(store.outputs(graph))
}

/// For each instruction, whether it is fused into the next one: a unary
/// pointwise producer whose single result feeds only the adjacent pointwise
/// consumer.
fn fusion_plan(lib: &Library, graph: &Graph, plan: &BugPlan) -> Vec<bool> {
    let n = graph.instructions.len();
    let pointwise = |k: usize| {
        let inst = &graph.instructions[k];
        !inst.in_place
            && inst.results.len() == 1
            && inst.operands.len() == 1
            && lib.get(&inst.api).is_some_and(|op| op.pointwise.is_some())
    };
    (0..n)
        .map(|k| {
            if k + 1 >= n || !pointwise(k) || !pointwise(k + 1) || !plan.triggered(graph, k).is_empty() {
                return false;
            }
            let r = graph.instructions[k].results[0];
            let uses: Vec<usize> = graph.uses(r).collect();
            uses == [k + 1] && !graph.outputs.contains(&r)
        })
        .collect()
}

pub fn execute_optimized(
    lib: &Library,
    graph: &Graph,
    inputs: &[Tensor],
    plan: &BugPlan,
) -> Result<Vec<Tensor>, ExecError> {
    let mut store = Store::new(graph, inputs)?;
    let fused = fusion_plan(lib, graph, plan);
    let ctx = KernelCtx { reverse_reduce: true };
    let mut k = 0;
    while k < graph.instructions.len() {
        let start = k;
        while fused[k] {
            k += 1;
        }
        let inst = &graph.instructions[k];
        let outs = if k > start {
            run_fused(lib, graph, &store, start, k)?
        } else {
            let args: Vec<Tensor> = inst.operands.iter().map(|&v| store.get(v).clone()).collect();
            lib.invoke_with(&inst.api, &args, &inst.attrs, ctx)
                .map_err(|e| ExecError::from_op(k, &inst.api, e))?
        };
        let mut outs = outs;
        let mut alias = inst.in_place;
        let mut clobber = false;
        for (_, c) in plan.triggered(graph, k) {
            match c {
                Corruption::Crash => {
                    return Err(ExecError::Fault(format!("instruction {k} ({}): backend abort", inst.api)));
                }
                Corruption::WrongElement => wrong_element(&mut outs[0]),
                Corruption::WrongShape => wrong_shape(&mut outs[0]),
                Corruption::InplaceAlias => {
                    if inst.in_place {
                        alias = false;
                    } else {
                        clobber = !inst.operands.is_empty();
                    }
                }
            }
        }
        if clobber {
            let buf = store.slot[&inst.operands[0]];
            let target = &store.buffers[buf];
            let src = &outs[0].data;
            let data = (0..target.data.len())
                .map(|j| if src.is_empty() { 0.0 } else { src[j % src.len()] })
                .collect();
            store.buffers[buf] = Tensor::new(target.ty.clone(), data);
        }
        if alias {
            let buf = store.slot[&inst.operands[0]];
            store.buffers[buf] = outs.into_iter().next().unwrap();
            store.slot.insert(inst.results[0], buf);
        } else {
            for (&r, t) in inst.results.iter().zip(outs) {
                store.bind_new(r, t);
            }
        }
        k += 1;
    }
    Ok(store.outputs(graph))
}

/// Runs instructions `start..=end` as one composed map without rounding
/// the intermediates.
fn run_fused(lib: &Library, graph: &Graph, store: &Store, start: usize, end: usize) -> Result<Vec<Tensor>, ExecError> {
    let x = store.get(graph.instructions[start].operands[0]);
    let mut ty = x.ty.clone();
    let mut fns = Vec::new();
    for k in start..=end {
        let inst = &graph.instructions[k];
        let out = lib
            .infer_types(&inst.api, std::slice::from_ref(&ty), &inst.attrs)
            .map_err(|e| ExecError::from_op(k, &inst.api, e))?;
        ty = out.into_iter().next().unwrap();
        let op = lib.get(&inst.api).expect("fusible op exists");
        fns.push((op.pointwise.unwrap(), &inst.attrs));
    }
    let data = x
        .data
        .iter()
        .map(|&v| fns.iter().fold(v, |acc, (f, a)| f(acc, a)))
        .collect();
    Ok(vec![Tensor::new(ty, data)])
}

fn wrong_element(t: &mut Tensor) {
    if t.data.is_empty() {
        return;
    }
    let j = 2 % t.data.len();
    let v = t.data[j];
    let bumped = if t.ty.dtype == DType::Bool { 1.0 - v } else { v + 1.0 };
    t.data[j] = t.ty.dtype.round(bumped);
}

fn wrong_shape(t: &mut Tensor) {
    let mut shape = t.ty.shape.clone();
    match shape.last().copied() {
        None => shape.push(1),
        Some(0) => *shape.last_mut().unwrap() = 1,
        Some(d) => *shape.last_mut().unwrap() = d - 1,
    }
    let n = TensorType::new(t.ty.dtype, shape.clone()).numel().unwrap() as usize;
    let last = *t.ty.shape.last().unwrap_or(&1) as usize;
    let new_last = *shape.last().unwrap() as usize;
    let rows = if new_last == 0 { 0 } else { n / new_last };
    let mut data = Vec::with_capacity(n);
    for r in 0..rows {
        for c in 0..new_last {
            data.push(if c < last { t.data[r * last + c] } else { 0.0 });
        }
    }
    *t = Tensor::new(TensorType::new(t.ty.dtype, shape), data);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opref::BugSpec;
    use rand::SeedableRng;

    fn run_both(text: &str, plan: &BugPlan) -> (Result<Vec<Tensor>, ExecError>, Result<Vec<Tensor>, ExecError>) {
        let lib = Library::new();
        let g = Graph::parse(text).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let inputs: Vec<Tensor> = g.input_types().iter().map(|t| Tensor::random(t, 5.0, 10, &mut rng)).collect();
        (execute_eager(&lib, &g, &inputs), execute_optimized(&lib, &g, &inputs, plan))
    }

    #[test]
    fn pool_shape_and_validity() {
        let (e, _) = run_both(
            "%0: f32[3,3,3] = input\n%1: f32[3,2,2] = avg_pool2d(%0) {kh=2, kw=2, stride=1, pad=0, ceil=false}\nreturn %1\n",
            &BugPlan::empty(),
        );
        assert_eq!(e.unwrap()[0].ty, TensorType::f32(&[3, 2, 2]));
        let (e, _) = run_both(
            "%0: f32[3,3,3] = input\n%1: f32[3,0,0] = avg_pool2d(%0) {kh=4, kw=4, stride=1, pad=0, ceil=false}\nreturn %1\n",
            &BugPlan::empty(),
        );
        assert!(matches!(e, Err(ExecError::Validity { inst: 0, .. })));
        let (e, o) = run_both("return\n", &BugPlan::empty());
        assert!(e.unwrap().is_empty() && o.unwrap().is_empty());
    }

    #[test]
    fn fused_chain_stays_close() {
        let text = "%0: f32[4,5] = input\n%1: f32[4,5] = tanh(%0)\n%2: f32[4,5] = reciprocal(%1)\n%3: f32[4,5] = leaky_relu(%2) {slope=0.1}\n%4: f32[] = sum(%3)\nreturn %4, %3\n";
        let (e, o) = run_both(text, &BugPlan::empty());
        let (e, o) = (e.unwrap(), o.unwrap());
        for (a, b) in e.iter().zip(&o) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn wrong_element_after_concat_reciprocal() {
        let text = "%0: f32[2,2] = input\n%1: f32[2,2] = input\n%2: f32[4,2] = concat2(%0, %1) {dim=0}\n%3: f32[4,2] = reciprocal(%2)\nreturn %3\n";
        let plan = BugPlan {
            seed: 0,
            bugs: vec![BugSpec::new("concat2>reciprocal", Corruption::WrongElement)],
        };
        let (e, o) = run_both(text, &plan);
        let (e, o) = (e.unwrap(), o.unwrap());
        let diffs: Vec<usize> = (0..8).filter(|&j| (e[0].data[j] - o[0].data[j]).abs() > 1e-3).collect();
        assert_eq!(diffs, vec![2]);
    }

    #[test]
    fn crash_on_unfold_abs() {
        let text = "%0: f32[6] = input\n%1: f32[3,2] = unfold(%0) {dim=0, size=2, step=2}\n%2: f32[3,2] = abs_(%1) inplace\nreturn %2\n";
        let plan = BugPlan {
            seed: 0,
            bugs: vec![BugSpec::new("*-unfold-abs_", Corruption::Crash)],
        };
        let (e, o) = run_both(text, &plan);
        assert!(e.is_ok());
        assert!(matches!(o, Err(ExecError::Fault(_))));
    }

    #[test]
    fn in_place_aliasing_is_observable() {
        // %1 is updated in place, so the later read of %1 sees abs values
        let text = "%0: f32[2,3] = input\n%1: f32[2,3] = relu(%0)\n%2: f32[2,3] = add(%0, %0)\n%3: f32[2,3] = abs_(%0) inplace\n%4: f32[2,3] = sub(%0, %2)\nreturn %4, %1\n";
        let lib = Library::new();
        let g = Graph::parse(text).unwrap();
        let x = Tensor::new(TensorType::f32(&[2, 3]), vec![-1.0, 2.0, -3.0, 4.0, -5.0, 6.0]);
        let e = execute_eager(&lib, &g, std::slice::from_ref(&x)).unwrap();
        assert_eq!(e[0].data, vec![3.0, -2.0, 9.0, -4.0, 15.0, -6.0]);
        let plan = BugPlan {
            seed: 0,
            bugs: vec![BugSpec::new("abs_", Corruption::InplaceAlias)],
        };
        let o = execute_optimized(&lib, &g, &[x], &plan).unwrap();
        assert_eq!(o[0].data, vec![1.0, -2.0, 3.0, -4.0, 5.0, -6.0]);
    }

    #[test]
    fn wrong_shape_trims_last_dim() {
        let mut t = Tensor::new(TensorType::f32(&[2, 3]), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        wrong_shape(&mut t);
        assert_eq!(t.ty.shape, vec![2, 2]);
        assert_eq!(t.data, vec![1.0, 2.0, 4.0, 5.0]);
        let mut s = Tensor::scalar(DType::F32, 4.0);
        wrong_shape(&mut s);
        assert_eq!(s.ty.shape, vec![1]);
    }
}
