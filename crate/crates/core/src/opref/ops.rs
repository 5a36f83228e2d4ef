//! Operator catalog: ground-truth shape functions, kernels, invocation
//! samplers and hand-written rules.

use std::cell::Cell;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::kernels::{self, Pool};
use super::{attr_bool, attr_float, attr_int, attr_list, attr_str, KernelCtx, OpError};
use crate::tensor::{DType, Tensor, TensorType};
use crate::trace::{input_dim_name, AttrValue, Attrs, Record};

pub type InferFn = fn(&[TensorType], &Attrs) -> Result<Vec<TensorType>, OpError>;
pub type KernelFn = fn(&[Tensor], &Attrs, KernelCtx) -> Result<Vec<Tensor>, OpError>;
pub type PointwiseFn = fn(f64, &Attrs) -> f64;
pub type SampleFn = fn(&mut ChaCha8Rng) -> (Vec<TensorType>, Attrs);
pub type ManualFn = fn(&Record) -> ManualSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    /// Deterministic, value-independent, rule-describable.
    Standard,
    /// Fails the trace filters on purpose.
    Hostile,
    /// Valid shapes follow a pattern outside the grammar.
    Probe,
}

/// A hand-written rule in textual form over the record's symbol names:
/// predicates like `0 < kh` and one expression per output dimension.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManualSpec {
    pub constraints: Vec<String>,
    pub shapes: Vec<Vec<String>>,
}

#[derive(Clone)]
pub struct RefOperator {
    pub name: &'static str,
    pub arity: usize,
    pub in_place: bool,
    pub category: Category,
    /// Validity check plus output types; absent when outputs depend on values.
    pub infer: Option<InferFn>,
    pub kernel: KernelFn,
    /// Scalar map for unary elementwise operators (used by fusion).
    pub pointwise: Option<PointwiseFn>,
    pub sample: SampleFn,
    pub manual: Option<ManualFn>,
}

impl std::fmt::Debug for RefOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RefOperator")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("category", &self.category)
            .finish()
    }
}

fn bad(msg: impl Into<String>) -> OpError {
    OpError::Validity(msg.into())
}

fn need_rank(t: &TensorType, ranks: &[usize]) -> Result<(), OpError> {
    if ranks.contains(&t.rank()) {
        Ok(())
    } else {
        Err(bad(format!("rank {} not in {ranks:?}", t.rank())))
    }
}

fn need_float(t: &TensorType) -> Result<(), OpError> {
    if t.dtype.is_float() {
        Ok(())
    } else {
        Err(bad(format!("{} is not a float type", t.dtype)))
    }
}

fn need_numeric(t: &TensorType) -> Result<(), OpError> {
    if t.dtype != DType::Bool {
        Ok(())
    } else {
        Err(bad("bool tensors are not accepted"))
    }
}

fn dim_attr(attrs: &Attrs, rank: usize) -> Result<usize, OpError> {
    let d = attr_int(attrs, "dim")?;
    if d < 0 || d as usize >= rank {
        return Err(bad(format!("dim {d} out of range for rank {rank}")));
    }
    Ok(d as usize)
}

fn i(t: usize, d: usize) -> String {
    input_dim_name(t, d)
}

fn identity_shape(r: &Record, t: usize) -> Vec<String> {
    (0..r.inputs[t].rank()).map(|d| i(t, d)).collect()
}

fn dims(rng: &mut ChaCha8Rng, rank: usize, lo: i64, hi: i64) -> Vec<i64> {
    (0..rank).map(|_| rng.gen_range(lo..=hi)).collect()
}

fn float_type(rng: &mut ChaCha8Rng) -> DType {
    if rng.gen_bool(0.8) {
        DType::F32
    } else {
        DType::F64
    }
}

fn attrs_of(items: &[(&str, AttrValue)]) -> Attrs {
    items.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn checked(op: &str, infer: InferFn, inputs: &[Tensor], attrs: &Attrs) -> Result<Vec<TensorType>, OpError> {
    let types: Vec<TensorType> = inputs.iter().map(|t| t.ty.clone()).collect();
    infer(&types, attrs).map_err(|e| match e {
        OpError::Validity(m) => OpError::Validity(format!("{op}: {m}")),
        other => other,
    })
}

// ---- unary elementwise ----

fn infer_unary_any(x: &[TensorType], _: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_rank(&x[0], &[0, 1, 2, 3, 4])?;
    need_numeric(&x[0])?;
    Ok(vec![x[0].clone()])
}

fn infer_unary_float(x: &[TensorType], a: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_float(&x[0])?;
    infer_unary_any(x, a)
}

fn infer_leaky(x: &[TensorType], a: &Attrs) -> Result<Vec<TensorType>, OpError> {
    attr_float(a, "slope")?;
    infer_unary_float(x, a)
}

fn pw_relu(v: f64, _: &Attrs) -> f64 {
    v.max(0.0)
}
fn pw_abs(v: f64, _: &Attrs) -> f64 {
    v.abs()
}
fn pw_reciprocal(v: f64, _: &Attrs) -> f64 {
    1.0 / v
}
fn pw_tanh(v: f64, _: &Attrs) -> f64 {
    v.tanh()
}
fn pw_leaky(v: f64, a: &Attrs) -> f64 {
    let slope = a.get("slope").and_then(|s| s.as_float()).unwrap_or(0.01);
    if v >= 0.0 {
        v
    } else {
        v * slope
    }
}

macro_rules! unary_kernel {
    ($kname:ident, $name:expr, $infer:ident, $pw:ident) => {
        fn $kname(x: &[Tensor], a: &Attrs, _: KernelCtx) -> Result<Vec<Tensor>, OpError> {
            checked($name, $infer, x, a)?;
            Ok(vec![kernels::map1(&x[0], |v| $pw(v, a))])
        }
    };
}

unary_kernel!(k_relu, "relu", infer_unary_any, pw_relu);
unary_kernel!(k_abs, "abs", infer_unary_any, pw_abs);
unary_kernel!(k_reciprocal, "reciprocal", infer_unary_float, pw_reciprocal);
unary_kernel!(k_tanh, "tanh", infer_unary_float, pw_tanh);
unary_kernel!(k_leaky, "leaky_relu", infer_leaky, pw_leaky);

fn sample_unary_r14(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let r = rng.gen_range(1..=4);
    let dt = if rng.gen_bool(0.2) { DType::I32 } else { float_type(rng) };
    (vec![TensorType::new(dt, dims(rng, r, 1, 6))], Attrs::new())
}

fn sample_unary_float(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let r = rng.gen_range(2..=3);
    (vec![TensorType::new(float_type(rng), dims(rng, r, 1, 6))], Attrs::new())
}

fn sample_leaky(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let (t, _) = sample_unary_float(rng);
    let slope = [0.01, 0.1, 0.2, 0.5][rng.gen_range(0..4)];
    (t, attrs_of(&[("slope", AttrValue::Float(slope))]))
}

fn manual_identity(r: &Record) -> ManualSpec {
    ManualSpec {
        constraints: vec![],
        shapes: vec![identity_shape(r, 0)],
    }
}

// ---- binary elementwise ----

fn infer_binary(x: &[TensorType], _: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_numeric(&x[0])?;
    if x[0].dtype != x[1].dtype {
        return Err(bad("dtype mismatch"));
    }
    if x[0].shape != x[1].shape {
        return Err(bad(format!("shape mismatch {:?} vs {:?}", x[0].shape, x[1].shape)));
    }
    Ok(vec![x[0].clone()])
}

macro_rules! binary_kernel {
    ($kname:ident, $name:expr, $f:expr) => {
        fn $kname(x: &[Tensor], a: &Attrs, _: KernelCtx) -> Result<Vec<Tensor>, OpError> {
            checked($name, infer_binary, x, a)?;
            Ok(vec![kernels::zip2(&x[0], &x[1], $f)])
        }
    };
}

binary_kernel!(k_add, "add", |a, b| a + b);
binary_kernel!(k_sub, "sub", |a, b| a - b);
binary_kernel!(k_mul, "mul", |a, b| a * b);
binary_kernel!(k_maximum, "maximum", f64::max);

fn sample_binary(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let r = rng.gen_range(1..=3);
    let dt = if rng.gen_bool(0.25) { DType::I32 } else { DType::F32 };
    let s = dims(rng, r, 1, 6);
    (vec![TensorType::new(dt, s.clone()), TensorType::new(dt, s)], Attrs::new())
}

fn sample_binary_float(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let r = rng.gen_range(1..=3);
    let s = dims(rng, r, 1, 6);
    (vec![TensorType::f32(&s), TensorType::f32(&s)], Attrs::new())
}

fn manual_binary(r: &Record) -> ManualSpec {
    let rank = r.inputs[0].rank();
    ManualSpec {
        constraints: (0..rank).map(|d| format!("0 = {} - {}", i(0, d), i(1, d))).collect(),
        shapes: vec![identity_shape(r, 0)],
    }
}

// ---- reductions and shape ops ----

fn infer_sum(x: &[TensorType], _: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_numeric(&x[0])?;
    need_rank(&x[0], &[1, 2, 3, 4])?;
    Ok(vec![TensorType::new(x[0].dtype, vec![])])
}

fn k_sum(x: &[Tensor], a: &Attrs, ctx: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    let out = checked("sum", infer_sum, x, a)?;
    let s = kernels::sum_values(x[0].data.iter().copied(), ctx);
    Ok(vec![Tensor::new(out[0].clone(), vec![s])])
}

fn sample_sum(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let r = rng.gen_range(1..=3);
    (vec![TensorType::new(float_type(rng), dims(rng, r, 1, 6))], Attrs::new())
}

fn manual_sum(_: &Record) -> ManualSpec {
    ManualSpec {
        constraints: vec![],
        shapes: vec![vec![]],
    }
}

fn infer_flatten(x: &[TensorType], _: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_rank(&x[0], &[1, 2, 3, 4])?;
    let n = x[0].numel().ok_or_else(|| bad("overflow"))?;
    Ok(vec![TensorType::new(x[0].dtype, vec![n])])
}

fn k_flatten(x: &[Tensor], a: &Attrs, _: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    let out = checked("flatten", infer_flatten, x, a)?;
    Ok(vec![Tensor::new(out[0].clone(), x[0].data.clone())])
}

fn sample_flatten(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let r = rng.gen_range(2..=4);
    (vec![TensorType::new(float_type(rng), dims(rng, r, 1, 5))], Attrs::new())
}

fn manual_flatten(r: &Record) -> ManualSpec {
    let rank = r.inputs[0].rank();
    let prod: Vec<String> = (0..rank).map(|d| i(0, d)).collect();
    ManualSpec {
        constraints: vec![],
        shapes: vec![vec![prod.join(" * ")]],
    }
}

fn infer_reshape(x: &[TensorType], a: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_rank(&x[0], &[1, 2, 3, 4])?;
    let shape = attr_list(a, "shape")?;
    if shape.is_empty() || shape.len() > 4 {
        return Err(bad("target rank must be 1..4"));
    }
    if shape.iter().any(|&s| s < 1) {
        return Err(bad("target extents must be positive"));
    }
    let target = shape.iter().try_fold(1i64, |acc, &s| acc.checked_mul(s));
    if target != x[0].numel() {
        return Err(bad("element count mismatch"));
    }
    Ok(vec![TensorType::new(x[0].dtype, shape.to_vec())])
}

fn k_reshape(x: &[Tensor], a: &Attrs, _: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    let out = checked("reshape", infer_reshape, x, a)?;
    Ok(vec![Tensor::new(out[0].clone(), x[0].data.clone())])
}

fn sample_reshape(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    match rng.gen_range(0..3) {
        0 => {
            let (p, q, s) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=4));
            let inp = vec![p * s, q];
            let target = vec![p, s * q];
            (vec![TensorType::f32(&inp)], attrs_of(&[("shape", AttrValue::IntList(target))]))
        }
        1 => {
            let (p, q, s) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=4));
            (
                vec![TensorType::f32(&[p, q * s])],
                attrs_of(&[("shape", AttrValue::IntList(vec![p, q, s]))]),
            )
        }
        _ => {
            let (p, q, s) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=4));
            (
                vec![TensorType::f32(&[p, q, s])],
                attrs_of(&[("shape", AttrValue::IntList(vec![p * q, s]))]),
            )
        }
    }
}

fn manual_reshape(r: &Record) -> ManualSpec {
    let rank = r.inputs[0].rank();
    let k = r.attrs["shape"].as_list().map_or(0, |l| l.len());
    let lhs: Vec<String> = (0..rank).map(|d| i(0, d)).collect();
    let rhs: Vec<String> = (0..k).map(|j| format!("shape_{j}")).collect();
    let mut constraints = vec![format!("0 = {} - {}", lhs.join(" * "), rhs.join(" * "))];
    constraints.extend(rhs.iter().map(|s| format!("0 < {s}")));
    ManualSpec {
        constraints,
        shapes: vec![rhs],
    }
}

fn infer_transpose(x: &[TensorType], _: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_rank(&x[0], &[2])?;
    Ok(vec![TensorType::new(x[0].dtype, vec![x[0].shape[1], x[0].shape[0]])])
}

fn k_transpose(x: &[Tensor], a: &Attrs, _: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    let out = checked("transpose2d", infer_transpose, x, a)?;
    Ok(vec![kernels::transpose2d(&x[0], out[0].clone())])
}

fn sample_transpose(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    (vec![TensorType::new(float_type(rng), dims(rng, 2, 1, 6))], Attrs::new())
}

fn manual_transpose(_: &Record) -> ManualSpec {
    ManualSpec {
        constraints: vec![],
        shapes: vec![vec![i(0, 1), i(0, 0)]],
    }
}

fn infer_pad(x: &[TensorType], a: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_rank(&x[0], &[1, 2, 3])?;
    let (l, r) = (attr_int(a, "left")?, attr_int(a, "right")?);
    if l < 0 || r < 0 {
        return Err(bad("negative padding"));
    }
    let mut s = x[0].shape.clone();
    *s.last_mut().unwrap() += l + r;
    Ok(vec![TensorType::new(x[0].dtype, s)])
}

fn k_pad(x: &[Tensor], a: &Attrs, _: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    let out = checked("pad", infer_pad, x, a)?;
    let (l, r) = (attr_int(a, "left")? as usize, attr_int(a, "right")? as usize);
    Ok(vec![kernels::pad_last(&x[0], l, r, out[0].clone())])
}

fn sample_pad(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let r = rng.gen_range(1..=3);
    (
        vec![TensorType::new(float_type(rng), dims(rng, r, 1, 6))],
        attrs_of(&[
            ("left", AttrValue::Int(rng.gen_range(0..=3))),
            ("right", AttrValue::Int(rng.gen_range(0..=3))),
        ]),
    )
}

fn manual_pad(r: &Record) -> ManualSpec {
    let rank = r.inputs[0].rank();
    let mut shape = identity_shape(r, 0);
    shape[rank - 1] = format!("{} + left + right", i(0, rank - 1));
    ManualSpec {
        constraints: vec!["0 < left + 1".into(), "0 < right + 1".into()],
        shapes: vec![shape],
    }
}

fn infer_slice(x: &[TensorType], a: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_rank(&x[0], &[1, 2, 3])?;
    let (s, e) = (attr_int(a, "start")?, attr_int(a, "end")?);
    let n = *x[0].shape.last().unwrap();
    if s < 0 || s > e || e > n {
        return Err(bad(format!("slice [{s}, {e}) outside extent {n}")));
    }
    let mut shape = x[0].shape.clone();
    *shape.last_mut().unwrap() = e - s;
    Ok(vec![TensorType::new(x[0].dtype, shape)])
}

fn k_slice(x: &[Tensor], a: &Attrs, _: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    let out = checked("slice", infer_slice, x, a)?;
    let (s, e) = (attr_int(a, "start")? as usize, attr_int(a, "end")? as usize);
    Ok(vec![kernels::slice_last(&x[0], s, e, out[0].clone())])
}

fn sample_slice(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let r = rng.gen_range(1..=3);
    let shape = dims(rng, r, 2, 7);
    let n = shape[r - 1];
    let s = rng.gen_range(0..n);
    let e = rng.gen_range(s..=n);
    (
        vec![TensorType::new(float_type(rng), shape)],
        attrs_of(&[("start", AttrValue::Int(s)), ("end", AttrValue::Int(e))]),
    )
}

fn manual_slice(r: &Record) -> ManualSpec {
    let rank = r.inputs[0].rank();
    let last = i(0, rank - 1);
    let mut shape = identity_shape(r, 0);
    shape[rank - 1] = "end - start".into();
    ManualSpec {
        constraints: vec![
            "0 < start + 1".into(),
            "0 < end - start + 1".into(),
            format!("0 < {last} - end + 1"),
        ],
        shapes: vec![shape],
    }
}

fn infer_unfold(x: &[TensorType], a: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_rank(&x[0], &[1, 2, 3])?;
    let dim = dim_attr(a, x[0].rank())?;
    let (size, step) = (attr_int(a, "size")?, attr_int(a, "step")?);
    let n = x[0].shape[dim];
    if size < 1 || size > n {
        return Err(bad(format!("window {size} does not fit extent {n}")));
    }
    if step < 1 {
        return Err(bad("step must be positive"));
    }
    let mut shape = x[0].shape.clone();
    shape[dim] = (n - size) / step + 1;
    shape.push(size);
    Ok(vec![TensorType::new(x[0].dtype, shape)])
}

fn k_unfold(x: &[Tensor], a: &Attrs, _: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    let out = checked("unfold", infer_unfold, x, a)?;
    let dim = dim_attr(a, x[0].ty.rank())?;
    let (size, step) = (attr_int(a, "size")? as usize, attr_int(a, "step")? as usize);
    Ok(vec![kernels::unfold(&x[0], dim, size, step, out[0].clone())])
}

fn sample_unfold(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let r = rng.gen_range(1..=3);
    let shape = dims(rng, r, 2, 8);
    let dim = if r == 3 { 2 } else { rng.gen_range(0..r) };
    let size = rng.gen_range(1..=shape[dim]);
    (
        vec![TensorType::new(float_type(rng), shape)],
        attrs_of(&[
            ("dim", AttrValue::Int(dim as i64)),
            ("size", AttrValue::Int(size)),
            ("step", AttrValue::Int(rng.gen_range(1..=3))),
        ]),
    )
}

fn manual_unfold(r: &Record) -> ManualSpec {
    let dim = r.attrs["dim"].as_int().unwrap() as usize;
    let mut shape = identity_shape(r, 0);
    shape[dim] = format!("({} - size) / step + 1", i(0, dim));
    shape.push("size".into());
    ManualSpec {
        constraints: vec![
            "0 < size".into(),
            format!("0 < {} - size + 1", i(0, dim)),
            "0 < step".into(),
        ],
        shapes: vec![shape],
    }
}

fn infer_concat(x: &[TensorType], a: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_rank(&x[0], &[1, 2, 3])?;
    let dim = dim_attr(a, x[0].rank())?;
    if x[0].dtype != x[1].dtype || x[0].rank() != x[1].rank() {
        return Err(bad("operands differ in dtype or rank"));
    }
    for d in 0..x[0].rank() {
        if d != dim && x[0].shape[d] != x[1].shape[d] {
            return Err(bad(format!("extent mismatch at dim {d}")));
        }
    }
    let mut shape = x[0].shape.clone();
    shape[dim] += x[1].shape[dim];
    Ok(vec![TensorType::new(x[0].dtype, shape)])
}

fn k_concat(x: &[Tensor], a: &Attrs, _: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    let out = checked("concat2", infer_concat, x, a)?;
    let dim = dim_attr(a, x[0].ty.rank())?;
    Ok(vec![kernels::concat(&x[0], &x[1], dim, out[0].clone())])
}

fn sample_concat(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let r = rng.gen_range(2..=3);
    let dim = if r == 3 { 1 } else { rng.gen_range(0..2) };
    let a = dims(rng, r, 1, 5);
    let mut b = a.clone();
    b[dim] = rng.gen_range(1..=5);
    (
        vec![TensorType::f32(&a), TensorType::f32(&b)],
        attrs_of(&[("dim", AttrValue::Int(dim as i64))]),
    )
}

fn manual_concat(r: &Record) -> ManualSpec {
    let dim = r.attrs["dim"].as_int().unwrap() as usize;
    let rank = r.inputs[0].rank();
    let mut shape = identity_shape(r, 0);
    shape[dim] = format!("{} + {}", i(0, dim), i(1, dim));
    ManualSpec {
        constraints: (0..rank)
            .filter(|&d| d != dim)
            .map(|d| format!("0 = {} - {}", i(0, d), i(1, d)))
            .collect(),
        shapes: vec![shape],
    }
}

fn infer_split(x: &[TensorType], a: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_rank(&x[0], &[1, 2, 3])?;
    let dim = dim_attr(a, x[0].rank())?;
    let at = attr_int(a, "at")?;
    let n = x[0].shape[dim];
    if at < 0 || at > n {
        return Err(bad(format!("split point {at} outside extent {n}")));
    }
    let mut s1 = x[0].shape.clone();
    let mut s2 = x[0].shape.clone();
    s1[dim] = at;
    s2[dim] = n - at;
    Ok(vec![TensorType::new(x[0].dtype, s1), TensorType::new(x[0].dtype, s2)])
}

fn k_split(x: &[Tensor], a: &Attrs, _: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    let out = checked("split2", infer_split, x, a)?;
    let dim = dim_attr(a, x[0].ty.rank())?;
    let at = attr_int(a, "at")? as usize;
    Ok(kernels::split(&x[0], dim, at, (out[0].clone(), out[1].clone())))
}

fn sample_split(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let shape = dims(rng, 2, 2, 7);
    let dim = rng.gen_range(0..2);
    let at = rng.gen_range(1..shape[dim]);
    (
        vec![TensorType::f32(&shape)],
        attrs_of(&[("dim", AttrValue::Int(dim as i64)), ("at", AttrValue::Int(at))]),
    )
}

fn manual_split(r: &Record) -> ManualSpec {
    let dim = r.attrs["dim"].as_int().unwrap() as usize;
    let mut s1 = identity_shape(r, 0);
    let mut s2 = s1.clone();
    s1[dim] = "at".into();
    s2[dim] = format!("{} - at", i(0, dim));
    ManualSpec {
        constraints: vec!["0 < at + 1".into(), format!("0 < {} - at + 1", i(0, dim))],
        shapes: vec![s1, s2],
    }
}

// ---- pooling, contraction ----

fn infer_avg_pool(x: &[TensorType], a: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_rank(&x[0], &[3, 4])?;
    need_float(&x[0])?;
    let (kh, kw) = (attr_int(a, "kh")?, attr_int(a, "kw")?);
    let (s, p) = (attr_int(a, "stride")?, attr_int(a, "pad")?);
    let ceil = attr_bool(a, "ceil")?;
    if kh < 1 || kw < 1 {
        return Err(bad("kernel must be positive"));
    }
    if s < 1 {
        return Err(bad("stride must be positive"));
    }
    if p < 0 || 2 * p > kh || 2 * p > kw {
        return Err(bad("pad must be in [0, kernel / 2]"));
    }
    let r = x[0].rank();
    let (h, w) = (x[0].shape[r - 2], x[0].shape[r - 1]);
    if kh > h + 2 * p || kw > w + 2 * p {
        return Err(bad("kernel larger than padded input"));
    }
    let out = |n: i64, k: i64| {
        if ceil {
            (n + 2 * p - k + s - 1) / s + 1
        } else {
            (n + 2 * p - k) / s + 1
        }
    };
    let mut shape = x[0].shape.clone();
    shape[r - 2] = out(h, kh);
    shape[r - 1] = out(w, kw);
    Ok(vec![TensorType::new(x[0].dtype, shape)])
}

fn k_avg_pool(x: &[Tensor], a: &Attrs, ctx: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    let out = checked("avg_pool2d", infer_avg_pool, x, a)?;
    let p = Pool {
        kh: attr_int(a, "kh")? as usize,
        kw: attr_int(a, "kw")? as usize,
        stride: attr_int(a, "stride")? as usize,
        pad: attr_int(a, "pad")? as usize,
    };
    Ok(vec![kernels::avg_pool2d(&x[0], &p, out[0].clone(), ctx)])
}

fn sample_avg_pool(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let r = rng.gen_range(3..=4);
    let shape = dims(rng, r, 2, 7);
    let kh = rng.gen_range(1..=shape[r - 2].min(4));
    let kw = rng.gen_range(1..=shape[r - 1].min(4));
    let pad = rng.gen_range(0..=(kh.min(kw) / 2));
    (
        vec![TensorType::f32(&shape)],
        attrs_of(&[
            ("kh", AttrValue::Int(kh)),
            ("kw", AttrValue::Int(kw)),
            ("stride", AttrValue::Int(rng.gen_range(1..=2))),
            ("pad", AttrValue::Int(pad)),
            ("ceil", AttrValue::Bool(rng.gen_bool(0.5))),
        ]),
    )
}

fn manual_avg_pool(r: &Record) -> ManualSpec {
    let rank = r.inputs[0].rank();
    let ceil = r.attrs["ceil"].as_bool().unwrap_or(false);
    let (h, w) = (i(0, rank - 2), i(0, rank - 1));
    let out = |n: &str, k: &str| {
        if ceil {
            format!("({n} + 2 * pad - {k} + stride - 1) / stride + 1")
        } else {
            format!("({n} + 2 * pad - {k}) / stride + 1")
        }
    };
    let mut shape = identity_shape(r, 0);
    shape[rank - 2] = out(&h, "kh");
    shape[rank - 1] = out(&w, "kw");
    ManualSpec {
        constraints: vec![
            "0 < kh".into(),
            "0 < kw".into(),
            "0 < stride".into(),
            "0 < pad + 1".into(),
            "0 < kh - 2 * pad + 1".into(),
            "0 < kw - 2 * pad + 1".into(),
            format!("0 < {h} + 2 * pad - kh + 1"),
            format!("0 < {w} + 2 * pad - kw + 1"),
        ],
        shapes: vec![shape],
    }
}

fn infer_max_pool(x: &[TensorType], a: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_rank(&x[0], &[3, 4])?;
    need_numeric(&x[0])?;
    let k = attr_int(a, "k")?;
    let r = x[0].rank();
    if k < 1 || k > x[0].shape[r - 2] || k > x[0].shape[r - 1] {
        return Err(bad("window must be positive and fit the input"));
    }
    let mut shape = x[0].shape.clone();
    shape[r - 2] /= k;
    shape[r - 1] /= k;
    Ok(vec![TensorType::new(x[0].dtype, shape)])
}

fn k_max_pool(x: &[Tensor], a: &Attrs, _: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    let out = checked("max_pool2d", infer_max_pool, x, a)?;
    Ok(vec![kernels::max_pool2d(&x[0], attr_int(a, "k")? as usize, out[0].clone())])
}

fn sample_max_pool(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let r = rng.gen_range(3..=4);
    let shape = dims(rng, r, 2, 7);
    let k = rng.gen_range(1..=shape[r - 2].min(shape[r - 1]).min(3));
    (vec![TensorType::f32(&shape)], attrs_of(&[("k", AttrValue::Int(k))]))
}

fn manual_max_pool(r: &Record) -> ManualSpec {
    let rank = r.inputs[0].rank();
    let (h, w) = (i(0, rank - 2), i(0, rank - 1));
    let mut shape = identity_shape(r, 0);
    shape[rank - 2] = format!("{h} / k");
    shape[rank - 1] = format!("{w} / k");
    ManualSpec {
        constraints: vec!["0 < k".into(), format!("0 < {h} - k + 1"), format!("0 < {w} - k + 1")],
        shapes: vec![shape],
    }
}

fn infer_matmul(x: &[TensorType], _: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_rank(&x[0], &[2, 3])?;
    need_numeric(&x[0])?;
    if x[0].rank() != x[1].rank() || x[0].dtype != x[1].dtype {
        return Err(bad("operands differ in rank or dtype"));
    }
    let r = x[0].rank();
    if x[0].shape[r - 1] != x[1].shape[r - 2] {
        return Err(bad("contraction extents differ"));
    }
    if r == 3 && x[0].shape[0] != x[1].shape[0] {
        return Err(bad("batch extents differ"));
    }
    let mut shape = x[0].shape.clone();
    shape[r - 1] = x[1].shape[r - 1];
    Ok(vec![TensorType::new(x[0].dtype, shape)])
}

fn k_matmul(x: &[Tensor], a: &Attrs, ctx: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    let out = checked("matmul", infer_matmul, x, a)?;
    Ok(vec![kernels::matmul(&x[0], &x[1], out[0].clone(), ctx)])
}

fn sample_matmul(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let (m, k, n) = (rng.gen_range(1..=5), rng.gen_range(1..=5), rng.gen_range(1..=5));
    if rng.gen_bool(0.5) {
        (vec![TensorType::f32(&[m, k]), TensorType::f32(&[k, n])], Attrs::new())
    } else {
        let b = rng.gen_range(1..=3);
        (vec![TensorType::f32(&[b, m, k]), TensorType::f32(&[b, k, n])], Attrs::new())
    }
}

fn manual_matmul(r: &Record) -> ManualSpec {
    let rank = r.inputs[0].rank();
    let mut constraints = vec![format!("0 = {} - {}", i(0, rank - 1), i(1, rank - 2))];
    let mut shape = identity_shape(r, 0);
    shape[rank - 1] = i(1, rank - 1);
    if rank == 3 {
        constraints.push(format!("0 = {} - {}", i(0, 0), i(1, 0)));
    }
    ManualSpec {
        constraints,
        shapes: vec![shape],
    }
}

fn infer_conv(x: &[TensorType], a: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_rank(&x[0], &[3])?;
    need_rank(&x[1], &[4])?;
    need_float(&x[0])?;
    if x[0].dtype != x[1].dtype {
        return Err(bad("dtype mismatch"));
    }
    let s = attr_int(a, "stride")?;
    if s < 1 {
        return Err(bad("stride must be positive"));
    }
    let (c, h, w) = (x[0].shape[0], x[0].shape[1], x[0].shape[2]);
    let (o, c2, kh, kw) = (x[1].shape[0], x[1].shape[1], x[1].shape[2], x[1].shape[3]);
    if c != c2 {
        return Err(bad("channel mismatch"));
    }
    if kh < 1 || kw < 1 || kh > h || kw > w {
        return Err(bad("kernel does not fit"));
    }
    Ok(vec![TensorType::new(
        x[0].dtype,
        vec![o, (h - kh) / s + 1, (w - kw) / s + 1],
    )])
}

fn k_conv(x: &[Tensor], a: &Attrs, ctx: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    let out = checked("conv2d", infer_conv, x, a)?;
    let s = attr_int(a, "stride")? as usize;
    Ok(vec![kernels::conv2d(&x[0], &x[1], s, out[0].clone(), ctx)])
}

fn sample_conv(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let c = rng.gen_range(1..=3);
    let (h, w) = (rng.gen_range(2..=7), rng.gen_range(2..=7));
    let (kh, kw) = (rng.gen_range(1..=h.min(3)), rng.gen_range(1..=w.min(3)));
    let o = rng.gen_range(1..=3);
    (
        vec![TensorType::f32(&[c, h, w]), TensorType::f32(&[o, c, kh, kw])],
        attrs_of(&[("stride", AttrValue::Int(rng.gen_range(1..=2)))]),
    )
}

fn manual_conv(_: &Record) -> ManualSpec {
    ManualSpec {
        constraints: vec![
            "0 = i0_0 - i1_1".into(),
            "0 < stride".into(),
            "0 < i1_2".into(),
            "0 < i1_3".into(),
            "0 < i0_1 - i1_2 + 1".into(),
            "0 < i0_2 - i1_3 + 1".into(),
        ],
        shapes: vec![vec![
            "i1_0".into(),
            "(i0_1 - i1_2) / stride + 1".into(),
            "(i0_2 - i1_3) / stride + 1".into(),
        ]],
    }
}

fn spatial_dims(layout: &str) -> Result<(usize, usize), OpError> {
    match layout {
        "nchw" => Ok((2, 3)),
        "nhwc" => Ok((1, 2)),
        other => Err(bad(format!("unknown layout {other}"))),
    }
}

fn infer_interp(x: &[TensorType], a: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_rank(&x[0], &[4])?;
    let scale = attr_int(a, "scale")?;
    if scale < 1 {
        return Err(bad("scale must be positive"));
    }
    let (d0, d1) = spatial_dims(attr_str(a, "layout")?)?;
    let mut shape = x[0].shape.clone();
    shape[d0] *= scale;
    shape[d1] *= scale;
    Ok(vec![TensorType::new(x[0].dtype, shape)])
}

fn k_interp(x: &[Tensor], a: &Attrs, _: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    let out = checked("interpolate_nearest", infer_interp, x, a)?;
    let dims = spatial_dims(attr_str(a, "layout")?)?;
    Ok(vec![kernels::upsample(&x[0], dims, attr_int(a, "scale")? as usize, out[0].clone())])
}

fn sample_interp(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let layout = if rng.gen_bool(0.5) { "nchw" } else { "nhwc" };
    (
        vec![TensorType::f32(&dims(rng, 4, 1, 4))],
        attrs_of(&[
            ("scale", AttrValue::Int(rng.gen_range(1..=3))),
            ("layout", AttrValue::Str(layout.into())),
        ]),
    )
}

fn manual_interp(r: &Record) -> ManualSpec {
    let (d0, d1) = spatial_dims(r.attrs["layout"].as_str().unwrap_or("nchw")).unwrap_or((2, 3));
    let mut shape = identity_shape(r, 0);
    shape[d0] = format!("{} * scale", i(0, d0));
    shape[d1] = format!("{} * scale", i(0, d1));
    ManualSpec {
        constraints: vec!["0 < scale".into()],
        shapes: vec![shape],
    }
}

fn infer_softmax(x: &[TensorType], a: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_rank(&x[0], &[1, 2, 3])?;
    need_float(&x[0])?;
    dim_attr(a, x[0].rank())?;
    Ok(vec![x[0].clone()])
}

fn k_softmax(x: &[Tensor], a: &Attrs, ctx: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    checked("softmax", infer_softmax, x, a)?;
    Ok(vec![kernels::softmax(&x[0], dim_attr(a, x[0].ty.rank())?, ctx)])
}

fn sample_softmax(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    (
        vec![TensorType::f32(&dims(rng, 2, 1, 6))],
        attrs_of(&[("dim", AttrValue::Int(rng.gen_range(0..2)))]),
    )
}

fn infer_mean(x: &[TensorType], a: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_rank(&x[0], &[1, 2, 3])?;
    need_float(&x[0])?;
    let dim = dim_attr(a, x[0].rank())?;
    if x[0].shape[dim] == 0 {
        return Err(bad("mean over an empty dimension"));
    }
    let mut shape = x[0].shape.clone();
    if attr_bool(a, "keepdim")? {
        shape[dim] = 1;
    } else {
        shape.remove(dim);
    }
    Ok(vec![TensorType::new(x[0].dtype, shape)])
}

fn k_mean(x: &[Tensor], a: &Attrs, ctx: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    let out = checked("mean", infer_mean, x, a)?;
    Ok(vec![kernels::mean_dim(&x[0], dim_attr(a, x[0].ty.rank())?, out[0].clone(), ctx)])
}

fn sample_mean(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let r = rng.gen_range(2..=3);
    (
        vec![TensorType::f32(&dims(rng, r, 1, 6))],
        attrs_of(&[
            ("dim", AttrValue::Int(r as i64 - 1)),
            ("keepdim", AttrValue::Bool(rng.gen_bool(0.5))),
        ]),
    )
}

fn manual_mean(r: &Record) -> ManualSpec {
    let dim = r.attrs["dim"].as_int().unwrap() as usize;
    let mut shape = identity_shape(r, 0);
    if r.attrs["keepdim"].as_bool().unwrap_or(false) {
        shape[dim] = "1".into();
    } else {
        shape.remove(dim);
    }
    ManualSpec {
        constraints: vec![format!("0 < {}", i(0, dim))],
        shapes: vec![shape],
    }
}

fn infer_repeat(x: &[TensorType], a: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_rank(&x[0], &[1, 2])?;
    let t = attr_int(a, "times")?;
    if t < 1 {
        return Err(bad("times must be positive"));
    }
    let mut shape = x[0].shape.clone();
    *shape.last_mut().unwrap() *= t;
    Ok(vec![TensorType::new(x[0].dtype, shape)])
}

fn k_repeat(x: &[Tensor], a: &Attrs, _: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    let out = checked("repeat", infer_repeat, x, a)?;
    Ok(vec![kernels::repeat_last(&x[0], attr_int(a, "times")? as usize, out[0].clone())])
}

fn sample_repeat(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let r = rng.gen_range(1..=2);
    (
        vec![TensorType::f32(&dims(rng, r, 1, 5))],
        attrs_of(&[("times", AttrValue::Int(rng.gen_range(1..=3)))]),
    )
}

fn manual_repeat(r: &Record) -> ManualSpec {
    let rank = r.inputs[0].rank();
    let mut shape = identity_shape(r, 0);
    shape[rank - 1] = format!("{} * times", i(0, rank - 1));
    ManualSpec {
        constraints: vec!["0 < times".into()],
        shapes: vec![shape],
    }
}

fn infer_unsqueeze(x: &[TensorType], a: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_rank(&x[0], &[1, 2, 3])?;
    let d = attr_int(a, "dim")?;
    if d < 0 || d as usize > x[0].rank() {
        return Err(bad("dim out of range"));
    }
    let mut shape = x[0].shape.clone();
    shape.insert(d as usize, 1);
    Ok(vec![TensorType::new(x[0].dtype, shape)])
}

fn k_unsqueeze(x: &[Tensor], a: &Attrs, _: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    let out = checked("unsqueeze", infer_unsqueeze, x, a)?;
    Ok(vec![Tensor::new(out[0].clone(), x[0].data.clone())])
}

fn sample_unsqueeze(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    let r = rng.gen_range(1..=2);
    (
        vec![TensorType::new(float_type(rng), dims(rng, r, 1, 6))],
        attrs_of(&[("dim", AttrValue::Int(rng.gen_range(0..=r as i64)))]),
    )
}

fn manual_unsqueeze(r: &Record) -> ManualSpec {
    let d = r.attrs["dim"].as_int().unwrap() as usize;
    let mut shape = identity_shape(r, 0);
    shape.insert(d, "1".into());
    ManualSpec {
        constraints: vec![],
        shapes: vec![shape],
    }
}

// ---- rule-hostile and probe operators ----

fn k_nonzero(x: &[Tensor], _: &Attrs, _: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    let idx: Vec<f64> = x[0]
        .data
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(k, _)| k as f64)
        .collect();
    Ok(vec![Tensor::new(TensorType::new(DType::I64, vec![idx.len() as i64]), idx)])
}

fn sample_rank1(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    (vec![TensorType::f32(&dims(rng, 1, 3, 8))], Attrs::new())
}

thread_local! {
    static CALLS: Cell<u64> = const { Cell::new(0) };
}

fn next_call() -> u64 {
    CALLS.with(|c| {
        let n = c.get();
        c.set(n + 1);
        n
    })
}

fn k_rand_shape(x: &[Tensor], _: &Attrs, _: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    let n = x[0].data.len() + (next_call() % 3) as usize;
    Ok(vec![Tensor::zeros(TensorType::new(x[0].dtype(), vec![n as i64]))])
}

fn k_flaky(x: &[Tensor], _: &Attrs, _: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    // every call whose per-thread index is 1 mod 3 fails, so any three
    // consecutive replays include a failure
    if next_call() % 3 == 1 {
        return Err(OpError::Fault("flaky_id: transient failure".into()));
    }
    Ok(vec![x[0].clone()])
}

fn k_sqrt_strict(x: &[Tensor], a: &Attrs, _: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    checked("sqrt_strict", infer_unary_float, x, a)?;
    if x[0].data.iter().any(|&v| v < 0.0) {
        return Err(bad("sqrt_strict: negative element"));
    }
    Ok(vec![kernels::map1(&x[0], f64::sqrt)])
}

fn infer_mod3(x: &[TensorType], _: &Attrs) -> Result<Vec<TensorType>, OpError> {
    need_rank(&x[0], &[1])?;
    if x[0].shape[0] % 3 != 0 {
        return Err(bad("extent must be a multiple of 3"));
    }
    Ok(vec![x[0].clone()])
}

fn k_mod3(x: &[Tensor], a: &Attrs, _: KernelCtx) -> Result<Vec<Tensor>, OpError> {
    checked("mod3_gate", infer_mod3, x, a)?;
    Ok(vec![x[0].clone()])
}

fn sample_mod3(rng: &mut ChaCha8Rng) -> (Vec<TensorType>, Attrs) {
    (vec![TensorType::f32(&[3 * rng.gen_range(1..=4)])], Attrs::new())
}

fn manual_mod3(_: &Record) -> ManualSpec {
    ManualSpec {
        constraints: vec!["0 = i0_0 % 3".into()],
        shapes: vec![vec!["i0_0".into()]],
    }
}

#[allow(clippy::too_many_arguments)]
fn op(
    name: &'static str,
    arity: usize,
    category: Category,
    infer: Option<InferFn>,
    kernel: KernelFn,
    pointwise: Option<PointwiseFn>,
    sample: SampleFn,
    manual: Option<ManualFn>,
) -> RefOperator {
    RefOperator {
        name,
        arity,
        in_place: false,
        category,
        infer,
        kernel,
        pointwise,
        sample,
        manual,
    }
}

/// The reference operators in a fixed order.
pub fn library_catalog() -> Vec<RefOperator> {
    use Category::*;
    let mut abs_ = op("abs_", 1, Standard, Some(infer_unary_any), k_abs, Some(pw_abs), sample_unary_float, Some(manual_identity));
    abs_.in_place = true;
    vec![
        op("relu", 1, Standard, Some(infer_unary_any), k_relu, Some(pw_relu), sample_unary_r14, Some(manual_identity)),
        op("abs", 1, Standard, Some(infer_unary_any), k_abs, Some(pw_abs), sample_unary_r14, Some(manual_identity)),
        abs_,
        op("reciprocal", 1, Standard, Some(infer_unary_float), k_reciprocal, Some(pw_reciprocal), sample_unary_float, Some(manual_identity)),
        op("tanh", 1, Standard, Some(infer_unary_float), k_tanh, Some(pw_tanh), sample_unary_float, Some(manual_identity)),
        op("leaky_relu", 1, Standard, Some(infer_leaky), k_leaky, Some(pw_leaky), sample_leaky, Some(manual_identity)),
        op("add", 2, Standard, Some(infer_binary), k_add, None, sample_binary, Some(manual_binary)),
        op("sub", 2, Standard, Some(infer_binary), k_sub, None, sample_binary_float, Some(manual_binary)),
        op("mul", 2, Standard, Some(infer_binary), k_mul, None, sample_binary_float, Some(manual_binary)),
        op("maximum", 2, Standard, Some(infer_binary), k_maximum, None, sample_binary_float, Some(manual_binary)),
        op("sum", 1, Standard, Some(infer_sum), k_sum, None, sample_sum, Some(manual_sum)),
        op("flatten", 1, Standard, Some(infer_flatten), k_flatten, None, sample_flatten, Some(manual_flatten)),
        op("reshape", 1, Standard, Some(infer_reshape), k_reshape, None, sample_reshape, Some(manual_reshape)),
        op("transpose2d", 1, Standard, Some(infer_transpose), k_transpose, None, sample_transpose, Some(manual_transpose)),
        op("pad", 1, Standard, Some(infer_pad), k_pad, None, sample_pad, Some(manual_pad)),
        op("slice", 1, Standard, Some(infer_slice), k_slice, None, sample_slice, Some(manual_slice)),
        op("unfold", 1, Standard, Some(infer_unfold), k_unfold, None, sample_unfold, Some(manual_unfold)),
        op("concat2", 2, Standard, Some(infer_concat), k_concat, None, sample_concat, Some(manual_concat)),
        op("split2", 1, Standard, Some(infer_split), k_split, None, sample_split, Some(manual_split)),
        op("avg_pool2d", 1, Standard, Some(infer_avg_pool), k_avg_pool, None, sample_avg_pool, Some(manual_avg_pool)),
        op("max_pool2d", 1, Standard, Some(infer_max_pool), k_max_pool, None, sample_max_pool, Some(manual_max_pool)),
        op("matmul", 2, Standard, Some(infer_matmul), k_matmul, None, sample_matmul, Some(manual_matmul)),
        op("conv2d", 2, Standard, Some(infer_conv), k_conv, None, sample_conv, Some(manual_conv)),
        op("interpolate_nearest", 1, Standard, Some(infer_interp), k_interp, None, sample_interp, Some(manual_interp)),
        op("softmax", 1, Standard, Some(infer_softmax), k_softmax, None, sample_softmax, Some(manual_identity)),
        op("mean", 1, Standard, Some(infer_mean), k_mean, None, sample_mean, Some(manual_mean)),
        op("repeat", 1, Standard, Some(infer_repeat), k_repeat, None, sample_repeat, Some(manual_repeat)),
        op("unsqueeze", 1, Standard, Some(infer_unsqueeze), k_unsqueeze, None, sample_unsqueeze, Some(manual_unsqueeze)),
        op("nonzero", 1, Hostile, None, k_nonzero, None, sample_rank1, None),
        op("rand_shape", 1, Hostile, None, k_rand_shape, None, sample_rank1, None),
        op("flaky_id", 1, Hostile, None, k_flaky, None, sample_rank1, None),
        op("sqrt_strict", 1, Hostile, Some(infer_unary_float), k_sqrt_strict, None, sample_unary_float, None),
        op("mod3_gate", 1, Probe, Some(infer_mod3), k_mod3, None, sample_mod3, Some(manual_mod3)),
    ]
}
