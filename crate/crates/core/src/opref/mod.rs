//! Reference operator library and the two executors run against each other.

pub mod bugplan;
pub mod exec;
mod kernels;
pub mod ops;
pub mod runner;

use thiserror::Error;

use crate::tensor::{Tensor, TensorType};
use crate::trace::{AttrValue, Attrs};

pub use bugplan::{BugPlan, BugSpec, Corruption};
pub use exec::{execute_eager, execute_optimized, Backend, BuiltinBackend, ExecError};
pub use ops::{library_catalog, Category, ManualSpec, RefOperator};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum OpError {
    /// The operator rejected its arguments.
    #[error("validity: {0}")]
    Validity(String),
    /// A kernel or backend invariant broke.
    #[error("fault: {0}")]
    Fault(String),
    #[error("not implemented: {0}")]
    NotImplemented(String),
}

impl OpError {
    pub fn validity(msg: impl Into<String>) -> OpError {
        OpError::Validity(msg.into())
    }
}

/// Anything that can run a single operator call.
pub trait Invoker {
    fn invoke(&self, api: &str, inputs: &[Tensor], attrs: &Attrs) -> Result<Vec<Tensor>, OpError>;
}

/// Per-call knobs the optimizing path uses to change evaluation order.
#[derive(Clone, Copy, Debug, Default)]
pub struct KernelCtx {
    pub reverse_reduce: bool,
}

/// The catalog as an [`Invoker`] running the eager kernels.
#[derive(Clone)]
pub struct Library {
    ops: Vec<RefOperator>,
}

impl Default for Library {
    fn default() -> Self {
        Library::new()
    }
}

impl Library {
    pub fn new() -> Library {
        Library {
            ops: library_catalog(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&RefOperator> {
        self.ops.iter().find(|o| o.name == name)
    }

    pub fn ops(&self) -> &[RefOperator] {
        &self.ops
    }

    /// Ground-truth output types, or the validity failure.
    pub fn infer_types(&self, api: &str, inputs: &[TensorType], attrs: &Attrs) -> Result<Vec<TensorType>, OpError> {
        let op = self
            .get(api)
            .ok_or_else(|| OpError::NotImplemented(api.to_string()))?;
        match op.infer {
            Some(f) => f(inputs, attrs),
            None => Err(OpError::NotImplemented(format!("{api} has no static shape function"))),
        }
    }

    pub fn invoke_with(&self, api: &str, inputs: &[Tensor], attrs: &Attrs, ctx: KernelCtx) -> Result<Vec<Tensor>, OpError> {
        let op = self
            .get(api)
            .ok_or_else(|| OpError::NotImplemented(api.to_string()))?;
        if inputs.len() != op.arity {
            return Err(OpError::validity(format!(
                "{api} takes {} inputs, got {}",
                op.arity,
                inputs.len()
            )));
        }
        for t in inputs {
            if t.ty.numel().map(|n| n as usize) != Some(t.data.len()) {
                return Err(OpError::Fault(format!("{api}: payload does not match {}", t.ty)));
            }
        }
        (op.kernel)(inputs, attrs, ctx)
    }
}

impl Invoker for Library {
    fn invoke(&self, api: &str, inputs: &[Tensor], attrs: &Attrs) -> Result<Vec<Tensor>, OpError> {
        self.invoke_with(api, inputs, attrs, KernelCtx::default())
    }
}

pub(crate) fn attr_int(attrs: &Attrs, name: &str) -> Result<i64, OpError> {
    match attrs.get(name) {
        Some(AttrValue::Int(v)) => Ok(*v),
        Some(other) => Err(OpError::validity(format!("attr {name} must be an int, got {other:?}"))),
        None => Err(OpError::validity(format!("missing attr {name}"))),
    }
}

pub(crate) fn attr_list<'a>(attrs: &'a Attrs, name: &str) -> Result<&'a [i64], OpError> {
    attrs
        .get(name)
        .and_then(|v| v.as_list())
        .ok_or_else(|| OpError::validity(format!("attr {name} must be an int list")))
}

pub(crate) fn attr_bool(attrs: &Attrs, name: &str) -> Result<bool, OpError> {
    attrs
        .get(name)
        .and_then(|v| v.as_bool())
        .ok_or_else(|| OpError::validity(format!("attr {name} must be a bool")))
}

pub(crate) fn attr_float(attrs: &Attrs, name: &str) -> Result<f64, OpError> {
    attrs
        .get(name)
        .and_then(|v| v.as_float())
        .ok_or_else(|| OpError::validity(format!("attr {name} must be a float")))
}

pub(crate) fn attr_str<'a>(attrs: &'a Attrs, name: &str) -> Result<&'a str, OpError> {
    attrs
        .get(name)
        .and_then(|v| v.as_str())
        .ok_or_else(|| OpError::validity(format!("attr {name} must be a string")))
}
