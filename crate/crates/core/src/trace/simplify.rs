use std::fmt;

use super::{AttrValue, Attrs, Record};
use crate::opref::OpError;
use crate::tensor::{Tensor, TensorType, TypeError};

/// A non-tensor argument as captured at the call site.
#[derive(Clone, Debug, PartialEq)]
pub enum RawArg {
    Int(i64),
    IntList(Vec<i64>),
    Float(f64),
    Bool(bool),
    Str(String),
    /// A callable argument; never representable in a record.
    Callable(String),
    Nested(Vec<RawArg>),
}

/// One invocation with full payloads.
#[derive(Clone, Debug)]
pub struct RawInvocation {
    pub api: String,
    pub inputs: Vec<Tensor>,
    pub args: Vec<(String, RawArg)>,
    pub result: Result<Vec<Tensor>, OpError>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SkipReason {
    UnsupportedArg { name: String, kind: &'static str },
    DuplicateArg(String),
    BadType(String),
    Fault,
    NotImplemented,
    Nondeterministic,
    ValueDependent,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::UnsupportedArg { name, kind } => write!(f, "unsupported {kind} argument `{name}`"),
            SkipReason::DuplicateArg(n) => write!(f, "duplicate argument `{n}`"),
            SkipReason::BadType(m) => write!(f, "bad tensor type: {m}"),
            SkipReason::Fault => f.write_str("execution fault"),
            SkipReason::NotImplemented => f.write_str("not implemented"),
            SkipReason::Nondeterministic => f.write_str("nondeterministic"),
            SkipReason::ValueDependent => f.write_str("value dependent"),
        }
    }
}

impl RawInvocation {
    /// A payload-carrying invocation equivalent to a record (zero payloads).
    pub fn from_record(r: &Record) -> RawInvocation {
        let args = r
            .attrs
            .iter()
            .map(|(k, v)| {
                let a = match v {
                    AttrValue::Int(x) => RawArg::Int(*x),
                    AttrValue::IntList(x) => RawArg::IntList(x.clone()),
                    AttrValue::Float(x) => RawArg::Float(*x),
                    AttrValue::Bool(x) => RawArg::Bool(*x),
                    AttrValue::Str(x) => RawArg::Str(x.clone()),
                };
                (k.clone(), a)
            })
            .collect();
        let result = if r.valid {
            Ok(r.outputs.iter().cloned().map(Tensor::zeros).collect())
        } else {
            Err(OpError::Validity("recorded as invalid".into()))
        };
        RawInvocation {
            api: r.api.clone(),
            inputs: r.inputs.iter().cloned().map(Tensor::zeros).collect(),
            args,
            result,
        }
    }
}

fn check_type(t: &TensorType) -> Result<(), SkipReason> {
    t.validate().map_err(|e: TypeError| SkipReason::BadType(e.to_string()))
}

/// Drops payloads and classifies arguments.
pub fn simplify(raw: &RawInvocation) -> Result<Record, SkipReason> {
    let mut attrs = Attrs::new();
    for (name, arg) in &raw.args {
        let v = match arg {
            RawArg::Int(x) => AttrValue::Int(*x),
            RawArg::IntList(x) => AttrValue::IntList(x.clone()),
            RawArg::Float(x) => AttrValue::Float(*x),
            RawArg::Bool(x) => AttrValue::Bool(*x),
            RawArg::Str(x) => AttrValue::Str(x.clone()),
            RawArg::Callable(_) => {
                return Err(SkipReason::UnsupportedArg {
                    name: name.clone(),
                    kind: "callable",
                })
            }
            RawArg::Nested(_) => {
                return Err(SkipReason::UnsupportedArg {
                    name: name.clone(),
                    kind: "nested",
                })
            }
        };
        if attrs.insert(name.clone(), v).is_some() {
            return Err(SkipReason::DuplicateArg(name.clone()));
        }
    }
    let inputs: Vec<TensorType> = raw.inputs.iter().map(|t| t.ty.clone()).collect();
    for t in &inputs {
        check_type(t)?;
    }
    let (outputs, valid) = match &raw.result {
        Ok(outs) => {
            let types: Vec<TensorType> = outs.iter().map(|t| t.ty.clone()).collect();
            for t in &types {
                check_type(t)?;
            }
            if types.is_empty() {
                return Err(SkipReason::Fault);
            }
            (types, true)
        }
        Err(OpError::Validity(_)) => (Vec::new(), false),
        Err(OpError::Fault(_)) => return Err(SkipReason::Fault),
        Err(OpError::NotImplemented(_)) => return Err(SkipReason::NotImplemented),
    };
    Ok(Record {
        api: raw.api.clone(),
        inputs,
        attrs,
        outputs,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opref::{Invoker, Library};
    use crate::tensor::DType;

    fn pool_raw(extra: Vec<(String, RawArg)>) -> RawInvocation {
        let lib = Library::new();
        let x = Tensor::zeros(TensorType::f32(&[3, 3, 3]));
        let mut args: Vec<(String, RawArg)> = [("kh", 2), ("kw", 2), ("stride", 1), ("pad", 0)]
            .iter()
            .map(|(k, v)| (k.to_string(), RawArg::Int(*v)))
            .collect();
        args.extend(extra);
        let mut attrs = Attrs::new();
        for (k, v) in &args {
            if let RawArg::Int(i) = v {
                attrs.insert(k.clone(), AttrValue::Int(*i));
            }
        }
        attrs.insert("ceil".into(), AttrValue::Bool(false));
        let result = lib.invoke("avg_pool2d", std::slice::from_ref(&x), &attrs);
        RawInvocation {
            api: "avg_pool2d".into(),
            inputs: vec![x],
            args,
            result,
        }
    }

    #[test]
    fn pool_invocation_simplifies_to_figure_record() {
        let r = simplify(&pool_raw(vec![])).unwrap();
        assert_eq!(
            r.to_line(),
            r#"{"api":"avg_pool2d","inputs":[{"dtype":"f32","shape":[3,3,3]}],"attrs":{"kh":2,"kw":2,"stride":1,"pad":0},"outputs":[{"dtype":"f32","shape":[3,2,2]}],"valid":true}"#
        );
    }

    #[test]
    fn float_and_bool_tagging() {
        let r = simplify(&pool_raw(vec![
            ("bias".into(), RawArg::Float(0.5)),
            ("ceil".into(), RawArg::Bool(true)),
        ]))
        .unwrap();
        assert_eq!(r.attrs["bias"], AttrValue::Float(0.5));
        assert_eq!(r.attrs["ceil"], AttrValue::Bool(true));
        assert!(!r.env().names.contains(&"bias".to_string()));
    }

    #[test]
    fn unsupported_and_failed_calls() {
        let raw = pool_raw(vec![("hook".into(), RawArg::Callable("f".into()))]);
        assert!(matches!(simplify(&raw), Err(SkipReason::UnsupportedArg { kind: "callable", .. })));
        let mut raw = pool_raw(vec![]);
        raw.result = Err(OpError::Validity("no".into()));
        let r = simplify(&raw).unwrap();
        assert!(!r.valid && r.outputs.is_empty());
        raw.result = Err(OpError::Fault("boom".into()));
        assert_eq!(simplify(&raw), Err(SkipReason::Fault));
    }

    #[test]
    fn idempotent_on_records() {
        let r = simplify(&pool_raw(vec![("layout".into(), RawArg::Str("nchw".into()))])).unwrap();
        assert_eq!(simplify(&RawInvocation::from_record(&r)).unwrap(), r);
        let bad = Record {
            api: "x".into(),
            inputs: vec![TensorType::new(DType::I64, vec![2])],
            attrs: Attrs::new(),
            outputs: vec![],
            valid: false,
        };
        assert_eq!(simplify(&RawInvocation::from_record(&bad)).unwrap(), bad);
    }
}
