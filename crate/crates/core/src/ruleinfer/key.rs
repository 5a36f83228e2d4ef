use std::fmt;

use serde::{Deserialize, Serialize};

use crate::tensor::DTypeClass;
use crate::trace::{is_symbolic_int, AttrValue, Record};

/// Non-symbolic argument values that select a partial operator.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KeyArg {
    Bool(bool),
    Int(i64),
    Str(String),
}

/// Identity of a partial operator: API, tensor signature, symbolic attribute
/// names (lists flattened) and rule-dependent argument values.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartialOperatorKey {
    pub api: String,
    pub inputs: Vec<(usize, DTypeClass)>,
    pub outputs: Vec<usize>,
    pub symbolic_attrs: Vec<String>,
    pub rule_args: Vec<(String, KeyArg)>,
}

pub fn key_of(record: &Record) -> PartialOperatorKey {
    let mut symbolic_attrs = Vec::new();
    let mut rule_args = Vec::new();
    for (name, v) in &record.attrs {
        match v {
            AttrValue::Int(x) => {
                if is_symbolic_int(name) {
                    symbolic_attrs.push(name.clone());
                } else {
                    rule_args.push((name.clone(), KeyArg::Int(*x)));
                }
            }
            AttrValue::IntList(xs) => symbolic_attrs.extend((0..xs.len()).map(|k| format!("{name}_{k}"))),
            AttrValue::Float(_) => {}
            AttrValue::Bool(b) => rule_args.push((name.clone(), KeyArg::Bool(*b))),
            AttrValue::Str(s) => rule_args.push((name.clone(), KeyArg::Str(s.clone()))),
        }
    }
    PartialOperatorKey {
        api: record.api.clone(),
        inputs: record.inputs.iter().map(|t| (t.rank(), t.dtype.class())).collect(),
        outputs: record.outputs.iter().map(|t| t.rank()).collect(),
        symbolic_attrs,
        rule_args,
    }
}

impl PartialOperatorKey {
    /// Equal ignoring the output signature (which invalid records lack).
    pub fn same_input_side(&self, other: &PartialOperatorKey) -> bool {
        self.api == other.api
            && self.inputs == other.inputs
            && self.symbolic_attrs == other.symbolic_attrs
            && self.rule_args == other.rule_args
    }

    /// Stable 64-bit FNV-1a digest of the JSON form, as 16 hex digits.
    pub fn id(&self) -> String {
        let text = serde_json::to_string(self).expect("key serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

impl fmt::Display for PartialOperatorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ins: Vec<String> = self
            .inputs
            .iter()
            .map(|(r, c)| format!("{}{r}", serde_json::to_value(c).unwrap().as_str().unwrap()))
            .collect();
        let outs: Vec<String> = self.outputs.iter().map(|r| r.to_string()).collect();
        write!(f, "{}({}) -> ({})", self.api, ins.join(","), outs.join(","))?;
        for (k, v) in &self.rule_args {
            match v {
                KeyArg::Bool(b) => write!(f, " {k}={b}")?,
                KeyArg::Int(i) => write!(f, " {k}={i}")?,
                KeyArg::Str(s) => write!(f, " {k}={s}")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::TensorType;
    use crate::trace::Attrs;

    fn pool(rank: usize, ceil: bool, bias: f64) -> Record {
        let mut attrs = Attrs::new();
        for k in ["kh", "kw", "stride", "pad"] {
            attrs.insert(k.into(), AttrValue::Int(1));
        }
        attrs.insert("ceil".into(), AttrValue::Bool(ceil));
        attrs.insert("bias".into(), AttrValue::Float(bias));
        let shape = vec![3; rank];
        Record {
            api: "avg_pool2d".into(),
            inputs: vec![TensorType::f32(&shape)],
            attrs,
            outputs: vec![TensorType::f32(&shape)],
            valid: true,
        }
    }

    #[test]
    fn keying_distinctions() {
        assert_ne!(key_of(&pool(3, false, 0.1)), key_of(&pool(4, false, 0.1)));
        assert_ne!(key_of(&pool(3, false, 0.1)), key_of(&pool(3, true, 0.1)));
        assert_eq!(key_of(&pool(3, false, 0.1)), key_of(&pool(3, false, 0.7)));
        assert_eq!(key_of(&pool(3, false, 0.1)).id(), key_of(&pool(3, false, 0.7)).id());
    }

    #[test]
    fn lists_flatten_and_dims_are_categorical() {
        let mut r = pool(3, false, 0.0);
        r.attrs.insert("ksize".into(), AttrValue::IntList(vec![1, 2, 3]));
        r.attrs.insert("dim".into(), AttrValue::Int(1));
        let k = key_of(&r);
        assert_eq!(k.symbolic_attrs, vec!["kh", "kw", "stride", "pad", "ksize_0", "ksize_1", "ksize_2"]);
        assert!(k.rule_args.contains(&("dim".into(), KeyArg::Int(1))));
        let mut invalid = r.clone();
        invalid.valid = false;
        invalid.outputs.clear();
        assert!(key_of(&invalid).same_input_side(&k));
        assert_ne!(key_of(&invalid), k);
    }
}
