use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{TensorType, TypeError};

/// Attribute value of an invocation. Serialized untagged, so the JSON kind
/// decides the variant: integer, float, bool, string or integer list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    IntList(Vec<i64>),
}

impl AttrValue {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            AttrValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match self {
            AttrValue::Float(v) => Some(*v),
            AttrValue::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            AttrValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            AttrValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[i64]> {
        match self {
            AttrValue::IntList(v) => Some(v),
            _ => None,
        }
    }
}

pub type Attrs = IndexMap<String, AttrValue>;

/// Integer attributes that select a dimension. They change the rule's form,
/// so they are keyed on rather than symbolized.
pub const CATEGORICAL_INT_ATTRS: [&str; 2] = ["dim", "axis"];

pub fn is_symbolic_int(name: &str) -> bool {
    !CATEGORICAL_INT_ATTRS.contains(&name)
}

/// One simplified invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub api: String,
    pub inputs: Vec<TensorType>,
    pub attrs: Attrs,
    pub outputs: Vec<TensorType>,
    pub valid: bool,
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("valid record for `{0}` has no outputs")]
    MissingOutputs(String),
    #[error("invalid record for `{0}` carries outputs")]
    UnexpectedOutputs(String),
    #[error("bad tensor type in `{api}`: {source}")]
    Type { api: String, source: TypeError },
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: Box<RecordError> },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Record {
    pub fn check(&self) -> Result<(), RecordError> {
        if self.valid && self.outputs.is_empty() {
            return Err(RecordError::MissingOutputs(self.api.clone()));
        }
        if !self.valid && !self.outputs.is_empty() {
            return Err(RecordError::UnexpectedOutputs(self.api.clone()));
        }
        for t in self.inputs.iter().chain(&self.outputs) {
            t.validate().map_err(|source| RecordError::Type {
                api: self.api.clone(),
                source,
            })?;
        }
        Ok(())
    }

    /// Same invocation arguments (inputs and attrs).
    pub fn same_call(&self, other: &Record) -> bool {
        self.api == other.api && self.inputs == other.inputs && self.attrs == other.attrs
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn from_line(line: &str) -> Result<Record, serde_json::Error> {
        serde_json::from_str(line)
    }

    pub fn env(&self) -> SymbolEnv {
        SymbolEnv::of(self)
    }
}

/// Ordered symbol assignment: input dims in tensor order, then symbolic
/// attributes in declaration order (integer lists flattened).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SymbolEnv {
    pub names: Vec<String>,
    pub values: Vec<i64>,
}

pub fn input_dim_name(tensor: usize, dim: usize) -> String {
    format!("i{tensor}_{dim}")
}

pub fn output_dim_name(tensor: usize, dim: usize) -> String {
    format!("o{tensor}_{dim}")
}

impl SymbolEnv {
    pub fn of(record: &Record) -> SymbolEnv {
        let mut names = Vec::new();
        let mut values = Vec::new();
        for (t, ty) in record.inputs.iter().enumerate() {
            for (d, &v) in ty.shape.iter().enumerate() {
                names.push(input_dim_name(t, d));
                values.push(v);
            }
        }
        for (name, v) in &record.attrs {
            match v {
                AttrValue::Int(x) if is_symbolic_int(name) => {
                    names.push(name.clone());
                    values.push(*x);
                }
                AttrValue::IntList(xs) => {
                    for (k, x) in xs.iter().enumerate() {
                        names.push(format!("{name}_{k}"));
                        values.push(*x);
                    }
                }
                _ => {}
            }
        }
        SymbolEnv { names, values }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<i64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    /// Writes symbol values back into a record of the same form.
    pub fn apply_to(&self, record: &Record) -> Record {
        let mut out = record.clone();
        let mut k = 0;
        for ty in out.inputs.iter_mut() {
            for d in ty.shape.iter_mut() {
                *d = self.values[k];
                k += 1;
            }
        }
        for (name, v) in out.attrs.iter_mut() {
            match v {
                AttrValue::Int(x) if is_symbolic_int(name) => {
                    *x = self.values[k];
                    k += 1;
                }
                AttrValue::IntList(xs) => {
                    for x in xs.iter_mut() {
                        *x = self.values[k];
                        k += 1;
                    }
                }
                _ => {}
            }
        }
        out
    }
}

pub fn parse_records(text: &str) -> Result<Vec<Record>, RecordError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r = Record::from_line(line).map_err(|source| RecordError::Json { line: i + 1, source })?;
        r.check().map_err(|e| RecordError::Invalid {
            line: i + 1,
            source: Box::new(e),
        })?;
        out.push(r);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<Record>, RecordError> {
    let f = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in io::BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r = Record::from_line(&line).map_err(|source| RecordError::Json { line: i + 1, source })?;
        r.check().map_err(|e| RecordError::Invalid {
            line: i + 1,
            source: Box::new(e),
        })?;
        out.push(r);
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[Record]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        writeln!(w, "{}", r.to_line())?;
    }
    w.flush()
}

/// Reads every `*.jsonl`, `*.pass` and `*.counter` file under `dir`.
pub fn read_record_dir(dir: &Path) -> Result<Vec<Record>, RecordError> {
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(read_records(&f)?);
    }
    Ok(out)
}

fn collect_files(dir: &Path, out: &mut Vec<std::path::PathBuf>) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else if matches!(
            p.extension().and_then(|e| e.to_str()),
            Some("jsonl" | "pass" | "counter" | "records")
        ) {
            out.push(p);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool_record() -> Record {
        let mut attrs = Attrs::new();
        attrs.insert("kh".into(), AttrValue::Int(2));
        attrs.insert("kw".into(), AttrValue::Int(2));
        attrs.insert("stride".into(), AttrValue::Int(1));
        attrs.insert("pad".into(), AttrValue::Int(0));
        Record {
            api: "avg_pool2d".into(),
            inputs: vec![TensorType::f32(&[3, 3, 3])],
            attrs,
            outputs: vec![TensorType::f32(&[3, 2, 2])],
            valid: true,
        }
    }

    #[test]
    fn wire_format_field_names() {
        let line = pool_record().to_line();
        assert_eq!(
            line,
            r#"{"api":"avg_pool2d","inputs":[{"dtype":"f32","shape":[3,3,3]}],"attrs":{"kh":2,"kw":2,"stride":1,"pad":0},"outputs":[{"dtype":"f32","shape":[3,2,2]}],"valid":true}"#
        );
        assert_eq!(Record::from_line(&line).unwrap(), pool_record());
    }

    #[test]
    fn attr_kinds_survive_round_trip() {
        let mut r = pool_record();
        r.attrs.insert("bias".into(), AttrValue::Float(1.0));
        r.attrs.insert("ceil".into(), AttrValue::Bool(true));
        r.attrs.insert("layout".into(), AttrValue::Str("nchw".into()));
        r.attrs.insert("ksize".into(), AttrValue::IntList(vec![1, 2]));
        let back = Record::from_line(&r.to_line()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.attrs.keys().collect::<Vec<_>>(), r.attrs.keys().collect::<Vec<_>>());
    }

    #[test]
    fn env_order_and_write_back() {
        let mut r = pool_record();
        r.attrs.insert("ksize".into(), AttrValue::IntList(vec![5, 6]));
        r.attrs.insert("dim".into(), AttrValue::Int(1));
        let env = r.env();
        assert_eq!(
            env.names,
            vec!["i0_0", "i0_1", "i0_2", "kh", "kw", "stride", "pad", "ksize_0", "ksize_1"]
        );
        let mut e2 = env.clone();
        e2.values[1] = 9;
        e2.values[8] = 7;
        let r2 = e2.apply_to(&r);
        assert_eq!(r2.inputs[0].shape, vec![3, 9, 3]);
        assert_eq!(r2.attrs["ksize"], AttrValue::IntList(vec![5, 7]));
        assert_eq!(r2.attrs["dim"], AttrValue::Int(1));
    }

    #[test]
    fn consistency_checks() {
        let mut r = pool_record();
        r.outputs.clear();
        assert!(matches!(r.check(), Err(RecordError::MissingOutputs(_))));
        let bad = r#"{"api":"x","inputs":[{"dtype":"f32","shape":[-1]}],"attrs":{},"outputs":[],"valid":false}"#;
        assert!(parse_records(bad).is_err());
        let dt = r#"{"api":"x","inputs":[{"dtype":"f16","shape":[1]}],"attrs":{},"outputs":[],"valid":false}"#;
        assert!(matches!(parse_records(dt), Err(RecordError::Json { line: 1, .. })));
    }
}
