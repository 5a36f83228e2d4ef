//! Line-oriented text form:
//!
//! ```text
//! %0: f32[3,3,3] = input
//! %1: f32[3,2,2] = avg_pool2d(%0) {kh=2, kw=2, stride=1, pad=0}
//! %2: f32[3,2,2] = abs_(%1) inplace
//! return %2
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use thiserror::Error;

use super::{Binding, Graph, Instruction, ValueId};
use crate::tensor::{DType, TensorType};
use crate::trace::{AttrValue, Attrs};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

pub(crate) fn format_attr(v: &AttrValue) -> String {
    match v {
        AttrValue::Int(i) => i.to_string(),
        AttrValue::Float(f) => format!("{f:?}"),
        AttrValue::Bool(b) => b.to_string(),
        AttrValue::Str(s) => format!("{s:?}"),
        AttrValue::IntList(l) => {
            let items: Vec<String> = l.iter().map(|x| x.to_string()).collect();
            format!("[{}]", items.join(","))
        }
    }
}

pub(crate) fn format_attrs(attrs: &Attrs) -> String {
    let items: Vec<String> = attrs.iter().map(|(k, v)| format!("{k}={}", format_attr(v))).collect();
    format!("{{{}}}", items.join(", "))
}

pub(super) fn to_text(g: &Graph) -> String {
    let mut out = String::new();
    for &v in &g.inputs {
        writeln!(out, "%{v}: {} = input", g.types[&v]).unwrap();
    }
    for inst in &g.instructions {
        let results: Vec<String> = inst.results.iter().map(|r| format!("%{r}: {}", g.types[r])).collect();
        let operands: Vec<String> = inst.operands.iter().map(|o| format!("%{o}")).collect();
        write!(out, "{} = {}({})", results.join(", "), inst.api, operands.join(", ")).unwrap();
        if !inst.attrs.is_empty() {
            write!(out, " {}", format_attrs(&inst.attrs)).unwrap();
        }
        if inst.in_place {
            out.push_str(" inplace");
        }
        match &inst.binding {
            Binding::Free => {}
            Binding::Symbolic(k) => write!(out, " sym={k}").unwrap(),
            Binding::Concrete(r) => write!(out, " rec={r}").unwrap(),
        }
        out.push('\n');
    }
    let outs: Vec<String> = g.outputs.iter().map(|o| format!("%{o}")).collect();
    writeln!(out, "return {}", outs.join(", ")).unwrap();
    out
}

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            line: self.line,
            col: self.pos + 1,
            msg: msg.into(),
        })
    }

    fn mark(&mut self) -> usize {
        self.ws();
        self.pos
    }

    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected `{}`", c as char))
        }
    }

    fn word(&mut self) -> Result<&'a str, ParseError> {
        self.ws();
        let start = self.pos;
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_alphanumeric() || self.s[self.pos] == b'_') {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected identifier");
        }
        Ok(std::str::from_utf8(&self.s[start..self.pos]).unwrap())
    }

    fn number_text(&mut self) -> Result<&'a str, ParseError> {
        self.ws();
        let start = self.pos;
        while self.pos < self.s.len() && matches!(self.s[self.pos], b'0'..=b'9' | b'-' | b'+' | b'.' | b'e' | b'E') {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected number");
        }
        Ok(std::str::from_utf8(&self.s[start..self.pos]).unwrap())
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        let at = self.mark();
        let t = self.number_text()?;
        t.parse().or_else(|_| {
            self.pos = at;
            self.err(format!("bad integer `{t}`"))
        })
    }

    fn value_ref(&mut self) -> Result<ValueId, ParseError> {
        self.expect(b'%')?;
        let at = self.mark();
        let t = self.number_text()?;
        t.parse().or_else(|_| {
            self.pos = at;
            self.err(format!("bad value id `{t}`"))
        })
    }

    fn tensor_type(&mut self) -> Result<TensorType, ParseError> {
        let at = self.mark();
        let name = self.word()?;
        let Some(dtype) = DType::parse(name) else {
            self.pos = at;
            return self.err(format!("unknown dtype `{name}`"));
        };
        self.expect(b'[')?;
        let mut shape = Vec::new();
        if !self.eat(b']') {
            loop {
                shape.push(self.int()?);
                if self.eat(b']') {
                    break;
                }
                self.expect(b',')?;
            }
        }
        let ty = TensorType { dtype, shape };
        if let Err(e) = ty.validate() {
            self.pos = at;
            return self.err(e.to_string());
        }
        Ok(ty)
    }

    fn attr_value(&mut self) -> Result<AttrValue, ParseError> {
        match self.peek() {
            Some(b'"') => {
                self.pos += 1;
                let start = self.pos;
                while self.pos < self.s.len() && self.s[self.pos] != b'"' {
                    self.pos += 1;
                }
                if self.pos == self.s.len() {
                    return self.err("unterminated string");
                }
                let s = std::str::from_utf8(&self.s[start..self.pos]).unwrap().to_string();
                self.pos += 1;
                Ok(AttrValue::Str(s))
            }
            Some(b'[') => {
                self.pos += 1;
                let mut items = Vec::new();
                if !self.eat(b']') {
                    loop {
                        items.push(self.int()?);
                        if self.eat(b']') {
                            break;
                        }
                        self.expect(b',')?;
                    }
                }
                Ok(AttrValue::IntList(items))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let at = self.mark();
                match self.word()? {
                    "true" => Ok(AttrValue::Bool(true)),
                    "false" => Ok(AttrValue::Bool(false)),
                    "inf" => Ok(AttrValue::Float(f64::INFINITY)),
                    "NaN" => Ok(AttrValue::Float(f64::NAN)),
                    w => {
                        self.pos = at;
                        self.err(format!("unexpected `{w}`"))
                    }
                }
            }
            _ => {
                let at = self.mark();
                let t = self.number_text()?;
                let parsed = if t.contains(['.', 'e', 'E']) {
                    t.parse::<f64>().ok().map(AttrValue::Float)
                } else {
                    t.parse::<i64>().ok().map(AttrValue::Int)
                };
                parsed.map_or_else(
                    || {
                        self.pos = at;
                        self.err(format!("bad attribute value `{t}`"))
                    },
                    Ok,
                )
            }
        }
    }

    fn at_end(&mut self) -> bool {
        self.peek().is_none()
    }
}

pub(super) fn parse(text: &str) -> Result<Graph, ParseError> {
    let mut inputs = Vec::new();
    let mut instructions: Vec<Instruction> = Vec::new();
    let mut outputs = None;
    let mut types = BTreeMap::new();
    let mut defined = BTreeSet::new();

    for (k, raw) in text.lines().enumerate() {
        let mut c = Cursor {
            s: raw.as_bytes(),
            pos: 0,
            line: k + 1,
        };
        match c.peek() {
            None | Some(b'#') => continue,
            _ => {}
        }
        if outputs.is_some() {
            return c.err("content after `return`");
        }
        if c.peek() == Some(b'r') {
            let kw = c.word()?;
            if kw != "return" {
                c.pos = 0;
                return c.err("expected `%` or `return`");
            }
            let mut outs = Vec::new();
            while !c.at_end() {
                let at = c.mark();
                let v = c.value_ref()?;
                if !defined.contains(&v) {
                    c.pos = at;
                    return c.err(format!("%{v} is not defined"));
                }
                outs.push(v);
                if !c.eat(b',') {
                    break;
                }
            }
            if !c.at_end() {
                return c.err("trailing characters");
            }
            outputs = Some(outs);
            continue;
        }

        let mut results = Vec::new();
        loop {
            let at = c.mark();
            let v = c.value_ref()?;
            c.expect(b':')?;
            let ty = c.tensor_type()?;
            if types.contains_key(&v) {
                c.pos = at;
                return c.err(format!("%{v} defined twice"));
            }
            types.insert(v, ty);
            results.push((v, at));
            if !c.eat(b',') {
                break;
            }
        }
        c.expect(b'=')?;
        let api_at = c.mark();
        let api = c.word()?;
        if api == "input" {
            if !instructions.is_empty() {
                c.pos = api_at;
                return c.err("inputs must precede instructions");
            }
            if results.len() != 1 {
                return c.err("an input line defines exactly one value");
            }
            if !c.at_end() {
                return c.err("trailing characters");
            }
            inputs.push(results[0].0);
            defined.insert(results[0].0);
            continue;
        }
        c.expect(b'(')?;
        let mut operands = Vec::new();
        if !c.eat(b')') {
            loop {
                let at = c.mark();
                let v = c.value_ref()?;
                if !defined.contains(&v) {
                    c.pos = at;
                    return c.err(format!("%{v} used before definition"));
                }
                operands.push(v);
                if c.eat(b')') {
                    break;
                }
                c.expect(b',')?;
            }
        }
        let mut attrs = Attrs::new();
        if c.eat(b'{') && !c.eat(b'}') {
            loop {
                let name = c.word()?.to_string();
                c.expect(b'=')?;
                let v = c.attr_value()?;
                if attrs.insert(name.clone(), v).is_some() {
                    return c.err(format!("duplicate attribute `{name}`"));
                }
                if c.eat(b'}') {
                    break;
                }
                c.expect(b',')?;
            }
        }
        let mut in_place = false;
        let mut binding = Binding::Free;
        while !c.at_end() {
            let at = c.mark();
            match c.word()? {
                "inplace" => in_place = true,
                "sym" => {
                    c.expect(b'=')?;
                    binding = Binding::Symbolic(c.word()?.to_string());
                }
                "rec" => {
                    c.expect(b'=')?;
                    binding = Binding::Concrete(c.int()? as u64);
                }
                w => {
                    c.pos = at;
                    return c.err(format!("unknown annotation `{w}`"));
                }
            }
        }
        if in_place && (results.len() != 1 || operands.is_empty() || types[&operands[0]] != types[&results[0].0]) {
            c.pos = api_at;
            return c.err("in-place instruction must return one value typed like its first operand");
        }
        for (v, _) in &results {
            defined.insert(*v);
        }
        instructions.push(Instruction {
            api: api.to_string(),
            attrs,
            operands,
            results: results.into_iter().map(|(v, _)| v).collect(),
            in_place,
            binding,
        });
    }
    Ok(Graph::from_parts(inputs, instructions, outputs.unwrap_or_default(), types))
}
