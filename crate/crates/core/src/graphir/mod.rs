//! SSA program representation for generated test cases.

mod text;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::tensor::TensorType;
use crate::trace::Attrs;

pub use text::ParseError;

pub type ValueId = u32;

/// Where an instruction's operator came from.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum Binding {
    #[default]
    Free,
    /// Instantiated from a rule; carries the partial-operator key id.
    Symbolic(String),
    /// Copied from a stored record.
    Concrete(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instruction {
    pub api: String,
    pub attrs: Attrs,
    pub operands: Vec<ValueId>,
    pub results: Vec<ValueId>,
    pub in_place: bool,
    pub binding: Binding,
}

/// An instruction before it receives result ids.
#[derive(Clone, Debug, PartialEq)]
pub struct NewInstruction {
    pub api: String,
    pub attrs: Attrs,
    pub operands: Vec<ValueId>,
    pub result_types: Vec<TensorType>,
    pub in_place: bool,
    pub binding: Binding,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Def {
    Input,
    Inst(usize),
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("value %{0} is not defined")]
    Undefined(ValueId),
    #[error("value %{value} used by instruction {inst} before its definition")]
    UseBeforeDef { value: ValueId, inst: usize },
    #[error("value %{0} defined twice")]
    Redefined(ValueId),
    #[error("position {0} is out of range")]
    Position(usize),
    #[error("type mismatch: %{old} is {old_ty}, %{new} is {new_ty}")]
    TypeMismatch {
        old: ValueId,
        new: ValueId,
        old_ty: TensorType,
        new_ty: TensorType,
    },
    #[error("in-place instruction {0} must have one result typed like its first operand")]
    InPlace(usize),
    #[error("value %{0} still has uses")]
    InUse(ValueId),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Graph {
    pub inputs: Vec<ValueId>,
    pub instructions: Vec<Instruction>,
    pub outputs: Vec<ValueId>,
    types: BTreeMap<ValueId, TensorType>,
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    fn mint(&self) -> ValueId {
        self.types.keys().next_back().map_or(0, |k| k + 1)
    }

    pub fn ty(&self, v: ValueId) -> Option<&TensorType> {
        self.types.get(&v)
    }

    pub fn value_ids(&self) -> impl Iterator<Item = ValueId> + '_ {
        self.types.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn add_input(&mut self, ty: TensorType) -> ValueId {
        let id = self.mint();
        self.types.insert(id, ty);
        self.inputs.push(id);
        id
    }

    /// Drops a graph input that has no remaining uses.
    pub fn remove_input(&mut self, v: ValueId) -> Result<(), GraphError> {
        if !self.inputs.contains(&v) {
            return Err(GraphError::Undefined(v));
        }
        if self.uses(v).next().is_some() || self.outputs.contains(&v) {
            return Err(GraphError::InUse(v));
        }
        self.inputs.retain(|&x| x != v);
        self.types.remove(&v);
        Ok(())
    }

    pub fn def_of(&self, v: ValueId) -> Option<Def> {
        if self.inputs.contains(&v) {
            return Some(Def::Input);
        }
        self.instructions
            .iter()
            .position(|i| i.results.contains(&v))
            .map(Def::Inst)
    }

    /// Instruction indices that read `v`.
    pub fn uses(&self, v: ValueId) -> impl Iterator<Item = usize> + '_ {
        self.instructions
            .iter()
            .enumerate()
            .filter(move |(_, i)| i.operands.contains(&v))
            .map(|(k, _)| k)
    }

    fn defined_before(&self, position: usize) -> BTreeSet<ValueId> {
        let mut s: BTreeSet<ValueId> = self.inputs.iter().copied().collect();
        for inst in &self.instructions[..position] {
            s.extend(inst.results.iter().copied());
        }
        s
    }

    /// Inserts at `position` (0 = first) and returns the new result ids.
    pub fn insert(&mut self, inst: NewInstruction, position: usize) -> Result<Vec<ValueId>, GraphError> {
        if position > self.instructions.len() {
            return Err(GraphError::Position(position));
        }
        let defined = self.defined_before(position);
        for &v in &inst.operands {
            if !self.types.contains_key(&v) {
                return Err(GraphError::Undefined(v));
            }
            if !defined.contains(&v) {
                return Err(GraphError::UseBeforeDef { value: v, inst: position });
            }
        }
        if inst.in_place
            && (inst.result_types.len() != 1
                || inst.operands.is_empty()
                || self.types[&inst.operands[0]] != inst.result_types[0])
        {
            return Err(GraphError::InPlace(position));
        }
        let first = self.mint();
        let results: Vec<ValueId> = (0..inst.result_types.len() as u32).map(|k| first + k).collect();
        for (&id, ty) in results.iter().zip(inst.result_types) {
            self.types.insert(id, ty);
        }
        self.instructions.insert(
            position,
            Instruction {
                api: inst.api,
                attrs: inst.attrs,
                operands: inst.operands,
                results: results.clone(),
                in_place: inst.in_place,
                binding: inst.binding,
            },
        );
        Ok(results)
    }

    pub fn push(&mut self, inst: NewInstruction) -> Result<Vec<ValueId>, GraphError> {
        let n = self.instructions.len();
        self.insert(inst, n)
    }

    /// Removes instructions whose results are neither outputs nor
    /// transitively used. In-place instructions are always kept.
    pub fn remove_unused(&mut self) -> usize {
        let mut live: BTreeSet<ValueId> = self.outputs.iter().copied().collect();
        let mut keep = vec![false; self.instructions.len()];
        for (k, inst) in self.instructions.iter().enumerate().rev() {
            if inst.in_place || inst.results.iter().any(|r| live.contains(r)) {
                keep[k] = true;
                live.extend(inst.operands.iter().copied());
            }
        }
        let before = self.instructions.len();
        let mut k = 0;
        let mut dead = Vec::new();
        self.instructions.retain(|inst| {
            let kept = keep[k];
            k += 1;
            if !kept {
                dead.extend(inst.results.iter().copied());
            }
            kept
        });
        for v in dead {
            self.types.remove(&v);
        }
        before - self.instructions.len()
    }

    /// Removes instruction `k`. Each of its results that is still read or
    /// returned becomes a new graph input of the same type.
    pub fn cut(&mut self, k: usize) -> Result<(), GraphError> {
        if k >= self.instructions.len() {
            return Err(GraphError::Position(k));
        }
        let results = self.instructions[k].results.clone();
        for r in results {
            if self.uses(r).any(|u| u != k) || self.outputs.contains(&r) {
                let v = self.add_input(self.types[&r].clone());
                self.replace_alluse(r, v)?;
            }
            self.types.remove(&r);
        }
        self.instructions.remove(k);
        Ok(())
    }

    /// Drops graph inputs without uses; returns how many were removed.
    pub fn remove_unused_inputs(&mut self) -> usize {
        let dead: Vec<ValueId> = self
            .inputs
            .iter()
            .copied()
            .filter(|&v| self.uses(v).next().is_none() && !self.outputs.contains(&v))
            .collect();
        for &v in &dead {
            let _ = self.remove_input(v);
        }
        dead.len()
    }

    /// Redirects every use of `old` (operands and outputs) to `new`.
    pub fn replace_alluse(&mut self, old: ValueId, new: ValueId) -> Result<(), GraphError> {
        let old_ty = self.types.get(&old).ok_or(GraphError::Undefined(old))?;
        let new_ty = self.types.get(&new).ok_or(GraphError::Undefined(new))?;
        if old_ty != new_ty {
            return Err(GraphError::TypeMismatch {
                old,
                new,
                old_ty: old_ty.clone(),
                new_ty: new_ty.clone(),
            });
        }
        if let Some(first) = self.uses(old).next() {
            if !self.defined_before(first).contains(&new) {
                return Err(GraphError::UseBeforeDef { value: new, inst: first });
            }
        }
        for inst in &mut self.instructions {
            for o in &mut inst.operands {
                if *o == old {
                    *o = new;
                }
            }
        }
        for o in &mut self.outputs {
            if *o == old {
                *o = new;
            }
        }
        Ok(())
    }

    /// Marks every value without uses as an output, in definition order.
    pub fn set_outputs_to_unused(&mut self) {
        let used: BTreeSet<ValueId> = self.instructions.iter().flat_map(|i| i.operands.iter().copied()).collect();
        self.outputs = self
            .instructions
            .iter()
            .flat_map(|i| i.results.iter().copied())
            .filter(|v| !used.contains(v))
            .collect();
    }

    /// Checks SSA, ordering and output references.
    pub fn check(&self) -> Result<(), GraphError> {
        let mut defined = BTreeSet::new();
        for &v in &self.inputs {
            if !self.types.contains_key(&v) {
                return Err(GraphError::Undefined(v));
            }
            if !defined.insert(v) {
                return Err(GraphError::Redefined(v));
            }
        }
        for (k, inst) in self.instructions.iter().enumerate() {
            for &v in &inst.operands {
                if !defined.contains(&v) {
                    return Err(GraphError::UseBeforeDef { value: v, inst: k });
                }
            }
            for &v in &inst.results {
                if !self.types.contains_key(&v) {
                    return Err(GraphError::Undefined(v));
                }
                if !defined.insert(v) {
                    return Err(GraphError::Redefined(v));
                }
            }
            if inst.in_place
                && (inst.results.len() != 1
                    || inst.operands.is_empty()
                    || self.types[&inst.operands[0]] != self.types[&inst.results[0]])
            {
                return Err(GraphError::InPlace(k));
            }
        }
        if defined.len() != self.types.len() {
            let stray = self.types.keys().find(|v| !defined.contains(v)).copied().unwrap();
            return Err(GraphError::Undefined(stray));
        }
        for &v in &self.outputs {
            if !defined.contains(&v) {
                return Err(GraphError::Undefined(v));
            }
        }
        Ok(())
    }

    pub fn input_types(&self) -> Vec<TensorType> {
        self.inputs.iter().map(|v| self.types[v].clone()).collect()
    }

    pub fn output_types(&self) -> Vec<TensorType> {
        self.outputs.iter().map(|v| self.types[v].clone()).collect()
    }

    pub fn to_text(&self) -> String {
        text::to_text(self)
    }

    pub fn parse(s: &str) -> Result<Graph, ParseError> {
        text::parse(s)
    }

    pub(crate) fn from_parts(
        inputs: Vec<ValueId>,
        instructions: Vec<Instruction>,
        outputs: Vec<ValueId>,
        types: BTreeMap<ValueId, TensorType>,
    ) -> Graph {
        Graph {
            inputs,
            instructions,
            outputs,
            types,
        }
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::AttrValue;

    pub(crate) fn unary(api: &str, x: ValueId, ty: TensorType) -> NewInstruction {
        NewInstruction {
            api: api.into(),
            attrs: Attrs::new(),
            operands: vec![x],
            result_types: vec![ty],
            in_place: api.ends_with('_'),
            binding: Binding::Free,
        }
    }

    #[test]
    fn insert_appends_and_mints() {
        let mut g = Graph::new();
        let x = g.add_input(TensorType::f32(&[2, 2]));
        let r = g.push(unary("relu", x, TensorType::f32(&[2, 2]))).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(r, vec![1]);
        assert!(g.check().is_ok());
    }

    #[test]
    fn insert_rejects_use_before_def() {
        let mut g = Graph::new();
        let x = g.add_input(TensorType::f32(&[2]));
        let r = g.push(unary("relu", x, TensorType::f32(&[2]))).unwrap()[0];
        let err = g.insert(unary("abs", r, TensorType::f32(&[2])), 0).unwrap_err();
        assert_eq!(err, GraphError::UseBeforeDef { value: r, inst: 0 });
        assert_eq!(g.push(unary("abs", 77, TensorType::f32(&[2]))).unwrap_err(), GraphError::Undefined(77));
    }

    #[test]
    fn in_place_flag_and_order() {
        let mut g = Graph::new();
        let x = g.add_input(TensorType::f32(&[6]));
        let mut attrs = Attrs::new();
        attrs.insert("dim".into(), AttrValue::Int(0));
        attrs.insert("size".into(), AttrValue::Int(2));
        attrs.insert("step".into(), AttrValue::Int(2));
        let u = g
            .push(NewInstruction {
                api: "unfold".into(),
                attrs,
                operands: vec![x],
                result_types: vec![TensorType::f32(&[3, 2])],
                in_place: false,
                binding: Binding::Free,
            })
            .unwrap()[0];
        g.push(unary("abs_", u, TensorType::f32(&[3, 2]))).unwrap();
        assert!(g.instructions[1].in_place);
        assert_eq!(g.instructions[0].api, "unfold");
        assert!(g.push(unary("abs_", u, TensorType::f32(&[2, 3]))).is_err());
    }

    #[test]
    fn remove_unused_keeps_outputs_and_in_place() {
        let mut g = Graph::new();
        let x = g.add_input(TensorType::f32(&[2]));
        let a = g.push(unary("relu", x, TensorType::f32(&[2]))).unwrap()[0];
        let _dead = g.push(unary("tanh", x, TensorType::f32(&[2]))).unwrap()[0];
        let _inplace = g.push(unary("abs_", x, TensorType::f32(&[2]))).unwrap()[0];
        g.outputs = vec![a];
        assert_eq!(g.remove_unused(), 1);
        assert_eq!(g.instructions.iter().map(|i| i.api.as_str()).collect::<Vec<_>>(), vec!["relu", "abs_"]);
        assert_eq!(g.remove_unused(), 0);
        assert!(g.check().is_ok());
    }

    #[test]
    fn replace_alluse_then_remove() {
        let mut g = Graph::new();
        let x = g.add_input(TensorType::f32(&[2]));
        let a = g.push(unary("relu", x, TensorType::f32(&[2]))).unwrap()[0];
        let b = g.push(unary("abs", x, TensorType::f32(&[2]))).unwrap()[0];
        let c = g.push(unary("tanh", a, TensorType::f32(&[2]))).unwrap()[0];
        g.outputs = vec![c, a];
        g.replace_alluse(a, b).unwrap();
        assert_eq!(g.instructions[2].operands, vec![b]);
        assert_eq!(g.outputs, vec![c, b]);
        assert_eq!(g.remove_unused(), 1);
        assert!(g.ty(a).is_none());
        let y = g.add_input(TensorType::f32(&[3]));
        assert!(matches!(g.replace_alluse(b, y), Err(GraphError::TypeMismatch { .. })));
    }

    #[test]
    fn cut_turns_live_results_into_inputs() {
        let mut g = Graph::parse("%0: f32[3] = input\n%1: f32[3] = relu(%0)\n%2: f32[3] = abs(%1)\n%3: f32[3] = tanh(%0)\nreturn %2, %3\n").unwrap();
        g.cut(0).unwrap();
        g.check().unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.inputs.len(), 2);
        assert_eq!(g.instructions[0].operands, vec![g.inputs[1]]);
        g.cut(1).unwrap();
        g.check().unwrap();
        // %3 was returned, so it survives as an input
        assert_eq!(g.outputs.len(), 2);
        assert!(g.outputs.iter().all(|&o| g.ty(o).is_some()));
        g.cut(0).unwrap();
        g.check().unwrap();
        assert!(g.is_empty());
        assert_eq!(g.remove_unused_inputs(), 2);
        assert_eq!(g.inputs.len(), 2);
        assert_eq!(g.cut(0), Err(GraphError::Position(0)));
    }

}
