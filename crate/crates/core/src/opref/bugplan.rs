//! Seeded defects for the optimizing executor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graphir::{Def, Graph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Corruption {
    /// Adds 1 to element `2 % numel` of the first result.
    WrongElement,
    /// Drops one element from the last dimension (rank 0 becomes `[1]`).
    WrongShape,
    /// The optimized run aborts.
    Crash,
    /// In-place results stop aliasing; out-of-place results also clobber
    /// the first operand's buffer.
    InplaceAlias,
}

/// A producer chain ending at the instruction the corruption applies to.
///
/// `trigger` is written `a>b>c` (or with `-`) and matches when `c` is the
/// instruction, `b` produces its first operand and `a` produces `b`'s first
/// operand. `*` matches any producer, including a graph input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugSpec {
    pub trigger: String,
    pub corruption: Corruption,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugPlan {
    pub seed: u64,
    pub bugs: Vec<BugSpec>,
}

impl BugSpec {
    pub fn new(trigger: &str, corruption: Corruption) -> BugSpec {
        BugSpec {
            trigger: trigger.to_string(),
            corruption,
        }
    }

    pub fn pattern(&self) -> Vec<&str> {
        self.trigger.split(['>', '-']).map(str::trim).filter(|s| !s.is_empty()).collect()
    }

    /// Whether the chain ending at instruction `idx` matches.
    pub fn matches(&self, graph: &Graph, idx: usize) -> bool {
        let pat = self.pattern();
        let Some((last, rest)) = pat.split_last() else {
            return false;
        };
        if *last != "*" && graph.instructions[idx].api != *last {
            return false;
        }
        let mut cur = idx;
        for (k, want) in rest.iter().enumerate().rev() {
            let Some(&first) = graph.instructions[cur].operands.first() else {
                return false;
            };
            match graph.def_of(first) {
                Some(Def::Inst(p)) => {
                    if *want != "*" && graph.instructions[p].api != *want {
                        return false;
                    }
                    cur = p;
                }
                Some(Def::Input) if *want == "*" && k == 0 => return true,
                _ => return false,
            }
        }
        true
    }
}

impl BugPlan {
    pub fn empty() -> BugPlan {
        BugPlan::default()
    }

    pub fn is_empty(&self) -> bool {
        self.bugs.is_empty()
    }

    /// Corruptions triggered at instruction `idx`, in plan order.
    pub fn triggered(&self, graph: &Graph, idx: usize) -> Vec<(usize, Corruption)> {
        self.bugs
            .iter()
            .enumerate()
            .filter(|(_, b)| b.matches(graph, idx))
            .map(|(k, b)| (k, b.corruption))
            .collect()
    }

    pub fn load(path: &Path) -> Result<BugPlan, std::io::Error> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn save(&self, path: &Path) -> Result<(), std::io::Error> {
        fs::write(path, serde_json::to_string_pretty(self).expect("plan serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Graph {
        Graph::parse(
            "%0: f32[6] = input\n%1: f32[3,2] = unfold(%0) {dim=0, size=2, step=2}\n%2: f32[3,2] = abs_(%1) inplace\nreturn %2\n",
        )
        .unwrap()
    }

    #[test]
    fn chain_patterns() {
        let g = chain();
        assert!(BugSpec::new("*-unfold-abs_", Corruption::Crash).matches(&g, 1));
        assert!(BugSpec::new("unfold>abs_", Corruption::Crash).matches(&g, 1));
        assert!(!BugSpec::new("relu>abs_", Corruption::Crash).matches(&g, 1));
        assert!(!BugSpec::new("*>*>unfold", Corruption::Crash).matches(&g, 0));
        assert!(BugSpec::new("*>unfold", Corruption::Crash).matches(&g, 0));
    }

    #[test]
    fn plan_json_round_trip() {
        let p = BugPlan {
            seed: 7,
            bugs: vec![BugSpec::new("concat2>reciprocal", Corruption::WrongElement)],
        };
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("wrong-element"));
        assert_eq!(serde_json::from_str::<BugPlan>(&text).unwrap(), p);
    }
}
