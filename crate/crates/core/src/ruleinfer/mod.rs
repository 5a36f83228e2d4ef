//! Operator rule inference: partial-operator keying, shape propagation,
//! input constraints, predicate deduplication and rule reuse.

pub mod dedup;
mod infer;
mod key;
mod manual;
mod rule;
mod source;

pub use dedup::{deduplicate, implies, Domain};
pub use infer::{
    collect_predicates, group_records, infer_all, infer_input_constraints, infer_rule, infer_shape_prop, try_reuse,
    InferConfig, InferFailure, InferOutcome, PartialOpData, ShapeFailure,
};
pub use key::{key_of, KeyArg, PartialOperatorKey};
pub use manual::manual_rule;
pub use rule::{read_rulebook, write_rulebook, BookError, OperatorRule, PredKind, Predicate, Provenance};
pub use source::{Candidate, ExprSource, TimedOut};
