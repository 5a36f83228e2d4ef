//! Arithmetic expression grammar, enumeration and pruning.

pub mod cache;
pub mod counts;
pub mod enumerate;
pub mod expr;
pub mod normal;

pub use enumerate::{
    decide_equivalence, enumerate_hole_exprs, extend_holes, prune_equivalence, Combinations,
    Equivalence, Fingerprinter, GrammarConfig, HoleExpr, HoleSet, PruningConfig, MAX_HOLES,
};
pub use expr::{BinOp, Expr, ExprError, Program};
pub use normal::Normalizer;
