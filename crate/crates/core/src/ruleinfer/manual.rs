use super::key::key_of;
use super::rule::{OperatorRule, Predicate, Provenance};
use crate::exprsynth::{Expr, ExprError};
use crate::opref::Library;
use crate::trace::Record;

/// The hand-written rule for `record`'s partial operator, if the library
/// operator has one.
pub fn manual_rule(lib: &Library, record: &Record) -> Option<Result<OperatorRule, ExprError>> {
    let spec = (lib.get(&record.api)?.manual?)(record);
    let symbols = record.env().names;
    let build = || -> Result<OperatorRule, ExprError> {
        Ok(OperatorRule {
            key: key_of(record),
            constraints: spec
                .constraints
                .iter()
                .map(|c| Predicate::parse_named(c, &symbols))
                .collect::<Result<_, _>>()?,
            shape_prop: spec
                .shapes
                .iter()
                .map(|d| d.iter().map(|e| Expr::parse_named(e, &symbols)).collect::<Result<_, _>>())
                .collect::<Result<_, _>>()?,
            symbols: symbols.clone(),
            provenance: Provenance::Manual,
        })
    };
    Some(build())
}
