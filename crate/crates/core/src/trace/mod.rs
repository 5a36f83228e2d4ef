//! Invocation records: data model, trace filters, simplification and seed
//! collection from the reference library.

mod collect;
mod filter;
mod record;
mod simplify;

pub use collect::{collect_seeds, CollectReport};
pub use filter::{check_determinism, check_value_independence, VALUE_RANGE};
pub use record::{
    input_dim_name, is_symbolic_int, output_dim_name, parse_records, read_record_dir, read_records, write_records,
    AttrValue, Attrs, Record, RecordError, SymbolEnv, CATEGORICAL_INT_ATTRS,
};
pub use simplify::{simplify, RawArg, RawInvocation, SkipReason};
