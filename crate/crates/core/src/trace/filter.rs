use rand::Rng;

use super::Record;
use crate::opref::Invoker;
use crate::tensor::{Tensor, TensorType};

/// Element range for the value-independence fills.
pub const VALUE_RANGE: f64 = 1e6;

fn fill<R: Rng>(types: &[TensorType], range: f64, rng: &mut R) -> Vec<Tensor> {
    types.iter().map(|t| Tensor::random(t, range, range as i64, rng)).collect()
}

/// Three replays on the same inputs must succeed with bitwise-equal outputs.
pub fn check_determinism<R: Rng>(exec: &dyn Invoker, record: &Record, rng: &mut R) -> bool {
    let inputs = fill(&record.inputs, 5.0, rng);
    let mut first: Option<Vec<Tensor>> = None;
    for _ in 0..3 {
        let Ok(outs) = exec.invoke(&record.api, &inputs, &record.attrs) else {
            return false;
        };
        match &first {
            None => first = Some(outs),
            Some(f) => {
                if f.len() != outs.len() || f.iter().zip(&outs).any(|(a, b)| !a.bit_eq(b)) {
                    return false;
                }
            }
        }
    }
    true
}

/// Three fresh fills over `[-VALUE_RANGE, VALUE_RANGE]` must all succeed
/// with identical output types.
pub fn check_value_independence<R: Rng>(exec: &dyn Invoker, record: &Record, rng: &mut R) -> bool {
    let mut first: Option<Vec<TensorType>> = None;
    for _ in 0..3 {
        let inputs = fill(&record.inputs, VALUE_RANGE, rng);
        let Ok(outs) = exec.invoke(&record.api, &inputs, &record.attrs) else {
            return false;
        };
        let types: Vec<TensorType> = outs.into_iter().map(|t| t.ty).collect();
        match &first {
            None => first = Some(types),
            Some(f) if *f != types => return false,
            Some(_) => {}
        }
    }
    true
}
