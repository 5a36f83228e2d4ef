pub mod augment;
pub mod exprsynth;
pub mod fuzz;
pub mod generate;
pub mod graphir;
pub mod opref;
pub mod ruleinfer;
pub mod tensor;
pub mod trace;
