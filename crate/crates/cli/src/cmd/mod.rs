pub mod augment;
pub mod checks;
pub mod dataset;
pub mod eval;
