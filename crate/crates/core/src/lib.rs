pub mod linalg;
pub mod signal;
pub mod source_model;
pub mod spatial;
pub mod separators;
pub mod evaluation;
pub mod mixsim;
