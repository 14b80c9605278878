pub mod ablate;
pub mod estimate;
pub mod evaluate;
pub mod lbsim;
pub mod simulate;
