pub mod ablate;
pub mod checks;
pub mod eval;
pub mod features;
pub mod sr;
pub mod train;
