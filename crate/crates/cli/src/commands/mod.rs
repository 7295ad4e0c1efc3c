pub mod nqm;
pub mod quad;
pub mod taylor;
pub mod train;
