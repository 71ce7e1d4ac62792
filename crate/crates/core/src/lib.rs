pub mod backward;
pub mod bench;
pub mod bigm;
pub mod cli;
pub mod error;
pub mod ftcp;
pub mod milp;
pub mod model;
pub mod tree;

pub use error::{Error, Result};
