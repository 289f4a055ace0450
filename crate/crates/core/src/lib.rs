pub mod agents;
pub mod cbn;
pub mod env;
pub mod error;
pub mod gaussian;
pub mod nn;
pub mod par;
pub mod rng;
pub mod train_eval;

pub use error::{Error, Result};
