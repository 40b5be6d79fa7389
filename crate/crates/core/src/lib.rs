pub mod agents;
pub mod env;
pub mod error;
pub mod evaluation;
pub mod market_data;
pub mod ndcore;
pub mod policies;
pub mod runner;

pub use error::{Error, Result};
