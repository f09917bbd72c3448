pub mod dataset;
pub mod error;
pub mod eval;
pub mod gan;
pub mod metric;
pub mod nn;
pub mod pipeline;
pub mod seed;

pub use error::{DataError, Error, Result};
