pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod infer;
pub mod losses;
pub mod nets;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
