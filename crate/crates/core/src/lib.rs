pub mod error;
pub mod numerics;

pub use error::{Error, Result};
pub mod dictionaries;
pub mod etr;
pub mod geometry;
pub mod harness;
pub mod sparsity;
pub mod solvers;
