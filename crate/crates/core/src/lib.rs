pub mod ensemble;
pub mod cli;
pub mod error;
pub mod functionals;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod solvers;
pub mod verify;

pub use error::{Error, Result};
