pub mod analysis;
pub mod capacity;
pub mod discretization;
pub mod error;
pub mod exec;
pub mod fractional;
pub mod instances;
pub mod kernels;
pub mod mesh;
pub mod quad;
pub mod verify;
pub mod solvers;

pub use error::{Error, Result};
