pub mod bivariate;
pub mod catalog;
pub mod cli;
pub mod error;
pub mod evt;
pub mod hier;
pub mod optim;
pub mod report;
pub mod rng;
pub mod simulate;
pub mod trend;

pub use error::{Error, Result};

#[cfg(test)]
#[path = "../tests/common/quad.rs"]
pub(crate) mod quad;
