//! Station-to-user transfer learning on farecard trip data.
//!
//! The pipeline factorizes an origin-destination temporal flow matrix with a
//! tidal-regularized NMF, projects sparse users onto the learned temporal
//! signatures, aggregates signatures into station and user functions, and
//! benchmarks user clusterings with a resampling stability test.

pub mod clustering;
pub mod data;
pub mod error;
pub mod exec;
pub mod factorization;
pub mod format;
pub mod linalg;
pub mod seed;
pub mod transfer;

pub use error::{Error, Result};
pub use exec::Execution;
