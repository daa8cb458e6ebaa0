//! Constrained multi-objective Bayesian optimization via predictive entropy
//! search, with a random-search baseline and a benchmark harness.
//!
//! The numerical core is generic over the scalar type; the `f64`
//! instantiation re-exported here is what the CLI and benchmarks use.

pub mod acquisition;
pub mod driver;
pub mod ep;
pub mod error;
pub mod gp;
pub mod linalg;
pub mod normal;
pub mod pareto;
pub mod problem;
pub mod qmc;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{SampleScalar, Scalar};

/// Default scalar type for the CLI and benchmark harness.
pub type Real = f64;
