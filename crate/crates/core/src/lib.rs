//! Minimum Wasserstein Estimates for multi-subject sparse regression.
//!
//! The crate is organised around the pipeline used for group source imaging:
//!
//! * [`model`] holds the multi-task data and its preprocessing rules,
//! * [`ot`] implements entropic unbalanced optimal transport and an exact EMD,
//! * [`solvers`] contains the independent and multi-task estimators,
//! * [`simulate`] generates reproducible synthetic inverse problems,
//! * [`metrics`] scores estimates against ground truth,
//! * [`io`] reads and writes the matrix file formats.

pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod ot;
pub mod simulate;
pub mod solvers;

pub use error::{Error, Result};
pub use model::{GroundMetric, NoiseModel, ProblemInstance, SignedVector, Subject};
