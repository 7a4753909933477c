//! Communication-efficient distributed sparse learning.
//!
//! A master machine fits an l1-regularized model on its own shard, then
//! repeatedly re-solves a shifted version of that local problem using
//! gradients gathered from the other machines. Each round moves one
//! p-vector to and from every worker.
//!
//! Modules:
//! - [`model`]: vectors, shards, datasets, loss specifications
//! - [`loss`]: squared and logistic empirical losses
//! - [`prox_solver`]: accelerated proximal gradient for the shifted l1 problem
//! - [`protocol`]: the round protocol, schedules, wire format and transports
//! - [`baselines`]: local, centralized, proximal gradient and averaged debiased fits
//! - [`datagen`]: synthetic Toeplitz-design data and text ingestion
//! - [`harness`]: metrics, experiment runner, CSV and SVG output

pub mod baselines;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod loss;
pub mod model;
pub mod prox_solver;
pub mod protocol;

pub use error::{Error, Result};
pub use model::{Dataset, DenseVector, GroundTruth, LossFamily, LossSpec, Matrix, Shard, Task};
