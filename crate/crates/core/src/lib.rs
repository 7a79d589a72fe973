//! Robust estimation of a discrete distribution from batches of samples,
//! when up to a `beta` fraction of the batches may be adversarial.
//!
//! The pipeline is: [`detect`] finds a subset of the alphabet on which the
//! empirical variance of the batch measures disagrees with the variance
//! implied by their mean, [`prune`] deletes high-corruption batches for that
//! subset, and [`estimate`] repeats the two until no large disagreement
//! remains. [`simulate`] generates seeded synthetic instances.

pub mod detect;
pub mod error;
pub mod estimate;
pub mod format;
pub mod model;
pub mod prune;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use model::{Batch, BatchCollection, Distribution, EstimatorParams, Provenance, SubsetMask, Tuning};
