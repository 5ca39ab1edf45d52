//! File formats, dataset generation, the training driver, evaluation, the
//! VLM client and the `effecterase` command line around `effecterase-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod frames;
pub mod logging;
pub mod mock;
pub mod trainloop;
pub mod triplet;
pub mod vlm;

pub use error::{ErrorClass, LabError, Result};
