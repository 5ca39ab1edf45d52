//! Algorithmic core for the effect-aware video object removal lab.
//!
//! Everything here is `no_std` + `alloc`: video and mask containers, the
//! procedural paired-video generator, a small reverse-mode autodiff tape over
//! `f64`, the toy diffusion transformer with task-aware prompt conditioning,
//! flow-matching training with the effect consistency loss, the Euler sampler
//! and metric kernels. File formats, the training loop driver, the HTTP
//! client and the command line live in the `effecterase-lab` crate.

#![no_std]

extern crate alloc;

pub mod autodiff;
pub mod error;
pub mod math;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sample;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod video;

pub use error::{Error, Result};
pub use tensor::Tensor;
pub use video::{MaskVideo, TripletSample, VideoTensor};
