//! Fidelity metrics, Fréchet distance with pluggable features, and the pure
//! parts of the VLM quality score.

pub mod features;
pub mod fidelity;
pub mod frechet;
pub mod linalg;
pub mod qscore;

pub use features::{perceptual_distance, FeatureExtractor, RandomProjectionExtractor};
pub use fidelity::{mse, psnr, ssim, ssim_from_moments};
pub use frechet::{frechet_distance, frechet_from_fits, gaussian_fit, COVARIANCE_RIDGE};
pub use qscore::{evenly_spaced_frames, parse_score};
