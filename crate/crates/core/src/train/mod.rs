//! Flow-matching objectives, the difference prior, effect consistency and the
//! joint training step.

pub mod ec;
pub mod flow;
pub mod optim;
pub mod prior;
pub mod step;

pub use ec::{ec_loss, kl_graph, KL_FLOOR};
pub use flow::{denoise_loss, gaussian_grid, sample_timestep};
pub use optim::{AdamW, AdamWConfig};
pub use prior::diff_prior;
pub use step::{build_loss, latent_dims, loss_and_gradients, LossBreakdown, LossGraph, StepDraws, TrainConfig, Trainer};
