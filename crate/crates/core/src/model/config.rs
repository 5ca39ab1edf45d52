use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::CHANNELS;

/// Shape of the network. Every field has a default matching the tiny
/// configuration used by the gradient check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Spatial patch size of the latent codec.
    pub patch_size: usize,
    pub model_dim: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    /// Hidden width of the feed-forward, as a multiple of `model_dim`.
    pub ffn_mult: usize,
    pub token_dim: usize,
    pub lora_rank: usize,
    pub lora_alpha: f64,
    /// Side of the resized foreground crop fed to the foreground encoder.
    pub fg_patch: usize,
    pub fg_channels: usize,
    /// Width of the foreground embedding `e^f`.
    pub fg_dim: usize,
    pub mapper_hidden: usize,
    /// Number of sinusoid frequencies in the timestep embedding.
    pub time_freqs: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::tiny()
    }
}

impl ModelConfig {
    pub fn tiny() -> Self {
        Self {
            patch_size: 2,
            model_dim: 16,
            n_blocks: 2,
            n_heads: 2,
            ffn_mult: 2,
            token_dim: 16,
            lora_rank: 2,
            lora_alpha: 2.0,
            fg_patch: 8,
            fg_channels: 4,
            fg_dim: 8,
            mapper_hidden: 4,
            time_freqs: 8,
        }
    }

    /// Width used by the overfit run: the model dimension has to hold the
    /// `4 * c_lat` values of one token's velocity.
    pub fn small() -> Self {
        Self {
            model_dim: 64,
            n_heads: 4,
            token_dim: 32,
            lora_rank: 8,
            lora_alpha: 8.0,
            fg_patch: 16,
            fg_channels: 8,
            fg_dim: 16,
            mapper_hidden: 8,
            time_freqs: 16,
            ..Self::tiny()
        }
    }

    /// Latent channels of the space-to-channel codec.
    pub fn c_lat(&self) -> usize {
        CHANNELS * self.patch_size * self.patch_size
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.n_heads
    }

    pub fn ffn_dim(&self) -> usize {
        self.model_dim * self.ffn_mult
    }

    pub fn lora_scale(&self) -> f64 {
        self.lora_alpha / self.lora_rank as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.patch_size == 0 {
            return bad("patch_size must be positive");
        }
        if self.n_heads == 0 || self.model_dim % self.n_heads != 0 {
            return bad("model_dim must be divisible by n_heads");
        }
        if self.n_blocks == 0 {
            return bad("n_blocks must be positive");
        }
        if self.lora_rank == 0 {
            return bad("lora_rank must be at least 1");
        }
        if self.fg_patch < 4 || self.fg_patch % 4 != 0 {
            return bad("fg_patch must be a positive multiple of 4");
        }
        if self.ffn_mult == 0 || self.token_dim == 0 || self.fg_channels == 0 || self.fg_dim == 0 {
            return bad("layer widths must be positive");
        }
        if self.mapper_hidden == 0 || self.time_freqs == 0 {
            return bad("mapper_hidden and time_freqs must be positive");
        }
        Ok(())
    }

    /// Checks that a `height x width` video fits the codec and adaptor strides.
    pub fn check_video_size(&self, height: usize, width: usize) -> Result<()> {
        let s = 2 * self.patch_size;
        if height % s != 0 || width % s != 0 {
            return Err(Error::shape(alloc::format!(
                "video {height}x{width} is not divisible by {s} (patch size x adaptor stride)"
            )));
        }
        Ok(())
    }
}
