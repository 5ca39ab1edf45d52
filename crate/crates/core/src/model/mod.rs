//! Toy latent codec, conditioning paths and the diffusion transformer.

pub mod config;
pub mod latent;
pub mod net;
pub mod params;
pub mod prompt;

pub use config::ModelConfig;
pub use latent::{
    build_condition, decode_latent, encode_latent, encode_mask, forward_noise, insertion_condition, removal_condition,
    target_latent, velocity_target, LatentGrid, TaskKind,
};
pub use net::{adaptor_fuse, dit_forward, map_effect, pool_attention, AttentionStack, Bound, Forward, TokenMap};
pub use params::{apply_lora, LoraSpec, Model, Param, ParamStore};
pub use prompt::{
    build_prompt, foreground_crop, foreground_tokens, project_foreground, prompt_for, select_foreground_frame,
    PromptEmbedding, PROMPT_LEN, SLOT_INDEX,
};
