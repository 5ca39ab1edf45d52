//! Euler integration of the learned flow from noise (`t = 0`) to data
//! (`t = 1`), and the removal / insertion pipelines built on it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    decode_latent, dit_forward, insertion_condition, prompt_for, removal_condition, LatentGrid, Model,
    PromptEmbedding, TaskKind,
};
use crate::rng::seeded;
use crate::train::gaussian_grid;
use crate::video::{MaskVideo, VideoTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    pub steps: usize,
    pub seed: u64,
    pub task: TaskKind,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { steps: 50, seed: 0, task: TaskKind::Removal }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// A velocity field `v(x, t)`.
pub trait VelocityField {
    fn velocity(&self, x: &LatentGrid, t: f64) -> Result<LatentGrid>;
}

/// Runs `x <- x + v(x, k / steps) / steps` for `k = 0..steps` starting at `z`.
pub fn euler_integrate(field: &impl VelocityField, z: LatentGrid, steps: usize) -> Result<LatentGrid> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    let n = steps as f64;
    let mut x = z;
    for k in 0..steps {
        let v = field.velocity(&x, k as f64 / n)?;
        if v.dims() != x.dims() {
            return Err(Error::shape("velocity field changed the latent shape"));
        }
        for (a, b) in x.data_mut().iter_mut().zip(v.data()) {
            *a += b / n;
        }
        if let Some(i) = x.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(alloc::format!("sampler state element {i} after step {}", k + 1)));
        }
    }
    Ok(x)
}

/// Draws `z ~ N(0, I)` from `rng` and integrates it.
pub fn euler_sample(
    field: &impl VelocityField,
    dims: (usize, usize, usize, usize),
    steps: usize,
    rng: &mut impl Rng,
) -> Result<LatentGrid> {
    let z = gaussian_grid(rng, dims);
    euler_integrate(field, z, steps)
}

/// The trained network with a fixed condition and prompt.
pub struct ModelField<'a> {
    pub model: &'a Model,
    pub condition: LatentGrid,
    pub prompt: PromptEmbedding,
}

impl VelocityField for ModelField<'_> {
    fn velocity(&self, x: &LatentGrid, t: f64) -> Result<LatentGrid> {
        Ok(dit_forward(self.model, x, &self.condition, &self.prompt, t)?.0)
    }
}

fn run(model: &Model, condition: LatentGrid, prompt: PromptEmbedding, cfg: &SampleConfig) -> Result<VideoTensor> {
    cfg.validate()?;
    let p = model.config.patch_size;
    let dims = (condition.frames(), condition.height(), condition.width(), model.config.c_lat());
    let field = ModelField { model, condition, prompt };
    let x = euler_sample(&field, dims, cfg.steps, &mut seeded(cfg.seed))?;
    decode_latent(&x, p)
}

/// Removes the masked objects and their effects from `video`.
pub fn remove_objects(model: &Model, video: &VideoTensor, mask: &MaskVideo, cfg: &SampleConfig) -> Result<VideoTensor> {
    model.config.check_video_size(video.height(), video.width())?;
    let condition = removal_condition(video, mask, model.config.patch_size)?;
    let prompt = prompt_for(model, TaskKind::Removal, video, mask)?;
    run(model, condition, prompt, cfg)
}

/// Inserts the masked object of `object_video` (with plausible effects) into `background`.
pub fn insert_objects(
    model: &Model,
    background: &VideoTensor,
    object_video: &VideoTensor,
    mask: &MaskVideo,
    cfg: &SampleConfig,
) -> Result<VideoTensor> {
    model.config.check_video_size(background.height(), background.width())?;
    let condition = insertion_condition(background, object_video, mask, model.config.patch_size)?;
    let prompt = prompt_for(model, TaskKind::Insertion, object_video, mask)?;
    run(model, condition, prompt, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    struct Constant(f64);

    impl VelocityField for Constant {
        fn velocity(&self, x: &LatentGrid, _t: f64) -> Result<LatentGrid> {
            let (t, h, w, c) = x.dims();
            LatentGrid::new(t, h, w, c, vec![self.0; t * h * w * c])
        }
    }

    #[test]
    fn constant_field_telescopes_exactly() {
        // Dyadic values keep every partial sum exact.
        let z = LatentGrid::new(1, 1, 2, 1, vec![0.5, -1.25]).unwrap();
        for steps in [1, 5, 50] {
            let x = euler_integrate(&Constant(25.0 / 32.0 * 2.0), z.clone(), steps).unwrap();
            assert_eq!(x.data(), &[0.5 + 1.5625, -1.25 + 1.5625]);
        }
    }

    #[test]
    fn single_step_is_one_evaluation_at_zero() {
        struct Echo;
        impl VelocityField for Echo {
            fn velocity(&self, x: &LatentGrid, t: f64) -> Result<LatentGrid> {
                assert_eq!(t, 0.0);
                Ok(x.clone())
            }
        }
        let z = LatentGrid::new(1, 1, 1, 2, vec![0.25, -3.0]).unwrap();
        assert_eq!(euler_integrate(&Echo, z, 1).unwrap().data(), &[0.5, -6.0]);
    }

    #[test]
    fn zero_steps_rejected() {
        assert!(euler_integrate(&Constant(1.0), LatentGrid::zeros(1, 1, 1, 1), 0).is_err());
    }
}
