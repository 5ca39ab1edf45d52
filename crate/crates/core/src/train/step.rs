//! Joint removal + insertion training step.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::model::net::{dit_graph, mapper_graph, pool_graph, Bound};
use crate::model::prompt::{encode_foreground, foreground_crop, project_graph, prompt_graph};
use crate::model::{
    build_condition, forward_noise, target_latent, velocity_target, LatentGrid, Model, TaskKind, TokenMap, SLOT_INDEX,
};
use crate::rng::{derive_seed, seeded, ChaCha8Rng};
use crate::train::ec::kl_graph;
use crate::train::flow::{gaussian_grid, sample_timestep};
use crate::train::optim::{AdamW, AdamWConfig};
use crate::train::prior::diff_prior;
use crate::video::TripletSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Triplets per optimizer step, via gradient accumulation.
    pub batch_size: usize,
    pub max_steps: u64,
    /// Weight of the effect-consistency term.
    pub lambda_ec: f64,
    pub timestep_loc: f64,
    pub timestep_scale: f64,
    pub seed: u64,
    pub checkpoint_interval: u64,
    /// Floor mass added to every cell of the difference prior.
    pub epsilon_prior: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 1,
            max_steps: 1000,
            lambda_ec: 0.1,
            timestep_loc: 0.0,
            timestep_scale: 1.0,
            seed: 0,
            checkpoint_interval: 100,
            epsilon_prior: 1e-3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.lambda_ec >= 0.0) {
            return bad("lambda_ec must be non-negative");
        }
        if !(self.epsilon_prior > 0.0) {
            return bad("epsilon_prior must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.timestep_scale >= 0.0) {
            return bad("timestep_scale must be non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub denoise_removal: f64,
    pub denoise_insertion: f64,
    pub ec: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.denoise_removal.is_finite() && self.denoise_insertion.is_finite() && self.ec.is_finite() && self.total.is_finite()
    }
}

/// Random draws of one step: a timestep shared by both branches and an
/// independent noise grid per branch.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDraws {
    pub t: f64,
    pub z_removal: LatentGrid,
    pub z_insertion: LatentGrid,
}

impl StepDraws {
    pub fn sample(rng: &mut impl Rng, dims: (usize, usize, usize, usize), config: &TrainConfig) -> Self {
        let t = sample_timestep(rng, config.timestep_loc, config.timestep_scale);
        let z_removal = gaussian_grid(rng, dims);
        let z_insertion = gaussian_grid(rng, dims);
        Self { t, z_removal, z_insertion }
    }
}

/// The loss of one triplet on a fresh tape.
#[derive(Debug, Clone)]
pub struct LossGraph {
    pub graph: Graph,
    pub bound: Bound,
    pub total: Var,
    pub breakdown: LossBreakdown,
    /// Soft effect maps of the removal and insertion branches.
    pub effect_maps: (Var, Var),
    pub prior: TokenMap,
}

pub fn latent_dims(model: &Model, sample: &TripletSample) -> Result<(usize, usize, usize, usize)> {
    let v = &sample.object_video;
    model.config.check_video_size(v.height(), v.width())?;
    let p = model.config.patch_size;
    Ok((v.frames(), v.height() / p, v.width() / p, model.config.c_lat()))
}

/// Builds `L_rm + L_in + lambda * L_ec` for one triplet.
pub fn build_loss(model: &Model, sample: &TripletSample, draws: &StepDraws, config: &TrainConfig) -> Result<LossGraph> {
    let dims = latent_dims(model, sample)?;
    let p = model.config.patch_size;
    let mut g = Graph::new();
    let b = Bound::bind(&mut g, model, true);

    let crop = foreground_crop(&sample.object_video, &sample.mask, model.config.fg_patch)?;
    let ef = encode_foreground(&mut g, &b, &crop)?;
    let projected = project_graph(&mut g, &b, ef)?;

    let mut denoise = [None, None];
    let mut maps = [None, None];
    let mut grid = (0, 0, 0);
    for (k, (task, z)) in [(TaskKind::Removal, &draws.z_removal), (TaskKind::Insertion, &draws.z_insertion)]
        .into_iter()
        .enumerate()
    {
        if z.dims() != dims {
            return Err(Error::shape("noise grid does not match the latent shape"));
        }
        let cond = build_condition(task, sample, p)?;
        let x = target_latent(task, sample, p)?;
        let x_t = forward_noise(&x, z, draws.t)?;
        let v = velocity_target(&x, z)?;
        let prompt = prompt_graph(&mut g, &b, task, projected)?;
        let fwd = dit_graph(&mut g, &b, model, &x_t, &cond, prompt, draws.t)?;
        denoise[k] = Some(g.mse(fwd.velocity, v.into_data()));
        let pooled = pool_graph(&mut g, &fwd.attention, SLOT_INDEX);
        maps[k] = Some(mapper_graph(&mut g, &b, pooled, fwd.grid.0)?);
        grid = fwd.grid;
    }
    let (l_rm, l_in) = (denoise[0].unwrap(), denoise[1].unwrap());
    let (f_rm, f_in) = (maps[0].unwrap(), maps[1].unwrap());

    let prior = diff_prior(sample, grid.1, grid.2, config.epsilon_prior)?;
    let kl_rm = kl_graph(&mut g, &prior, f_rm);
    let kl_in = kl_graph(&mut g, &prior, f_in);
    let ec = g.add(kl_rm, kl_in);
    let denoise_sum = g.add(l_rm, l_in);
    let weighted = g.scale(ec, config.lambda_ec);
    let total = g.add(denoise_sum, weighted);

    let scalar = |g: &Graph, v: Var| g.value(v).data()[0];
    let breakdown = LossBreakdown {
        denoise_removal: scalar(&g, l_rm),
        denoise_insertion: scalar(&g, l_in),
        ec: scalar(&g, ec),
        total: scalar(&g, total),
    };
    Ok(LossGraph { graph: g, bound: b, total, breakdown, effect_maps: (f_rm, f_in), prior })
}

/// Loss and gradients of every trainable parameter for one triplet.
pub fn loss_and_gradients(
    model: &Model,
    sample: &TripletSample,
    draws: &StepDraws,
    config: &TrainConfig,
) -> Result<(LossBreakdown, BTreeMap<String, Vec<f64>>)> {
    let lg = build_loss(model, sample, draws, config)?;
    let grads = lg.graph.backward(lg.total);
    let mut out = BTreeMap::new();
    for (name, var) in lg.bound.iter() {
        if !lg.graph.requires_grad(var) {
            continue;
        }
        let g = match grads.get(var) {
            Some(g) => g.to_vec(),
            None => alloc::vec![0.0; lg.graph.value(var).len()],
        };
        out.insert(String::from(name), g);
    }
    Ok((lg.breakdown, out))
}

/// Model, optimizer state and the step random stream.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    optimizer: AdamW,
    rng: ChaCha8Rng,
    step: u64,
}

/// Stream index of the per-step draws, kept apart from data-order streams.
const STEP_STREAM: u64 = 0x5354_4550;

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        model.config.validate()?;
        let optimizer = AdamW::new(config.optimizer());
        let rng = seeded(derive_seed(config.seed, STEP_STREAM));
        Ok(Self { model, config, optimizer, rng, step: 0 })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// One optimizer step over `batch` with gradients averaged across triplets.
    pub fn train_step(&mut self, batch: &[&TripletSample]) -> Result<LossBreakdown> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty training batch".into()));
        }
        let mut sum = LossBreakdown::default();
        let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for sample in batch {
            let dims = latent_dims(&self.model, sample)?;
            let draws = StepDraws::sample(&mut self.rng, dims, &self.config);
            let (loss, grads) = loss_and_gradients(&self.model, sample, &draws, &self.config)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at step {}: removal={} insertion={} ec={} total={} t={}",
                    self.step + 1,
                    loss.denoise_removal,
                    loss.denoise_insertion,
                    loss.ec,
                    loss.total,
                    draws.t
                )));
            }
            sum.denoise_removal += loss.denoise_removal;
            sum.denoise_insertion += loss.denoise_insertion;
            sum.ec += loss.ec;
            sum.total += loss.total;
            for (name, g) in grads {
                match acc.get_mut(&name) {
                    Some(a) => a.iter_mut().zip(&g).for_each(|(x, y)| *x += y),
                    None => {
                        acc.insert(name, g);
                    }
                }
            }
        }
        let n = batch.len() as f64;
        for (name, g) in acc.iter_mut() {
            for x in g.iter_mut() {
                *x /= n;
            }
            if let Some(i) = g.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of `{name}` element {i} at step {}", self.step + 1)));
            }
        }
        self.optimizer.update(&mut self.model.params, &acc)?;
        self.step += 1;
        Ok(LossBreakdown {
            denoise_removal: sum.denoise_removal / n,
            denoise_insertion: sum.denoise_insertion / n,
            ec: sum.ec / n,
            total: sum.total / n,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::synth::{render_triplet, SceneRanges, SceneSpec};

    fn triplet(seed: u64) -> TripletSample {
        let spec = SceneSpec::random(seed, 4, 8, 8, 1, &SceneRanges::default()).unwrap();
        render_triplet(&spec, &[0]).unwrap()
    }

    #[test]
    fn breakdown_identity_and_lambda_zero() {
        let model = Model::new(&ModelConfig::tiny(), 1).unwrap();
        let s = triplet(3);
        let dims = latent_dims(&model, &s).unwrap();
        let mut cfg = TrainConfig::default();
        let draws = StepDraws::sample(&mut seeded(4), dims, &cfg);
        let l = build_loss(&model, &s, &draws, &cfg).unwrap().breakdown;
        assert!((l.total - (l.denoise_removal + l.denoise_insertion + cfg.lambda_ec * l.ec)).abs() < 1e-12);
        assert!(l.ec >= 0.0);
        cfg.lambda_ec = 0.0;
        let l0 = build_loss(&model, &s, &draws, &cfg).unwrap().breakdown;
        assert_eq!(l0.total, l0.denoise_removal + l0.denoise_insertion);
    }

    #[test]
    fn gradients_cover_only_trainable_parameters() {
        let model = Model::new(&ModelConfig::tiny(), 1).unwrap();
        let s = triplet(5);
        let cfg = TrainConfig::default();
        let draws = StepDraws::sample(&mut seeded(6), latent_dims(&model, &s).unwrap(), &cfg);
        let (_, grads) = loss_and_gradients(&model, &s, &draws, &cfg).unwrap();
        let names: Vec<String> = grads.keys().cloned().collect();
        assert_eq!(names, model.params.trainable_names());
        // LoRA B receives gradient at init, A does not (B = 0).
        assert!(grads["blocks.0.self_attn.o.lora_b"].iter().any(|&x| x != 0.0));
        assert!(grads["blocks.0.self_attn.o.lora_a"].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn training_is_deterministic() {
        let s = triplet(7);
        let run = || {
            let model = Model::new(&ModelConfig::tiny(), 2).unwrap();
            let mut tr = Trainer::new(model, TrainConfig { learning_rate: 1e-3, seed: 9, ..TrainConfig::default() }).unwrap();
            (0..3).map(|_| tr.train_step(&[&s]).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
