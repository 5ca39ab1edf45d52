//! Named parameter store, initialization and LoRA injection.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::model::config::ModelConfig;
use crate::model::prompt::VOCAB;
use crate::rng::{derive_seed, seeded};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub trainable: bool,
}

/// Parameters keyed by dotted name, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) {
        self.params.insert(name.into(), Param { value, trainable });
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params.get(name).map(|p| &p.value).ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params.get_mut(name).map(|p| &mut p.value).ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.params.get(name).is_some_and(|p| p.trainable)
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        let p = self.params.get_mut(name).ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        p.trainable = trainable;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.params.iter().filter(|(_, p)| p.trainable).map(|(k, _)| k.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn element_count(&self, trainable_only: bool) -> usize {
        self.params.values().filter(|p| p.trainable || !trainable_only).map(|p| p.value.len()).sum()
    }
}

/// Layers that receive low-rank factors and their rank and scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraSpec {
    pub rank: usize,
    pub alpha: f64,
    /// Layer names without the `.weight` suffix, e.g. `blocks.0.self_attn.q`.
    pub targets: Vec<String>,
}

impl LoraSpec {
    /// q, k, v, o of both attentions and both feed-forward linears in every block.
    pub fn standard(config: &ModelConfig) -> Self {
        let mut targets = Vec::new();
        for b in 0..config.n_blocks {
            for attn in ["self_attn", "cross_attn"] {
                for p in ["q", "k", "v", "o"] {
                    targets.push(format!("blocks.{b}.{attn}.{p}"));
                }
            }
            targets.push(format!("blocks.{b}.ffn.0"));
            targets.push(format!("blocks.{b}.ffn.2"));
        }
        Self { rank: config.lora_rank, alpha: config.lora_alpha, targets }
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }
}

/// Parameter groups that stay trainable once LoRA freezes the backbone.
const ALWAYS_TRAINABLE: [&str; 5] = ["adaptor.", "tokens.", "fg.", "projector.", "mapper."];

pub fn is_lora_factor(name: &str) -> bool {
    name.ends_with(".lora_a") || name.ends_with(".lora_b")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub lora: Option<LoraSpec>,
}

fn uniform(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 }).collect();
    Tensor::new(shape.to_vec(), data)
}

fn xavier(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Tensor {
    uniform(rng, &[fan_in, fan_out], math::sqrt(6.0 / (fan_in + fan_out) as f64))
}

impl Model {
    /// Randomly initialized backbone with every parameter trainable and no LoRA.
    pub fn base(config: &ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut rng = seeded(seed);
        let rng = &mut rng;
        let d = config.model_dim;
        let c_lat = config.c_lat();
        let tok = config.token_dim;
        let f = config.ffn_dim();
        let mut ps = ParamStore::new();

        ps.insert("adaptor.weight", adaptor_init(rng, c_lat, d), true);
        ps.insert("adaptor.bias", Tensor::zeros([d]), true);

        ps.insert("time.fc1.weight", xavier(rng, 2 * config.time_freqs, d), true);
        ps.insert("time.fc1.bias", Tensor::zeros([d]), true);
        ps.insert("time.fc2.weight", xavier(rng, d, d), true);
        ps.insert("time.fc2.bias", Tensor::zeros([d]), true);

        // Output projections are scaled down so the random backbone starts
        // close to the identity residual path.
        let small = |rng: &mut _, i, o| {
            let mut t = xavier(rng, i, o);
            t.data_mut().iter_mut().for_each(|x| *x *= 0.1);
            t
        };
        for b in 0..config.n_blocks {
            let p = |s: &str| format!("blocks.{b}.{s}");
            ps.insert(p("modulation.weight"), small(rng, d, 4 * d), true);
            ps.insert(p("modulation.bias"), Tensor::zeros([4 * d]), true);
            for n in ["q", "k", "v"] {
                ps.insert(p(&format!("self_attn.{n}.weight")), xavier(rng, d, d), true);
            }
            ps.insert(p("self_attn.o.weight"), small(rng, d, d), true);
            ps.insert(p("cross_attn.q.weight"), xavier(rng, d, d), true);
            ps.insert(p("cross_attn.k.weight"), xavier(rng, tok, d), true);
            ps.insert(p("cross_attn.v.weight"), xavier(rng, tok, d), true);
            ps.insert(p("cross_attn.o.weight"), small(rng, d, d), true);
            ps.insert(p("ffn.0.weight"), xavier(rng, d, f), true);
            ps.insert(p("ffn.0.bias"), Tensor::zeros([f]), true);
            ps.insert(p("ffn.2.weight"), small(rng, f, d), true);
            ps.insert(p("ffn.2.bias"), Tensor::zeros([d]), true);
        }
        ps.insert("final.modulation.weight", small(rng, d, 2 * d), true);
        ps.insert("final.modulation.bias", Tensor::zeros([2 * d]), true);
        ps.insert("head.weight", xavier(rng, d, 4 * c_lat), true);
        ps.insert("head.bias", Tensor::zeros([4 * c_lat]), true);

        ps.insert("tokens.table", uniform(rng, &[VOCAB.len(), tok], 1.0), true);

        let c1 = config.fg_channels;
        ps.insert("fg.conv1.weight", xavier(rng, 27, c1), true);
        ps.insert("fg.conv1.bias", Tensor::zeros([c1]), true);
        ps.insert("fg.conv2.weight", xavier(rng, 9 * c1, config.fg_dim), true);
        ps.insert("fg.conv2.bias", Tensor::zeros([config.fg_dim]), true);

        ps.insert("projector.block1.fc1.weight", xavier(rng, config.fg_dim, tok), true);
        ps.insert("projector.block1.fc1.bias", Tensor::zeros([tok]), true);
        ps.insert("projector.block1.fc2.weight", xavier(rng, tok, tok), true);
        ps.insert("projector.block1.fc2.bias", Tensor::zeros([tok]), true);
        ps.insert("projector.block2.fc1.weight", xavier(rng, tok, tok), true);
        ps.insert("projector.block2.fc1.bias", Tensor::zeros([tok]), true);
        ps.insert("projector.block2.fc2.weight", xavier(rng, tok, tok), true);
        ps.insert("projector.block2.fc2.bias", Tensor::zeros([tok]), true);
        ps.insert("projector.norm.gamma", Tensor::filled([tok], 1.0), true);
        ps.insert("projector.norm.beta", Tensor::zeros([tok]), true);

        let mh = config.mapper_hidden;
        ps.insert("mapper.fc1.weight", xavier(rng, 1, mh), true);
        ps.insert("mapper.fc1.bias", Tensor::zeros([mh]), true);
        ps.insert("mapper.fc2.weight", xavier(rng, mh, 1), true);
        ps.insert("mapper.fc2.bias", Tensor::zeros([1]), true);

        Ok(Model { config: config.clone(), params: ps, lora: None })
    }

    /// Backbone plus the standard LoRA targets; the training starting point.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Model> {
        let base = Model::base(config, seed)?;
        let mut rng = seeded(derive_seed(seed, 1));
        apply_lora(&base, &LoraSpec::standard(config), &mut rng)
    }

    pub fn lora_scale(&self) -> f64 {
        self.lora.as_ref().map_or(0.0, LoraSpec::scale)
    }

    /// Same parameters with every LoRA factor removed.
    pub fn without_lora(&self) -> Model {
        let mut params = ParamStore::new();
        for (name, p) in self.params.iter() {
            if !is_lora_factor(name) {
                params.insert(name, p.value.clone(), p.trainable);
            }
        }
        Model { config: self.config.clone(), params, lora: None }
    }
}

/// First `c_lat` input channels copy an average-pooled patch into the first
/// `c_lat` outputs; the remaining input channels use Xavier-uniform.
fn adaptor_init(rng: &mut impl Rng, c_lat: usize, d: usize) -> Tensor {
    let c_in = 3 * c_lat;
    let rows = 4 * c_in;
    let bound = math::sqrt(6.0 / (rows + d) as f64);
    let mut w = vec![0.0; rows * d];
    for pos in 0..4 {
        for ch in 0..c_in {
            let r = pos * c_in + ch;
            for o in 0..d {
                w[r * d + o] = if ch < c_lat {
                    if ch == o { 0.25 } else { 0.0 }
                } else {
                    rng.random_range(-bound..bound)
                };
            }
        }
    }
    Tensor::new([rows, d], w)
}

/// Adds low-rank factors `A [in, r]` (Kaiming-uniform) and `B [r, out]`
/// (zero) to each targeted `W [in, out]` so the effective weight is
/// `W + scale * A B`, freezes the backbone and leaves only the factors and
/// the conditioning paths trainable.
pub fn apply_lora(model: &Model, spec: &LoraSpec, rng: &mut impl Rng) -> Result<Model> {
    if spec.rank == 0 {
        return Err(Error::InvalidArgument("LoRA rank must be at least 1".into()));
    }
    let mut out = model.without_lora();
    for target in &spec.targets {
        let w = out.params.get(&format!("{target}.weight")).map_err(|_| Error::UnknownLayer(target.clone()))?;
        if w.shape().len() != 2 {
            return Err(Error::UnknownLayer(target.clone()));
        }
        let (fan_in, fan_out) = (w.shape()[0], w.shape()[1]);
        let a = uniform(rng, &[fan_in, spec.rank], math::sqrt(6.0 / fan_in as f64));
        out.params.insert(format!("{target}.lora_a"), a, true);
        out.params.insert(format!("{target}.lora_b"), Tensor::zeros([spec.rank, fan_out]), true);
    }
    for (name, p) in out.params.iter_mut() {
        p.trainable = is_lora_factor(name) || ALWAYS_TRAINABLE.iter().any(|g| name.starts_with(g));
    }
    out.lora = Some(spec.clone());
    Ok(out)
}
