//! The velocity network on the autodiff tape: adaptor, timestep embedding,
//! DiT blocks with self- and cross-attention, the output head, cross-attention
//! pooling and the effect mapper.
//!
//! Tokens are the adaptor's 2x2 latent patches ordered `(t, i, j)`; a token
//! row holds `d` features. Linear weights are stored `[in, out]`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::math;
use crate::model::latent::LatentGrid;
use crate::model::params::Model;
use crate::model::prompt::{PromptEmbedding, PROMPT_LEN, SLOT_INDEX};
use crate::tensor::Tensor;

/// Model parameters placed on a graph.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
    lora_scale: f64,
}

impl Bound {
    /// Binds every parameter; trainable ones become gradient leaves when
    /// `track_trainable` is set, everything else is a constant.
    pub fn bind(g: &mut Graph, model: &Model, track_trainable: bool) -> Bound {
        let mut vars = BTreeMap::new();
        for (name, p) in model.params.iter() {
            let v = if track_trainable && p.trainable { g.param(p.value.clone()) } else { g.constant(p.value.clone()) };
            vars.insert(String::from(name), v);
        }
        Bound { vars, lora_scale: model.lora_scale() }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars.get(name).copied().ok_or_else(|| Error::UnknownParameter(String::from(name)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Effective weight of `layer`: `W + scale * A B` when LoRA factors exist.
    pub fn weight(&self, g: &mut Graph, layer: &str) -> Result<Var> {
        let w = self.var(&format!("{layer}.weight"))?;
        match (self.vars.get(&format!("{layer}.lora_a")), self.vars.get(&format!("{layer}.lora_b"))) {
            (Some(&a), Some(&b)) => {
                let ab = g.matmul(a, b);
                let ab = g.scale(ab, self.lora_scale);
                Ok(g.add(w, ab))
            }
            _ => Ok(w),
        }
    }

    /// `x W` without bias.
    pub fn linear(&self, g: &mut Graph, x: Var, layer: &str) -> Result<Var> {
        let w = self.weight(g, layer)?;
        Ok(g.matmul(x, w))
    }

    /// `x W + b`.
    pub fn affine(&self, g: &mut Graph, x: Var, layer: &str) -> Result<Var> {
        let y = self.linear(g, x, layer)?;
        let b = self.var(&format!("{layer}.bias"))?;
        Ok(g.add_row(y, b))
    }
}

/// Token grid size `(t, h/2, w/2)` for latents of spatial size `h x w`.
pub fn token_grid(x: &LatentGrid) -> Result<(usize, usize, usize)> {
    if x.height() % 2 != 0 || x.width() % 2 != 0 {
        return Err(Error::shape("adaptor needs even latent height and width"));
    }
    Ok((x.frames(), x.height() / 2, x.width() / 2))
}

/// `[x_t; c]` rearranged into 2x2 patches: row `n`, column `(dy*2+dx)*C + ch`.
pub fn patchify(x_t: &LatentGrid, c: &LatentGrid) -> Result<Tensor> {
    if !x_t.same_grid(c) {
        return Err(Error::shape("x_t and condition grids differ"));
    }
    let (t, h2, w2) = token_grid(x_t)?;
    let (cx, cc) = (x_t.channels(), c.channels());
    let ch = cx + cc;
    let mut out = Vec::with_capacity(t * h2 * w2 * 4 * ch);
    for tt in 0..t {
        for i in 0..h2 {
            for j in 0..w2 {
                for dy in 0..2 {
                    for dx in 0..2 {
                        let (y, x) = (2 * i + dy, 2 * j + dx);
                        out.extend((0..cx).map(|k| x_t.get(tt, y, x, k)));
                        out.extend((0..cc).map(|k| c.get(tt, y, x, k)));
                    }
                }
            }
        }
    }
    Ok(Tensor::new([t * h2 * w2, 4 * ch], out))
}

/// Gather indices mapping head output `[N, 4 c]` back to latent layout `[t h w, c]`.
fn unpatchify_indices(t: usize, h2: usize, w2: usize, c: usize) -> Vec<usize> {
    let (h, w) = (2 * h2, 2 * w2);
    let mut idx = Vec::with_capacity(t * h * w * c);
    for tt in 0..t {
        for y in 0..h {
            for x in 0..w {
                let n = (tt * h2 + y / 2) * w2 + x / 2;
                let pos = (y % 2) * 2 + x % 2;
                idx.extend((0..c).map(|k| n * 4 * c + pos * c + k));
            }
        }
    }
    idx
}

fn sincos(out: &mut [f64], pos: f64) {
    let half = out.len() / 2;
    for i in 0..half {
        let freq = math::exp(-math::ln(10000.0) * i as f64 / half.max(1) as f64);
        out[i] = math::sin(pos * freq);
        out[half + i] = math::cos(pos * freq);
    }
}

/// Fixed 3D sin-cos position table `[t h w, d]`; the feature axis is split
/// between frame, row and column.
pub fn position_embedding(t: usize, h: usize, w: usize, d: usize) -> Tensor {
    let dt = 2 * (d / 6);
    let dy = dt;
    let dx = d - dt - dy;
    let mut out = vec![0.0; t * h * w * d];
    for tt in 0..t {
        for y in 0..h {
            for x in 0..w {
                let row = &mut out[((tt * h + y) * w + x) * d..][..d];
                sincos(&mut row[..dt], tt as f64);
                sincos(&mut row[dt..dt + dy], y as f64);
                sincos(&mut row[dt + dy..dt + dy + (dx / 2) * 2], x as f64);
            }
        }
    }
    Tensor::new([t * h * w, d], out)
}

fn timestep_features(t: f64, freqs: usize) -> Tensor {
    let mut out = vec![0.0; 2 * freqs];
    sincos(&mut out, 1000.0 * t);
    Tensor::new([1, 2 * freqs], out)
}

/// Adaptor: 2x2-stride patch embedding of `[x_t; c]`, `[N, d]`.
pub fn adaptor_graph(g: &mut Graph, b: &Bound, x_t: &LatentGrid, c: &LatentGrid) -> Result<Var> {
    let patches = g.constant(patchify(x_t, c)?);
    b.affine(g, patches, "adaptor")
}

/// Output of one forward pass on the tape.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Velocity in latent layout, `[t h w, c_lat]`.
    pub velocity: Var,
    /// Cross-attention probabilities `[N, PROMPT_LEN]` per block, per head.
    pub attention: Vec<Vec<Var>>,
    /// Token grid `(t, h/2, w/2)`.
    pub grid: (usize, usize, usize),
}

fn modulate(g: &mut Graph, x: Var, shift: Var, scale: Var) -> Var {
    let n = g.layer_norm(x);
    let s = g.add_scalar(scale, 1.0);
    let n = g.mul_row(n, s);
    g.add_row(n, shift)
}

/// Multi-head attention of `q [N, d]` against `k, v [M, d]`; returns the
/// concatenated head outputs and the per-head probabilities.
fn attention(g: &mut Graph, q: Var, k: Var, v: Var, heads: usize) -> (Var, Vec<Var>) {
    let d = g.value(q).cols();
    let hd = d / heads;
    let scale = 1.0 / math::sqrt(hd as f64);
    let mut outs = Vec::with_capacity(heads);
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * hd, hd);
        let kh = g.slice_cols(k, h * hd, hd);
        let vh = g.slice_cols(v, h * hd, hd);
        let s = g.matmul_nt(qh, kh);
        let s = g.scale(s, scale);
        let p = g.softmax(s);
        outs.push(g.matmul(p, vh));
        probs.push(p);
    }
    let out = if heads == 1 { outs[0] } else { g.concat_cols(&outs) };
    (out, probs)
}

/// The velocity network `v(x_t, t, c, prompt)`.
pub fn dit_graph(g: &mut Graph, b: &Bound, model: &Model, x_t: &LatentGrid, c: &LatentGrid, prompt: Var, t: f64) -> Result<Forward> {
    let cfg = &model.config;
    let d = cfg.model_dim;
    if x_t.channels() != cfg.c_lat() || c.channels() != 2 * cfg.c_lat() {
        return Err(Error::shape("x_t must have c_lat channels and the condition 2 c_lat"));
    }
    if g.value(prompt).shape() != [PROMPT_LEN, cfg.token_dim] {
        return Err(Error::shape("prompt must be [PROMPT_LEN, token_dim]"));
    }
    let grid = token_grid(x_t)?;
    let (tt, h2, w2) = grid;

    let x = adaptor_graph(g, b, x_t, c)?;
    let pos = g.constant(position_embedding(tt, h2, w2, d));
    let mut x = g.add(x, pos);

    let tf = g.constant(timestep_features(t, cfg.time_freqs));
    let temb = b.affine(g, tf, "time.fc1")?;
    let temb = g.silu(temb);
    let temb = b.affine(g, temb, "time.fc2")?;
    let temb = g.silu(temb);

    let mut attention_maps = Vec::with_capacity(cfg.n_blocks);
    for blk in 0..cfg.n_blocks {
        let name = |s: &str| format!("blocks.{blk}.{s}");
        let m = b.affine(g, temb, &name("modulation"))?;
        let shift1 = g.slice_cols(m, 0, d);
        let scale1 = g.slice_cols(m, d, d);
        let shift2 = g.slice_cols(m, 2 * d, d);
        let scale2 = g.slice_cols(m, 3 * d, d);

        let h = modulate(g, x, shift1, scale1);
        let q = b.linear(g, h, &name("self_attn.q"))?;
        let k = b.linear(g, h, &name("self_attn.k"))?;
        let v = b.linear(g, h, &name("self_attn.v"))?;
        let (a, _) = attention(g, q, k, v, cfg.n_heads);
        let a = b.linear(g, a, &name("self_attn.o"))?;
        x = g.add(x, a);

        let h = g.layer_norm(x);
        let q = b.linear(g, h, &name("cross_attn.q"))?;
        let k = b.linear(g, prompt, &name("cross_attn.k"))?;
        let v = b.linear(g, prompt, &name("cross_attn.v"))?;
        let (a, probs) = attention(g, q, k, v, cfg.n_heads);
        attention_maps.push(probs);
        let a = b.linear(g, a, &name("cross_attn.o"))?;
        x = g.add(x, a);

        let h = modulate(g, x, shift2, scale2);
        let f = b.affine(g, h, &name("ffn.0"))?;
        let f = g.gelu(f);
        let f = b.affine(g, f, &name("ffn.2"))?;
        x = g.add(x, f);
    }

    let m = b.affine(g, temb, "final.modulation")?;
    let shift = g.slice_cols(m, 0, d);
    let scale = g.slice_cols(m, d, d);
    let y = modulate(g, x, shift, scale);
    let y = b.affine(g, y, "head")?;
    let c_lat = cfg.c_lat();
    let velocity = g.gather(y, unpatchify_indices(tt, h2, w2, c_lat), [tt * h2 * w2 * 4, c_lat]);
    Ok(Forward { velocity, attention: attention_maps, grid })
}

/// Mean over heads of the object-slot column, then elementwise max over blocks: `[N, 1]`.
pub fn pool_graph(g: &mut Graph, attention: &[Vec<Var>], slot: usize) -> Var {
    let mut pooled: Option<Var> = None;
    for heads in attention {
        let mut acc: Option<Var> = None;
        for &p in heads {
            let col = g.slice_cols(p, slot, 1);
            acc = Some(match acc {
                Some(a) => g.add(a, col),
                None => col,
            });
        }
        let mean = g.scale(acc.expect("at least one head"), 1.0 / heads.len() as f64);
        pooled = Some(match pooled {
            Some(m) => g.maximum(m, mean),
            None => mean,
        });
    }
    pooled.expect("at least one block")
}

/// Per-position MLP on the pooled map followed by a per-frame softmax: `[t, h w]`.
pub fn mapper_graph(g: &mut Graph, b: &Bound, pooled: Var, frames: usize) -> Result<Var> {
    let logits = mapper_logits(g, b, pooled)?;
    let per_frame = g.value(logits).len() / frames;
    let logits = g.reshape(logits, [frames, per_frame]);
    Ok(g.softmax(logits))
}

fn mapper_logits(g: &mut Graph, b: &Bound, pooled: Var) -> Result<Var> {
    let h = b.affine(g, pooled, "mapper.fc1")?;
    let h = g.gelu(h);
    b.affine(g, h, "mapper.fc2")
}

/// Cross-attention probabilities of every block and head.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionStack {
    pub n_blocks: usize,
    pub n_heads: usize,
    pub tokens: usize,
    pub prompt_len: usize,
    /// `[block][head][token][prompt position]`, flattened.
    pub data: Vec<f64>,
}

impl AttentionStack {
    pub fn map(&self, block: usize, head: usize) -> &[f64] {
        let n = self.tokens * self.prompt_len;
        &self.data[(block * self.n_heads + head) * n..][..n]
    }
}

/// Per-token map on the `(t, h/2, w/2)` token grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMap {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl TokenMap {
    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[t * n..(t + 1) * n]
    }
}

/// Adaptor output as a grid with `d` channels at half the latent resolution.
pub fn adaptor_fuse(model: &Model, x_t: &LatentGrid, c: &LatentGrid) -> Result<LatentGrid> {
    let (t, h2, w2) = token_grid(x_t)?;
    let mut g = Graph::new();
    let b = Bound::bind(&mut g, model, false);
    let y = adaptor_graph(&mut g, &b, x_t, c)?;
    LatentGrid::new(t, h2, w2, model.config.model_dim, g.value(y).data().to_vec())
}

/// Velocity prediction and the cross-attention maps.
pub fn dit_forward(model: &Model, x_t: &LatentGrid, c: &LatentGrid, prompt: &PromptEmbedding, t: f64) -> Result<(LatentGrid, AttentionStack)> {
    let mut g = Graph::new();
    let b = Bound::bind(&mut g, model, false);
    let p = g.constant(prompt.tokens.clone());
    let fwd = dit_graph(&mut g, &b, model, x_t, c, p, t)?;
    let (tt, h, w, ch) = x_t.dims();
    let velocity = LatentGrid::new(tt, h, w, ch, g.value(fwd.velocity).data().to_vec())?;
    let mut data = Vec::new();
    for heads in &fwd.attention {
        for &p in heads {
            data.extend_from_slice(g.value(p).data());
        }
    }
    let (gt, gh, gw) = fwd.grid;
    let stack = AttentionStack {
        n_blocks: fwd.attention.len(),
        n_heads: model.config.n_heads,
        tokens: gt * gh * gw,
        prompt_len: PROMPT_LEN,
        data,
    };
    Ok((velocity, stack))
}

/// Pools a stack on the token grid `(frames, height, width)`.
pub fn pool_attention(stack: &AttentionStack, frames: usize, height: usize, width: usize) -> Result<TokenMap> {
    if stack.n_blocks == 0 || stack.n_heads == 0 {
        return Err(Error::InvalidArgument("attention stack is empty".into()));
    }
    if frames * height * width != stack.tokens {
        return Err(Error::shape("token grid does not match the attention stack"));
    }
    let mut data = vec![f64::NEG_INFINITY; stack.tokens];
    for blk in 0..stack.n_blocks {
        for (n, out) in data.iter_mut().enumerate() {
            let mut s = 0.0;
            for h in 0..stack.n_heads {
                s += stack.map(blk, h)[n * stack.prompt_len + SLOT_INDEX];
            }
            let mean = s * (1.0 / stack.n_heads as f64);
            if mean > *out {
                *out = mean;
            }
        }
    }
    Ok(TokenMap { frames, height, width, data })
}

/// Soft effect map `f`: per-frame distribution over token positions.
pub fn map_effect(model: &Model, pooled: &TokenMap) -> Result<TokenMap> {
    let mut g = Graph::new();
    let b = Bound::bind(&mut g, model, false);
    let x = g.constant(Tensor::new([pooled.data.len(), 1], pooled.data.clone()));
    let f = mapper_graph(&mut g, &b, x, pooled.frames)?;
    Ok(TokenMap { data: g.value(f).data().to_vec(), ..pooled.clone() })
}

/// Mapper logits before the softmax, for inspection.
pub fn effect_logits(model: &Model, pooled: &TokenMap) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let b = Bound::bind(&mut g, model, false);
    let x = g.constant(Tensor::new([pooled.data.len(), 1], pooled.data.clone()));
    let l = mapper_logits(&mut g, &b, x)?;
    Ok(g.value(l).data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::ModelConfig;
    use crate::model::prompt::build_prompt;
    use crate::model::latent::TaskKind;
    use crate::rng::seeded;
    use rand::Rng;

    fn grid(seed: u64, t: usize, h: usize, w: usize, c: usize) -> LatentGrid {
        let mut rng = seeded(seed);
        LatentGrid::new(t, h, w, c, (0..t * h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn adaptor_copies_pooled_input() {
        let m = Model::new(&ModelConfig::tiny(), 2).unwrap();
        let x = grid(1, 2, 4, 4, 12);
        let c = LatentGrid::zeros(2, 4, 4, 24);
        let fused = adaptor_fuse(&m, &x, &c).unwrap();
        assert_eq!(fused.dims(), (2, 2, 2, 16));
        // Token (1, 0, 1) pools latent rows 0..2, columns 2..4 of frame 1.
        for ch in 0..12 {
            let mean = (x.get(1, 0, 2, ch) + x.get(1, 0, 3, ch) + x.get(1, 1, 2, ch) + x.get(1, 1, 3, ch)) / 4.0;
            assert!((fused.get(1, 0, 1, ch) - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_shapes_and_distributions() {
        let m = Model::new(&ModelConfig::tiny(), 2).unwrap();
        let x = grid(1, 2, 4, 4, 12);
        let c = grid(2, 2, 4, 4, 24);
        let proj: Vec<f64> = (0..16).map(|i| (i as f64).sin()).collect();
        let p = build_prompt(&m, TaskKind::Removal, &proj).unwrap();
        let (v, stack) = dit_forward(&m, &x, &c, &p, 0.3).unwrap();
        assert_eq!(v.dims(), x.dims());
        assert_eq!(stack.n_blocks, 2);
        for row in stack.data.chunks(PROMPT_LEN) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let pooled = pool_attention(&stack, 2, 2, 2).unwrap();
        let f = map_effect(&m, &pooled).unwrap();
        for t in 0..2 {
            assert!((f.frame(t).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lora_with_zero_b_matches_base_bitwise() {
        let m = Model::new(&ModelConfig::tiny(), 4).unwrap();
        let base = m.without_lora();
        let x = grid(5, 2, 4, 4, 12);
        let c = grid(6, 2, 4, 4, 24);
        let proj: Vec<f64> = (0..16).map(|i| i as f64 * 0.01).collect();
        let p = build_prompt(&m, TaskKind::Insertion, &proj).unwrap();
        let (a, sa) = dit_forward(&m, &x, &c, &p, 0.7).unwrap();
        let (b, sb) = dit_forward(&base, &x, &c, &p, 0.7).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(sa, sb);
    }

    #[test]
    fn pooling_single_block_single_head_is_identity() {
        let data: Vec<f64> = (0..4).flat_map(|n| {
            let mut row = [0.1; PROMPT_LEN];
            row[SLOT_INDEX] = 0.1 + n as f64 * 0.05;
            let s: f64 = row.iter().sum();
            row.map(|v| v / s)
        }).collect();
        let stack = AttentionStack { n_blocks: 1, n_heads: 1, tokens: 4, prompt_len: PROMPT_LEN, data: data.clone() };
        let pooled = pool_attention(&stack, 1, 2, 2).unwrap();
        for n in 0..4 {
            assert_eq!(pooled.data[n], data[n * PROMPT_LEN + SLOT_INDEX]);
        }
    }

    #[test]
    fn unpatchify_inverts_token_layout() {
        // A token holding (pos * 10 + k) lands at the right latent pixel.
        let idx = unpatchify_indices(1, 1, 2, 3);
        assert_eq!(idx.len(), 2 * 4 * 3);
        // Latent (y=1, x=2): token 1, pos (1, 0) = 2, channel 0.
        assert_eq!(idx[(1 * 4 + 2) * 3], 4 * 3 + 2 * 3);
    }
}
