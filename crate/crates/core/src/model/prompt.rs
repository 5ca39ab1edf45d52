//! Task-aware prompts: a learned token table for the template words, a small
//! conv encoder for the foreground crop, and the projector whose output
//! replaces the object slot of the template.

use alloc::vec::Vec;

use crate::autodiff::{Graph, Var, GATHER_ZERO};
use crate::error::{Error, Result};
use crate::model::latent::TaskKind;
use crate::model::net::Bound;
use crate::model::params::Model;
use crate::tensor::Tensor;
use crate::video::{resize_planes, MaskVideo, TripletSample, VideoTensor, CHANNELS};

pub const VOCAB: [&str; 7] = ["remove", "insert", "the", "object", "from", "into", "video"];
pub const PROMPT_LEN: usize = 5;
/// Position of the object placeholder in both templates.
pub const SLOT_INDEX: usize = 2;

const OBJECT: usize = 3;

/// Token ids of a task template; the slot holds the `object` placeholder.
pub fn template(task: TaskKind) -> [usize; PROMPT_LEN] {
    match task {
        TaskKind::Removal => [0, 2, OBJECT, 4, 6],
        TaskKind::Insertion => [1, 2, OBJECT, 5, 6],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptEmbedding {
    /// `[PROMPT_LEN, token_dim]`.
    pub tokens: Tensor,
    pub placeholder_index: usize,
}

/// Frame with the largest mask area (earliest on ties).
pub fn select_foreground_frame(mask: &MaskVideo) -> Result<usize> {
    let areas = mask.area_per_frame();
    let (best, area) = areas.iter().enumerate().fold((0, 0), |acc, (t, &a)| if a > acc.1 { (t, a) } else { acc });
    if area == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(best)
}

/// Object-centric crop of `V^o * M` resized to `size x size`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundCrop {
    pub frame: usize,
    /// `(y0, x0, y1, x1)`, exclusive end.
    pub bbox: (usize, usize, usize, usize),
    pub size: usize,
    /// `size x size x 3` interleaved.
    pub pixels: Vec<f64>,
}

pub fn foreground_crop(object_video: &VideoTensor, mask: &MaskVideo, size: usize) -> Result<ForegroundCrop> {
    if !mask.same_dims(object_video.frames(), object_video.height(), object_video.width()) {
        return Err(Error::shape("mask and video differ in size"));
    }
    let frame = select_foreground_frame(mask)?;
    let (h, w) = (mask.height(), mask.width());
    let (mut y0, mut x0, mut y1, mut x1) = (h, w, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if mask.is_set(frame, y, x) {
                y0 = y0.min(y);
                x0 = x0.min(x);
                y1 = y1.max(y + 1);
                x1 = x1.max(x + 1);
            }
        }
    }
    let (ch, cw) = (y1 - y0, x1 - x0);
    let mut crop = Vec::with_capacity(ch * cw * CHANNELS);
    for y in y0..y1 {
        for x in x0..x1 {
            let m = mask.get(frame, y, x);
            for c in 0..CHANNELS {
                crop.push(object_video.get(frame, y, x, c) * m);
            }
        }
    }
    let pixels = resize_planes(&crop, 1, ch, cw, CHANNELS, size, size);
    Ok(ForegroundCrop { frame, bbox: (y0, x0, y1, x1), size, pixels })
}

/// im2col of a 3x3, stride 2, padding 1 convolution over an interleaved
/// `size x size x channels` map: returns source indices, `GATHER_ZERO` for padding.
fn conv_s2_indices(size: usize, channels: usize) -> (usize, Vec<usize>) {
    let out = size / 2;
    let mut idx = Vec::with_capacity(out * out * 9 * channels);
    for oy in 0..out {
        for ox in 0..out {
            for ky in 0..3 {
                for kx in 0..3 {
                    let y = (2 * oy + ky) as isize - 1;
                    let x = (2 * ox + kx) as isize - 1;
                    let inside = y >= 0 && x >= 0 && (y as usize) < size && (x as usize) < size;
                    for c in 0..channels {
                        idx.push(if inside { (y as usize * size + x as usize) * channels + c } else { GATHER_ZERO });
                    }
                }
            }
        }
    }
    (out, idx)
}

/// Two strided 3x3 convs with GELU and a global average pool: `[1, fg_dim]`.
pub fn encode_foreground(g: &mut Graph, b: &Bound, crop: &ForegroundCrop) -> Result<Var> {
    let (o1, idx1) = conv_s2_indices(crop.size, CHANNELS);
    let cols1: Vec<f64> = idx1.iter().map(|&i| if i == GATHER_ZERO { 0.0 } else { crop.pixels[i] }).collect();
    let x = g.constant(Tensor::new([o1 * o1, 9 * CHANNELS], cols1));
    let h1 = b.affine(g, x, "fg.conv1")?;
    let h1 = g.gelu(h1);
    let c1 = g.value(h1).cols();
    let (o2, idx2) = conv_s2_indices(o1, c1);
    let cols2 = g.gather(h1, idx2, [o2 * o2, 9 * c1]);
    let h2 = b.affine(g, cols2, "fg.conv2")?;
    let h2 = g.gelu(h2);
    Ok(g.mean_rows(h2))
}

/// Projector: LN -> linear -> GELU -> linear, then the same block with a
/// residual connection, then an affine LayerNorm.
pub fn project_graph(g: &mut Graph, b: &Bound, ef: Var) -> Result<Var> {
    let mut x = ef;
    for (i, residual) in [(1, false), (2, true)] {
        let n = g.layer_norm(x);
        let h = b.affine(g, n, &alloc::format!("projector.block{i}.fc1"))?;
        let h = g.gelu(h);
        let h = b.affine(g, h, &alloc::format!("projector.block{i}.fc2"))?;
        x = if residual { g.add(x, h) } else { h };
    }
    let n = g.layer_norm(x);
    let n = g.mul_row(n, b.var("projector.norm.gamma")?);
    Ok(g.add_row(n, b.var("projector.norm.beta")?))
}

/// Template rows from the token table with the slot replaced by `projected`.
pub fn prompt_graph(g: &mut Graph, b: &Bound, task: TaskKind, projected: Var) -> Result<Var> {
    let table = b.var("tokens.table")?;
    let dim = g.value(table).cols();
    let ids = template(task);
    let mut from_table = Vec::with_capacity(PROMPT_LEN * dim);
    let mut from_slot = Vec::with_capacity(PROMPT_LEN * dim);
    for (pos, &id) in ids.iter().enumerate() {
        for c in 0..dim {
            if pos == SLOT_INDEX {
                from_table.push(GATHER_ZERO);
                from_slot.push(c);
            } else {
                from_table.push(id * dim + c);
                from_slot.push(GATHER_ZERO);
            }
        }
    }
    let words = g.gather(table, from_table, [PROMPT_LEN, dim]);
    let slot = g.gather(projected, from_slot, [PROMPT_LEN, dim]);
    Ok(g.add(words, slot))
}

/// `e^f` for a triplet: crop of the max-area mask frame through the encoder.
pub fn foreground_tokens(model: &Model, object_video: &VideoTensor, mask: &MaskVideo) -> Result<Vec<f64>> {
    let crop = foreground_crop(object_video, mask, model.config.fg_patch)?;
    let mut g = Graph::new();
    let b = Bound::bind(&mut g, model, false);
    let ef = encode_foreground(&mut g, &b, &crop)?;
    Ok(g.value(ef).data().to_vec())
}

pub fn sample_foreground_tokens(model: &Model, sample: &TripletSample) -> Result<Vec<f64>> {
    foreground_tokens(model, &sample.object_video, &sample.mask)
}

pub fn project_foreground(model: &Model, ef: &[f64]) -> Result<Vec<f64>> {
    if ef.len() != model.config.fg_dim {
        return Err(Error::shape("foreground embedding width differs from fg_dim"));
    }
    let mut g = Graph::new();
    let b = Bound::bind(&mut g, model, false);
    let x = g.constant(Tensor::new([1, ef.len()], ef.to_vec()));
    let y = project_graph(&mut g, &b, x)?;
    Ok(g.value(y).data().to_vec())
}

pub fn build_prompt(model: &Model, task: TaskKind, projected: &[f64]) -> Result<PromptEmbedding> {
    if projected.len() != model.config.token_dim {
        return Err(Error::shape("projected embedding width differs from token_dim"));
    }
    let mut g = Graph::new();
    let b = Bound::bind(&mut g, model, false);
    let x = g.constant(Tensor::new([1, projected.len()], projected.to_vec()));
    let p = prompt_graph(&mut g, &b, task, x)?;
    Ok(PromptEmbedding { tokens: g.value(p).clone(), placeholder_index: SLOT_INDEX })
}

/// Full conditioning path from a video and mask to the prompt of `task`.
pub fn prompt_for(model: &Model, task: TaskKind, object_video: &VideoTensor, mask: &MaskVideo) -> Result<PromptEmbedding> {
    let ef = foreground_tokens(model, object_video, mask)?;
    let projected = project_foreground(model, &ef)?;
    build_prompt(model, task, &projected)
}
