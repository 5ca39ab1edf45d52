//! Exact space-to-channel latent codec and condition construction.
//!
//! A `p x p` patch of RGB pixels becomes one latent position with `3 p^2`
//! channels; channel `(dy * p + dx) * 3 + ch` holds pixel `(p*i + dy, p*j + dx)`
//! channel `ch`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{MaskVideo, TripletSample, VideoTensor, CHANNELS};

#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    t: usize,
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

impl LatentGrid {
    pub fn new(t: usize, h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != t * h * w * c {
            return Err(Error::shape("latent data length does not match its dimensions"));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(alloc::format!("latent element {i}")));
        }
        Ok(Self { t, h, w, c, data })
    }

    pub fn zeros(t: usize, h: usize, w: usize, c: usize) -> Self {
        Self { t, h, w, c, data: vec![0.0; t * h * w * c] }
    }

    pub fn frames(&self) -> usize {
        self.t
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    /// `(t, h, w, c)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.t, self.h, self.w, self.c)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, t: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[((t * self.h + y) * self.w + x) * self.c + c]
    }

    pub fn same_grid(&self, other: &LatentGrid) -> bool {
        self.t == other.t && self.h == other.h && self.w == other.w
    }

    /// Channel concatenation `[self; other]` at every position.
    pub fn concat_channels(&self, other: &LatentGrid) -> Result<LatentGrid> {
        if !self.same_grid(other) {
            return Err(Error::shape("channel concat needs equal t, h, w"));
        }
        let c = self.c + other.c;
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        for (a, b) in self.data.chunks(self.c).zip(other.data.chunks(other.c)) {
            data.extend_from_slice(a);
            data.extend_from_slice(b);
        }
        Ok(LatentGrid { t: self.t, h: self.h, w: self.w, c, data })
    }

    /// Channels `start..start + len` at every position.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<LatentGrid> {
        if start + len > self.c {
            return Err(Error::shape("channel slice out of range"));
        }
        let data = self.data.chunks(self.c).flat_map(|p| p[start..start + len].iter().copied()).collect();
        Ok(LatentGrid { t: self.t, h: self.h, w: self.w, c: len, data })
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &LatentGrid) -> Result<LatentGrid> {
        if self.dims() != other.dims() {
            return Err(Error::shape("elementwise product needs equal shapes"));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        Ok(self.with_data(data))
    }

    fn with_data(&self, data: Vec<f64>) -> LatentGrid {
        LatentGrid { t: self.t, h: self.h, w: self.w, c: self.c, data }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Removal,
    Insertion,
}

fn encode_planes(data: &[f64], frames: usize, height: usize, width: usize, channels: usize, p: usize) -> Result<LatentGrid> {
    if p == 0 || height % p != 0 || width % p != 0 {
        return Err(Error::shape(alloc::format!("{height}x{width} is not divisible by patch size {p}")));
    }
    let (h, w) = (height / p, width / p);
    let c = CHANNELS * p * p;
    let mut out = vec![0.0; frames * h * w * c];
    for t in 0..frames {
        for i in 0..h {
            for j in 0..w {
                let o = ((t * h + i) * w + j) * c;
                for dy in 0..p {
                    for dx in 0..p {
                        let src = ((t * height + i * p + dy) * width + j * p + dx) * channels;
                        for ch in 0..CHANNELS {
                            // Single-channel input is replicated across the colour slots.
                            let v = data[src + if channels == 1 { 0 } else { ch }];
                            out[o + (dy * p + dx) * CHANNELS + ch] = v;
                        }
                    }
                }
            }
        }
    }
    Ok(LatentGrid { t: frames, h, w, c, data: out })
}

pub fn encode_latent(video: &VideoTensor, patch_size: usize) -> Result<LatentGrid> {
    encode_planes(video.data(), video.frames(), video.height(), video.width(), CHANNELS, patch_size)
}

/// Mask replicated to three channels, then encoded like a video.
pub fn encode_mask(mask: &MaskVideo, patch_size: usize) -> Result<LatentGrid> {
    encode_planes(mask.data(), mask.frames(), mask.height(), mask.width(), 1, patch_size)
}

/// Inverse rearrangement, clamped to `[0, 1]`.
pub fn decode_latent(grid: &LatentGrid, patch_size: usize) -> Result<VideoTensor> {
    let p = patch_size;
    if p == 0 || grid.c != CHANNELS * p * p {
        return Err(Error::shape(alloc::format!("{} latent channels do not match patch size {p}", grid.c)));
    }
    let (height, width) = (grid.h * p, grid.w * p);
    let mut out = vec![0.0; grid.t * height * width * CHANNELS];
    for t in 0..grid.t {
        for i in 0..grid.h {
            for j in 0..grid.w {
                let o = ((t * grid.h + i) * grid.w + j) * grid.c;
                for dy in 0..p {
                    for dx in 0..p {
                        let dst = ((t * height + i * p + dy) * width + j * p + dx) * CHANNELS;
                        for ch in 0..CHANNELS {
                            out[dst + ch] = grid.data[o + (dy * p + dx) * CHANNELS + ch].clamp(0.0, 1.0);
                        }
                    }
                }
            }
        }
    }
    VideoTensor::new(grid.t, height, width, out)
}

/// `[x^o ; x^m]`.
pub fn removal_condition(object_video: &VideoTensor, mask: &MaskVideo, patch_size: usize) -> Result<LatentGrid> {
    check_aligned(object_video, mask)?;
    encode_latent(object_video, patch_size)?.concat_channels(&encode_mask(mask, patch_size)?)
}

/// `[x^b ; x^f]` with `x^f = x^o * x^m` elementwise.
pub fn insertion_condition(
    background: &VideoTensor,
    object_video: &VideoTensor,
    mask: &MaskVideo,
    patch_size: usize,
) -> Result<LatentGrid> {
    check_aligned(object_video, mask)?;
    if !background.same_dims(object_video.frames(), object_video.height(), object_video.width()) {
        return Err(Error::shape("background and object videos differ in size"));
    }
    let xf = encode_latent(object_video, patch_size)?.hadamard(&encode_mask(mask, patch_size)?)?;
    encode_latent(background, patch_size)?.concat_channels(&xf)
}

pub fn build_condition(task: TaskKind, sample: &TripletSample, patch_size: usize) -> Result<LatentGrid> {
    match task {
        TaskKind::Removal => removal_condition(&sample.object_video, &sample.mask, patch_size),
        TaskKind::Insertion => insertion_condition(&sample.background_video, &sample.object_video, &sample.mask, patch_size),
    }
}

/// Clean latent the branch learns to generate: `x^b` for removal, `x^o` for insertion.
pub fn target_latent(task: TaskKind, sample: &TripletSample, patch_size: usize) -> Result<LatentGrid> {
    match task {
        TaskKind::Removal => encode_latent(&sample.background_video, patch_size),
        TaskKind::Insertion => encode_latent(&sample.object_video, patch_size),
    }
}

fn check_aligned(video: &VideoTensor, mask: &MaskVideo) -> Result<()> {
    if !mask.same_dims(video.frames(), video.height(), video.width()) {
        return Err(Error::shape("mask and video differ in size"));
    }
    Ok(())
}

/// `t * x + (1 - t) * z`.
pub fn forward_noise(x: &LatentGrid, z: &LatentGrid, t: f64) -> Result<LatentGrid> {
    if x.dims() != z.dims() {
        return Err(Error::shape("forward_noise needs equal shapes"));
    }
    Ok(x.with_data(x.data.iter().zip(&z.data).map(|(a, b)| t * a + (1.0 - t) * b).collect()))
}

/// `x - z`.
pub fn velocity_target(x: &LatentGrid, z: &LatentGrid) -> Result<LatentGrid> {
    if x.dims() != z.dims() {
        return Err(Error::shape("velocity_target needs equal shapes"));
    }
    Ok(x.with_data(x.data.iter().zip(&z.data).map(|(a, b)| a - b).collect()))
}
