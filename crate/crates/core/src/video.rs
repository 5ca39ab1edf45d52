//! In-memory video, mask and triplet containers plus bilinear resampling.
//!
//! Resampling everywhere uses half-pixel centers with corners not aligned:
//! output pixel `i` samples source coordinate `(i + 0.5) * in / out - 0.5`,
//! clamped to the valid index range.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

pub const CHANNELS: usize = 3;
pub const MIN_SIDE: usize = 8;
pub const MASK_THRESHOLD: f64 = 0.5;

/// RGB video with values in `[0, 1]`, laid out frames x height x width x channels.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl VideoTensor {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(frames, height, width)?;
        if data.len() != frames * height * width * CHANNELS {
            return Err(Error::shape("video data length does not match dimensions"));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidArgument(alloc::format!("video value {v} outside [0,1]")));
        }
        Ok(Self { frames, height, width, data })
    }

    pub fn filled(frames: usize, height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(frames, height, width, vec![value; frames * height * width * CHANNELS])
    }

    /// Builds a video from a per-pixel function returning RGB.
    pub fn from_fn(
        frames: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(frames * height * width * CHANNELS);
        for t in 0..frames {
            for y in 0..height {
                for x in 0..width {
                    data.extend_from_slice(&f(t, y, x));
                }
            }
        }
        Self::new(frames, height, width, data)
    }

    pub(crate) fn from_raw_unchecked(frames: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), frames * height * width * CHANNELS);
        Self { frames, height, width, data }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * CHANNELS
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    #[inline]
    pub fn index(&self, t: usize, y: usize, x: usize, c: usize) -> usize {
        ((t * self.height + y) * self.width + x) * CHANNELS + c
    }

    pub fn get(&self, t: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(t, y, x, c)]
    }

    pub fn same_dims(&self, frames: usize, height: usize, width: usize) -> bool {
        self.frames == frames && self.height == height && self.width == width
    }

    /// Elementwise product with a mask broadcast over channels.
    pub fn masked(&self, mask: &MaskVideo) -> Result<VideoTensor> {
        if !mask.same_dims(self.frames, self.height, self.width) {
            return Err(Error::shape("mask and video dimensions differ"));
        }
        let data = self
            .data
            .chunks(CHANNELS)
            .zip(mask.data())
            .flat_map(|(px, m)| px.iter().map(move |v| v * m))
            .collect();
        Ok(Self::from_raw_unchecked(self.frames, self.height, self.width, data))
    }
}

/// Single-channel mask video with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVideo {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl MaskVideo {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(frames, height, width)?;
        if data.len() != frames * height * width {
            return Err(Error::shape("mask data length does not match dimensions"));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidArgument(alloc::format!("mask value {v} outside [0,1]")));
        }
        Ok(Self { frames, height, width, data })
    }

    pub fn zeros(frames: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(frames, height, width, vec![0.0; frames * height * width])
    }

    pub fn from_fn(
        frames: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(frames * height * width);
        for t in 0..frames {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(t, y, x));
                }
            }
        }
        Self::new(frames, height, width, data)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, t: usize, y: usize, x: usize) -> f64 {
        self.data[(t * self.height + y) * self.width + x]
    }

    pub fn is_set(&self, t: usize, y: usize, x: usize) -> bool {
        self.get(t, y, x) >= MASK_THRESHOLD
    }

    pub fn same_dims(&self, frames: usize, height: usize, width: usize) -> bool {
        self.frames == frames && self.height == height && self.width == width
    }

    pub fn binarized(&self) -> MaskVideo {
        let data = self.data.iter().map(|&v| if v >= MASK_THRESHOLD { 1.0 } else { 0.0 }).collect();
        MaskVideo { data, ..*self }
    }

    /// Number of set pixels per frame after binarization.
    pub fn area_per_frame(&self) -> Vec<usize> {
        let n = self.height * self.width;
        self.data.chunks(n).map(|f| f.iter().filter(|&&v| v >= MASK_THRESHOLD).count()).collect()
    }

    /// Replicates the mask into an RGB video.
    pub fn to_video(&self) -> VideoTensor {
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        VideoTensor::from_raw_unchecked(self.frames, self.height, self.width, data)
    }
}

impl MaskVideo {
    fn with_data(frames: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        MaskVideo { frames, height, width, data }
    }
}

fn check_dims(frames: usize, height: usize, width: usize) -> Result<()> {
    if frames == 0 {
        return Err(Error::InvalidArgument("video needs at least one frame".into()));
    }
    if height < MIN_SIDE || width < MIN_SIDE {
        return Err(Error::InvalidArgument(alloc::format!(
            "frame size {height}x{width} below minimum {MIN_SIDE}"
        )));
    }
    Ok(())
}

/// Provenance of a synthesized triplet.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TripletMeta {
    pub seed: u64,
    pub effect_kinds: Vec<String>,
    pub motion_rules: Vec<u8>,
    pub removal_set: Vec<usize>,
    pub camera_id: usize,
}

/// `(object video, background video, mask)` plus the ground-truth effect footprint.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletSample {
    pub object_video: VideoTensor,
    pub background_video: VideoTensor,
    pub mask: MaskVideo,
    pub effect_footprint: MaskVideo,
    pub meta: TripletMeta,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    FrameCountMismatch { component: &'static str },
    SizeMismatch { component: &'static str },
    /// Pixels differ between the two videos outside `mask ∪ footprint`.
    OutsideFootprintMismatch { pixels: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::FrameCountMismatch { component } => write!(f, "frame count mismatch: {component}"),
            Violation::SizeMismatch { component } => write!(f, "size mismatch: {component}"),
            Violation::OutsideFootprintMismatch { pixels } => {
                write!(f, "outside-footprint mismatch: {pixels} pixels")
            }
        }
    }
}

/// Returns every violated triplet invariant; an empty list means valid.
pub fn validate_triplet(sample: &TripletSample) -> Vec<Violation> {
    let mut out = Vec::new();
    let v = &sample.object_video;
    let dims = |f: usize, h: usize, w: usize, name: &'static str, out: &mut Vec<Violation>| {
        if f != v.frames {
            out.push(Violation::FrameCountMismatch { component: name });
        }
        if h != v.height || w != v.width {
            out.push(Violation::SizeMismatch { component: name });
        }
    };
    let b = &sample.background_video;
    dims(b.frames, b.height, b.width, "background", &mut out);
    let m = &sample.mask;
    dims(m.frames, m.height, m.width, "mask", &mut out);
    let e = &sample.effect_footprint;
    dims(e.frames, e.height, e.width, "footprint", &mut out);
    if !out.is_empty() {
        return out;
    }
    let differing = count_outside_differences(sample);
    if differing > 0 {
        out.push(Violation::OutsideFootprintMismatch { pixels: differing });
    }
    out
}

/// Pixels where the two videos are not bit-identical although neither the
/// mask nor the footprint covers them.
pub fn count_outside_differences(sample: &TripletSample) -> usize {
    let v = &sample.object_video;
    let b = &sample.background_video;
    let mut count = 0;
    for t in 0..v.frames {
        for y in 0..v.height {
            for x in 0..v.width {
                if sample.mask.get(t, y, x) > 0.0 || sample.effect_footprint.get(t, y, x) > 0.0 {
                    continue;
                }
                let i = v.index(t, y, x, 0);
                if (0..CHANNELS).any(|c| v.data[i + c].to_bits() != b.data[i + c].to_bits()) {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Source sampling positions and weights along one axis.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Tap {
    pub lo: usize,
    pub hi: usize,
    pub w_hi: f64,
}

/// Tap for continuous source coordinate `s` over `len` samples, clamped.
#[inline]
pub(crate) fn tap_at(s: f64, len: usize) -> Tap {
    let max = (len - 1) as f64;
    let s = s.clamp(0.0, max);
    let lo = math::floor(s) as usize;
    let hi = (lo + 1).min(len - 1);
    Tap { lo, hi, w_hi: s - lo as f64 }
}

pub(crate) fn axis_taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output).map(|i| tap_at((i as f64 + 0.5) * scale - 0.5, input)).collect()
}

/// Bilinear sample of an interleaved plane at (sy, sx) source coordinates.
#[inline]
pub(crate) fn sample_plane(
    plane: &[f64],
    width: usize,
    channels: usize,
    ty: Tap,
    tx: Tap,
    out: &mut [f64],
) {
    let (wy1, wx1) = (ty.w_hi, tx.w_hi);
    let (wy0, wx0) = (1.0 - wy1, 1.0 - wx1);
    let p00 = (ty.lo * width + tx.lo) * channels;
    let p01 = (ty.lo * width + tx.hi) * channels;
    let p10 = (ty.hi * width + tx.lo) * channels;
    let p11 = (ty.hi * width + tx.hi) * channels;
    for c in 0..channels {
        let top = plane[p00 + c] * wx0 + plane[p01 + c] * wx1;
        let bottom = plane[p10 + c] * wx0 + plane[p11 + c] * wx1;
        out[c] = top * wy0 + bottom * wy1;
    }
}

/// Resizes an interleaved `frames x h x w x channels` buffer.
pub fn resize_planes(
    data: &[f64],
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    let ty = axis_taps(height, out_h);
    let tx = axis_taps(width, out_w);
    let frame_len = height * width * channels;
    let mut out = vec![0.0; frames * out_h * out_w * channels];
    for t in 0..frames {
        let plane = &data[t * frame_len..(t + 1) * frame_len];
        for (i, &y) in ty.iter().enumerate() {
            for (j, &x) in tx.iter().enumerate() {
                let o = ((t * out_h + i) * out_w + j) * channels;
                sample_plane(plane, width, channels, y, x, &mut out[o..o + channels]);
            }
        }
    }
    out
}

/// Per-frame bilinear resize with values clamped to `[0, 1]`.
pub fn resize_bilinear(video: &VideoTensor, out_h: usize, out_w: usize) -> Result<VideoTensor> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument("resize target must be at least 1x1".into()));
    }
    let mut data = resize_planes(&video.data, video.frames, video.height, video.width, CHANNELS, out_h, out_w);
    for v in &mut data {
        *v = v.clamp(0.0, 1.0);
    }
    // Targets below the container minimum are legal resampling outputs.
    Ok(VideoTensor::from_raw_unchecked(video.frames, out_h, out_w, data))
}

pub fn resize_mask(mask: &MaskVideo, out_h: usize, out_w: usize) -> Result<MaskVideo> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument("resize target must be at least 1x1".into()));
    }
    let mut data = resize_planes(&mask.data, mask.frames, mask.height, mask.width, 1, out_h, out_w);
    for v in &mut data {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(MaskVideo::with_data(mask.frames, out_h, out_w, data))
}
