use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::seeded;
use crate::video::{resize_planes, VideoTensor, CHANNELS};

/// Maps frames to fixed-width feature vectors.
pub trait FeatureExtractor {
    fn dim(&self) -> usize;

    fn frame_features(&self, video: &VideoTensor, t: usize) -> Vec<f64>;

    /// Whole-video feature; the default is the mean of the frame features.
    fn video_features(&self, video: &VideoTensor) -> Vec<f64> {
        let mut acc = alloc::vec![0.0; self.dim()];
        for t in 0..video.frames() {
            for (a, f) in acc.iter_mut().zip(self.frame_features(video, t)) {
                *a += f;
            }
        }
        acc.iter_mut().for_each(|a| *a /= video.frames() as f64);
        acc
    }
}

/// Downsample to a `grid x grid` RGB image, flatten, multiply by a seeded
/// Gaussian matrix scaled by `1/sqrt(inputs)` and by `gain`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomProjectionExtractor {
    grid: usize,
    dim: usize,
    matrix: Vec<f64>,
}

impl RandomProjectionExtractor {
    pub const DEFAULT_GRID: usize = 8;
    pub const DEFAULT_DIM: usize = 64;

    pub fn new(grid: usize, dim: usize, seed: u64, gain: f64) -> Result<Self> {
        if grid == 0 || dim == 0 {
            return Err(Error::InvalidArgument("grid and dim must be positive".into()));
        }
        let inputs = grid * grid * CHANNELS;
        let norm = gain / math::sqrt(inputs as f64);
        let mut rng = seeded(seed);
        let matrix = (0..inputs * dim).map(|_| rng.sample::<f64, _>(StandardNormal) * norm).collect();
        Ok(Self { grid, dim, matrix })
    }

    pub fn standard(seed: u64) -> Self {
        Self::new(Self::DEFAULT_GRID, Self::DEFAULT_DIM, seed, 1.0).expect("valid defaults")
    }
}

impl FeatureExtractor for RandomProjectionExtractor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn frame_features(&self, video: &VideoTensor, t: usize) -> Vec<f64> {
        let small = resize_planes(video.frame(t), 1, video.height(), video.width(), CHANNELS, self.grid, self.grid);
        let inputs = small.len();
        (0..self.dim)
            .map(|o| self.matrix[o * inputs..(o + 1) * inputs].iter().zip(&small).map(|(m, x)| m * x).sum())
            .collect()
    }
}

/// Mean over frames of the Euclidean distance between frame features.
pub fn perceptual_distance(a: &VideoTensor, b: &VideoTensor, extractor: &impl FeatureExtractor) -> Result<f64> {
    if !a.same_dims(b.frames(), b.height(), b.width()) {
        return Err(Error::shape("videos differ in size"));
    }
    let mut total = 0.0;
    for t in 0..a.frames() {
        let fa = extractor.frame_features(a, t);
        let fb = extractor.frame_features(b, t);
        total += math::sqrt(fa.iter().zip(&fb).map(|(x, y)| (x - y) * (x - y)).sum());
    }
    Ok(total / a.frames() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(seed: u64) -> VideoTensor {
        let mut rng = seeded(seed);
        let data = (0..2 * 16 * 16 * 3).map(|_| rng.random::<f64>()).collect();
        VideoTensor::new(2, 16, 16, data).unwrap()
    }

    #[test]
    fn distance_is_zero_symmetric_and_linear() {
        let (a, b) = (video(1), video(2));
        let e = RandomProjectionExtractor::standard(3);
        assert_eq!(perceptual_distance(&a, &a, &e).unwrap(), 0.0);
        let d = perceptual_distance(&a, &b, &e).unwrap();
        assert_eq!(d, perceptual_distance(&b, &a, &e).unwrap());
        let e3 = RandomProjectionExtractor::new(8, 64, 3, 3.0).unwrap();
        assert!((perceptual_distance(&a, &b, &e3).unwrap() - 3.0 * d).abs() < 1e-12 * d.max(1.0));
    }

    #[test]
    fn extractor_is_deterministic() {
        let v = video(4);
        assert_eq!(
            RandomProjectionExtractor::standard(5).video_features(&v),
            RandomProjectionExtractor::standard(5).video_features(&v)
        );
    }
}
