//! Rectified-flow pieces: logit-normal timesteps, Gaussian noise grids and the
//! denoising loss.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math;
use crate::model::LatentGrid;

/// `t = sigmoid(loc + scale * n)`, `n ~ N(0, 1)`, kept strictly inside `(0, 1)`.
pub fn sample_timestep(rng: &mut impl Rng, loc: f64, scale: f64) -> f64 {
    let n: f64 = rng.sample(StandardNormal);
    math::sigmoid(loc + scale * n).clamp(f64::EPSILON, 1.0 - f64::EPSILON)
}

pub fn gaussian_grid(rng: &mut impl Rng, dims: (usize, usize, usize, usize)) -> LatentGrid {
    let (t, h, w, c) = dims;
    let data: Vec<f64> = (0..t * h * w * c).map(|_| rng.sample(StandardNormal)).collect();
    LatentGrid::new(t, h, w, c, data).expect("finite normal samples")
}

/// Mean squared error over all elements.
pub fn denoise_loss(pred: &LatentGrid, target: &LatentGrid) -> Result<f64> {
    if pred.dims() != target.dims() {
        return Err(Error::shape("denoise_loss needs equal shapes"));
    }
    let n = pred.data().len() as f64;
    Ok(pred.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn degenerate_scale_gives_half() {
        let mut rng = seeded(0);
        assert_eq!(sample_timestep(&mut rng, 0.0, 0.0), 0.5);
    }

    #[test]
    fn median_is_one_half() {
        let mut rng = seeded(1);
        let mut ts: Vec<f64> = (0..100_000).map(|_| sample_timestep(&mut rng, 0.0, 1.0)).collect();
        assert!(ts.iter().all(|&t| t > 0.0 && t < 1.0));
        ts.sort_by(f64::total_cmp);
        let median = ts[ts.len() / 2];
        assert!((median - 0.5).abs() < 0.01, "{median}");
    }

    #[test]
    fn unit_offset_loss() {
        let a = LatentGrid::new(1, 1, 1, 3, alloc::vec![0.0, 1.0, 2.0]).unwrap();
        let b = LatentGrid::new(1, 1, 1, 3, alloc::vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(denoise_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(denoise_loss(&a, &b).unwrap(), 1.0);
    }
}
