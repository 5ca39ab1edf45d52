use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::metrics::linalg::{matmul, spectral_map};

/// Ridge added to each covariance before the matrix square root.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

/// Mean and unbiased covariance (plus the ridge) of `n` samples of width `dim`.
pub fn gaussian_fit(samples: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidArgument("a Gaussian fit needs at least two samples".into()));
    }
    let dim = samples[0].len();
    if dim == 0 || samples.iter().any(|s| s.len() != dim) {
        return Err(Error::shape("feature vectors must share a positive width"));
    }
    if samples.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("feature vectors".into()));
    }
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; dim * dim];
    for s in samples {
        for i in 0..dim {
            let di = s[i] - mean[i];
            for j in 0..dim {
                cov[i * dim + j] += di * (s[j] - mean[j]);
            }
        }
    }
    for (k, c) in cov.iter_mut().enumerate() {
        *c /= (n - 1) as f64;
        if k % (dim + 1) == 0 {
            *c += COVARIANCE_RIDGE;
        }
    }
    Ok((mean, cov))
}

/// `tr sqrt(sqrt(S1) S2 sqrt(S1))`, negative eigenvalues clamped to zero.
fn trace_sqrt_product(s1: &[f64], s2: &[f64], dim: usize) -> f64 {
    let r1 = spectral_map(s1, dim, |l| math::sqrt(l.max(0.0)));
    let mut m = matmul(&matmul(&r1, s2, dim), &r1, dim);
    for i in 0..dim {
        for j in i + 1..dim {
            let avg = 0.5 * (m[i * dim + j] + m[j * dim + i]);
            m[i * dim + j] = avg;
            m[j * dim + i] = avg;
        }
    }
    let (vals, _) = crate::metrics::linalg::symmetric_eigen(&m, dim);
    vals.iter().map(|&l| math::sqrt(l.max(0.0))).sum()
}

/// Fréchet distance between Gaussian fits of two feature sets.
pub fn frechet_from_fits(mu1: &[f64], s1: &[f64], mu2: &[f64], s2: &[f64]) -> Result<f64> {
    let dim = mu1.len();
    if mu2.len() != dim || s1.len() != dim * dim || s2.len() != dim * dim {
        return Err(Error::shape("Gaussian fits have different widths"));
    }
    let mean_term: f64 = mu1.iter().zip(mu2).map(|(a, b)| (a - b) * (a - b)).sum();
    let tr1: f64 = (0..dim).map(|i| s1[i * dim + i]).sum();
    let tr2: f64 = (0..dim).map(|i| s2[i * dim + i]).sum();
    // Averaging both orders makes the result exactly symmetric.
    let cross = 0.5 * (trace_sqrt_product(s1, s2, dim) + trace_sqrt_product(s2, s1, dim));
    let d = mean_term + (tr1 + tr2) - 2.0 * cross;
    if !d.is_finite() {
        return Err(Error::NonFinite("Fréchet distance".into()));
    }
    Ok(d.max(0.0))
}

pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let (mu1, s1) = gaussian_fit(a)?;
    let (mu2, s2) = gaussian_fit(b)?;
    frechet_from_fits(&mu1, &s1, &mu2, &s2)
}
