use crate::error::{Error, Result};
use crate::math;
use crate::video::{VideoTensor, CHANNELS};

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_C1: f64 = 1e-4;
pub const SSIM_C2: f64 = 9e-4;

fn check_same(a: &VideoTensor, b: &VideoTensor) -> Result<()> {
    if !a.same_dims(b.frames(), b.height(), b.width()) {
        return Err(Error::shape("videos differ in size"));
    }
    Ok(())
}

pub fn mse(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    check_same(a, b)?;
    let n = a.data().len() as f64;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// `-10 log10(MSE)` with peak 1; identical inputs give `f64::INFINITY`.
pub fn psnr(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * math::log10(m))
}

/// SSIM of two windows from their means, variances and covariance.
pub fn ssim_from_moments(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64) -> f64 {
    ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2))
}

/// Mean SSIM over all stride-1 8x8 uniform windows, channels and frames,
/// with population (1/N) moments.
pub fn ssim(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    check_same(a, b)?;
    let (h, w) = (a.height(), a.width());
    let k = SSIM_WINDOW;
    if h < k || w < k {
        return Err(Error::shape("frames are smaller than the SSIM window"));
    }
    let n = (k * k) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for t in 0..a.frames() {
        let (fa, fb) = (a.frame(t), b.frame(t));
        for c in 0..CHANNELS {
            for y0 in 0..=h - k {
                for x0 in 0..=w - k {
                    let px = |f: &[f64], y: usize, x: usize| f[(y * w + x) * CHANNELS + c];
                    let (mut sa, mut sb) = (0.0, 0.0);
                    for y in y0..y0 + k {
                        for x in x0..x0 + k {
                            sa += px(fa, y, x);
                            sb += px(fb, y, x);
                        }
                    }
                    let (ma, mb) = (sa / n, sb / n);
                    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
                    for y in y0..y0 + k {
                        for x in x0..x0 + k {
                            let da = px(fa, y, x) - ma;
                            let db = px(fb, y, x) - mb;
                            vaa += da * da;
                            vbb += db * db;
                            vab += da * db;
                        }
                    }
                    total += ssim_from_moments(ma, mb, vaa / n, vbb / n, vab / n);
                    count += 1;
                }
            }
        }
    }
    Ok(total / count as f64)
}
