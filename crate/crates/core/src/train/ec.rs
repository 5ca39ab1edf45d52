//! Effect-consistency loss: `KL(f^diff || f^rm) + KL(f^diff || f^in)`, each
//! summed over positions and averaged over frames.

use alloc::vec::Vec;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::math;
use crate::model::TokenMap;

/// Floor applied to `q` inside the logarithm.
pub const KL_FLOOR: f64 = 1e-8;

/// Frame-averaged `KL(p || max(q, KL_FLOOR))`; terms with `p = 0` contribute zero.
pub fn kl_per_frame(p: &[f64], q: &[f64], frames: usize) -> f64 {
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            s += a * (math::ln(a) - math::ln(b.max(KL_FLOOR)));
        }
    }
    s / frames as f64
}

pub fn ec_loss(prior: &TokenMap, f_rm: &TokenMap, f_in: &TokenMap) -> Result<f64> {
    for f in [f_rm, f_in] {
        if f.data.len() != prior.data.len() || f.frames != prior.frames {
            return Err(Error::shape("effect maps and prior differ in shape"));
        }
    }
    Ok(kl_per_frame(&prior.data, &f_rm.data, prior.frames) + kl_per_frame(&prior.data, &f_in.data, prior.frames))
}

/// Tape version of one KL term against a fixed prior.
pub fn kl_graph(g: &mut Graph, prior: &TokenMap, f: Var) -> Var {
    let frames = prior.frames as f64;
    let entropy_part: f64 = prior.data.iter().filter(|&&p| p > 0.0).map(|&p| p * math::ln(p)).sum::<f64>() / frames;
    let weights: Vec<f64> = prior.data.iter().map(|&p| -p / frames).collect();
    let lq = g.log_floor(f, KL_FLOOR);
    let cross = g.dot_const(lq, weights);
    g.add_scalar(cross, entropy_part)
}
