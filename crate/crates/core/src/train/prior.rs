use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::TokenMap;
use crate::video::{resize_planes, TripletSample, CHANNELS};

/// Difference-map prior `f^diff`: channel-summed `|V^o - V^b|`, bilinearly
/// resized to `height x width` per frame, plus `epsilon`, normalized per frame.
pub fn diff_prior(sample: &TripletSample, height: usize, width: usize, epsilon: f64) -> Result<TokenMap> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon_prior must be positive".into()));
    }
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument("prior resolution must be at least 1x1".into()));
    }
    let o = &sample.object_video;
    let b = &sample.background_video;
    if !b.same_dims(o.frames(), o.height(), o.width()) {
        return Err(Error::shape("object and background videos differ in size"));
    }
    let diff: Vec<f64> = o
        .data()
        .chunks(CHANNELS)
        .zip(b.data().chunks(CHANNELS))
        .map(|(p, q)| p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum())
        .collect();
    let mut data = resize_planes(&diff, o.frames(), o.height(), o.width(), 1, height, width);
    for frame in data.chunks_mut(height * width) {
        let mut total = 0.0;
        for v in frame.iter_mut() {
            *v += epsilon;
            total += *v;
        }
        for v in frame.iter_mut() {
            *v /= total;
        }
    }
    Ok(TokenMap { frames: o.frames(), height, width, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::{MaskVideo, TripletMeta, VideoTensor};

    fn triplet(o: VideoTensor, b: VideoTensor) -> TripletSample {
        let (t, h, w) = (o.frames(), o.height(), o.width());
        TripletSample {
            object_video: o,
            background_video: b,
            mask: MaskVideo::zeros(t, h, w).unwrap(),
            effect_footprint: MaskVideo::zeros(t, h, w).unwrap(),
            meta: TripletMeta::default(),
        }
    }

    #[test]
    fn identical_videos_give_uniform_prior() {
        let v = VideoTensor::filled(2, 8, 8, 0.4).unwrap();
        let p = diff_prior(&triplet(v.clone(), v), 2, 2, 1e-3).unwrap();
        assert!(p.data.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn concentrated_difference_gives_near_point_mass() {
        let b = VideoTensor::filled(1, 8, 8, 0.0).unwrap();
        // Differences in the 4x4 top-left block map onto prior cell (0, 0).
        let o = VideoTensor::from_fn(1, 8, 8, |_, y, x| if y < 4 && x < 4 { [1.0; 3] } else { [0.0; 3] }).unwrap();
        let p = diff_prior(&triplet(o, b), 2, 2, 1e-12).unwrap();
        assert!(p.data[0] > 1.0 - 1e-9);
        assert!((p.data.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
