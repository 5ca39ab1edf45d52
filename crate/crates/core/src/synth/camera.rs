//! Ken Burns camera motion: fourteen motion rules, per-frame virtual camera
//! paths that keep the crop window inside the source frame, and the crop +
//! resample that turns a static clip into a moving-camera clip.
//!
//! Straight segments interpolate zoom and center offset with the same eased
//! progress `s(k) = (1 - cos(pi k / n)) / 2`. Both endpoints keep the offset
//! within 95% of the window slack `E (1 - 1/zoom)`; slack is concave along the
//! segment and the offset magnitude convex, so every intermediate frame is
//! contained as well.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::video::{sample_plane, tap_at, MaskVideo, TripletSample, VideoTensor, CHANNELS};

pub const MOTION_RULE_COUNT: usize = 14;
pub const SAMPLED_RULES_PER_CLIP: usize = 5;

const CONTAINMENT_TOL: f64 = 1e-9;
const SLACK_USE: f64 = 0.95;
const MIN_ZOOM_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum MotionRule {
    ZoomIn = 1,
    ZoomOut = 2,
    PanLeft = 3,
    PanRight = 4,
    TiltUp = 5,
    TiltDown = 6,
    ZoomInPanLeft = 7,
    ZoomInPanRight = 8,
    ZoomOutPanLeft = 9,
    ZoomOutPanRight = 10,
    ZoomInTilt = 11,
    ZoomOutTilt = 12,
    WalkBob = 13,
    RandomCombo = 14,
}

impl MotionRule {
    pub const ALL: [MotionRule; MOTION_RULE_COUNT] = [
        MotionRule::ZoomIn,
        MotionRule::ZoomOut,
        MotionRule::PanLeft,
        MotionRule::PanRight,
        MotionRule::TiltUp,
        MotionRule::TiltDown,
        MotionRule::ZoomInPanLeft,
        MotionRule::ZoomInPanRight,
        MotionRule::ZoomOutPanLeft,
        MotionRule::ZoomOutPanRight,
        MotionRule::ZoomInTilt,
        MotionRule::ZoomOutTilt,
        MotionRule::WalkBob,
        MotionRule::RandomCombo,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get((id as usize).wrapping_sub(1)).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            MotionRule::ZoomIn => "zoom_in",
            MotionRule::ZoomOut => "zoom_out",
            MotionRule::PanLeft => "pan_left",
            MotionRule::PanRight => "pan_right",
            MotionRule::TiltUp => "tilt_up",
            MotionRule::TiltDown => "tilt_down",
            MotionRule::ZoomInPanLeft => "zoom_in+pan_left",
            MotionRule::ZoomInPanRight => "zoom_in+pan_right",
            MotionRule::ZoomOutPanLeft => "zoom_out+pan_left",
            MotionRule::ZoomOutPanRight => "zoom_out+pan_right",
            MotionRule::ZoomInTilt => "zoom_in+tilt",
            MotionRule::ZoomOutTilt => "zoom_out+tilt",
            MotionRule::WalkBob => "walk_bob",
            MotionRule::RandomCombo => "random_combo",
        }
    }

    /// Straight-segment motion of the rule; tilt direction of the combined
    /// zoom+tilt rules is drawn from `rng`. `None` for walk-bob and random-combo.
    fn primitive(self, rng: &mut impl Rng) -> Option<Primitive> {
        use Axis::*;
        let p = |zoom, x, y| Some(Primitive { zoom, x, y });
        let tilt = if rng.random_bool(0.5) { Decrease } else { Increase };
        match self {
            MotionRule::ZoomIn => p(Increase, Hold, Hold),
            MotionRule::ZoomOut => p(Decrease, Hold, Hold),
            MotionRule::PanLeft => p(Hold, Decrease, Hold),
            MotionRule::PanRight => p(Hold, Increase, Hold),
            MotionRule::TiltUp => p(Hold, Hold, Decrease),
            MotionRule::TiltDown => p(Hold, Hold, Increase),
            MotionRule::ZoomInPanLeft => p(Increase, Decrease, Hold),
            MotionRule::ZoomInPanRight => p(Increase, Increase, Hold),
            MotionRule::ZoomOutPanLeft => p(Decrease, Decrease, Hold),
            MotionRule::ZoomOutPanRight => p(Decrease, Increase, Hold),
            MotionRule::ZoomInTilt => p(Increase, Hold, tilt),
            MotionRule::ZoomOutTilt => p(Decrease, Hold, tilt),
            MotionRule::WalkBob | MotionRule::RandomCombo => None,
        }
    }
}

/// Direction of change of one camera coordinate over a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Decrease,
    Hold,
    Increase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Primitive {
    pub zoom: Axis,
    pub x: Axis,
    pub y: Axis,
}

/// A straight segment over frames `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSegment {
    pub motion: Primitive,
    pub start: usize,
    pub end: usize,
}

/// `center_y(k) = base_y + amplitude * sin(2 pi cycles_per_frame k + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BobParams {
    pub base_y: f64,
    pub amplitude: f64,
    pub cycles_per_frame: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraState {
    pub center_x: f64,
    pub center_y: f64,
    pub zoom: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPath {
    pub rule: Option<MotionRule>,
    pub src_h: usize,
    pub src_w: usize,
    pub states: Vec<CameraState>,
    pub segments: Vec<PathSegment>,
    pub bob: Option<BobParams>,
}

impl CameraPath {
    /// Static full-frame camera.
    pub fn identity(frames: usize, src_h: usize, src_w: usize) -> Self {
        let s = CameraState { center_x: src_w as f64 / 2.0, center_y: src_h as f64 / 2.0, zoom: 1.0 };
        Self { rule: None, src_h, src_w, states: vec![s; frames], segments: Vec::new(), bob: None }
    }

    pub fn frames(&self) -> usize {
        self.states.len()
    }

    /// Crop window `(x0, y0, width, height)` at frame `k`.
    pub fn window(&self, k: usize) -> (f64, f64, f64, f64) {
        let s = self.states[k];
        let w = self.src_w as f64 / s.zoom;
        let h = self.src_h as f64 / s.zoom;
        (s.center_x - w / 2.0, s.center_y - h / 2.0, w, h)
    }

    pub fn contained(&self, k: usize) -> bool {
        let (x0, y0, w, h) = self.window(k);
        self.states[k].zoom >= 1.0
            && x0 >= -CONTAINMENT_TOL
            && y0 >= -CONTAINMENT_TOL
            && x0 + w <= self.src_w as f64 + CONTAINMENT_TOL
            && y0 + h <= self.src_h as f64 + CONTAINMENT_TOL
    }

    pub fn first_violation(&self) -> Option<usize> {
        (0..self.frames()).find(|&k| !self.contained(k))
    }
}

/// Randomization bounds for camera paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionBounds {
    /// Zoom range of the zoomed end of a segment.
    pub zoom: (f64, f64),
    /// Maximum zoom reachable by random-combo segments.
    pub zoom_cap: f64,
    /// Fraction of the available slack a pan travels at each end.
    pub travel: (f64, f64),
    /// Bob amplitude as a fraction of the vertical slack.
    pub bob_amplitude: (f64, f64),
    /// Bob oscillation cycles over the clip (capped below the frame Nyquist rate).
    pub bob_cycles: (f64, f64),
    /// Minimum center move of a combo segment, as a fraction of the half extent.
    pub min_move: f64,
}

impl Default for MotionBounds {
    fn default() -> Self {
        Self {
            zoom: (1.15, 1.5),
            zoom_cap: 1.6,
            travel: (0.5, 1.0),
            bob_amplitude: (0.3, 0.8),
            bob_cycles: (1.1, 2.5),
            min_move: 0.02,
        }
    }
}

/// Five distinct rules drawn uniformly without replacement.
pub fn sample_motion_rules(rng: &mut impl Rng) -> [MotionRule; SAMPLED_RULES_PER_CLIP] {
    let picked = rand::seq::index::sample(rng, MOTION_RULE_COUNT, SAMPLED_RULES_PER_CLIP);
    let mut out = [MotionRule::ZoomIn; SAMPLED_RULES_PER_CLIP];
    for (o, i) in out.iter_mut().zip(picked.iter()) {
        *o = MotionRule::ALL[i];
    }
    out
}

fn slack(half_extent: f64, zoom: f64) -> f64 {
    half_extent * (1.0 - 1.0 / zoom)
}

/// Smallest zoom whose slack reaches `needed`.
fn zoom_for_slack(half_extent: f64, needed: f64) -> f64 {
    if needed <= 0.0 {
        1.0
    } else if needed >= half_extent {
        f64::INFINITY
    } else {
        1.0 / (1.0 - needed / half_extent)
    }
}

fn ease(k: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    0.5 - 0.5 * math::cos(math::PI * k as f64 / n as f64)
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    zoom: f64,
    ox: f64,
    oy: f64,
}

struct Frame {
    ex: f64,
    ey: f64,
}

impl Frame {
    fn state(&self, o: Offsets) -> CameraState {
        CameraState { center_x: self.ex + o.ox, center_y: self.ey + o.oy, zoom: o.zoom }
    }
}

/// Endpoints for a standalone straight rule starting from the frame center.
fn standalone_endpoints(p: Primitive, fr: &Frame, rng: &mut impl Rng, b: &MotionBounds) -> (Offsets, Offsets) {
    let zr = uniform(rng, b.zoom.0, b.zoom.1);
    let (z0, z1) = match p.zoom {
        Axis::Increase => (1.0, zr),
        Axis::Decrease => (zr, 1.0),
        Axis::Hold => (zr, zr),
    };
    let mut axis = |dir: Axis, e: f64| -> (f64, f64) {
        let a = uniform(rng, b.travel.0, b.travel.1) * SLACK_USE * slack(e, z0);
        let c = uniform(rng, b.travel.0, b.travel.1) * SLACK_USE * slack(e, z1);
        match dir {
            Axis::Decrease => (a, -c),
            Axis::Increase => (-a, c),
            Axis::Hold => (0.0, 0.0),
        }
    };
    let (x0, x1) = axis(p.x, fr.ex);
    let (y0, y1) = axis(p.y, fr.ey);
    (Offsets { zoom: z0, ox: x0, oy: y0 }, Offsets { zoom: z1, ox: x1, oy: y1 })
}

/// Slack needed at the segment end for one axis moving in `dir` from `o`.
fn required_slack(dir: Axis, o: f64, min_move: f64) -> f64 {
    match dir {
        Axis::Hold => o.abs() / SLACK_USE,
        Axis::Decrease => (min_move - o).max(0.0) / SLACK_USE,
        Axis::Increase => (o + min_move).max(0.0) / SLACK_USE,
    }
}

/// Feasible end offsets for primitive `p` continuing from `from`, if any.
fn continue_segment(p: Primitive, from: Offsets, fr: &Frame, rng: &mut impl Rng, b: &MotionBounds) -> Option<Offsets> {
    let mx = b.min_move * fr.ex;
    let my = b.min_move * fr.ey;
    let z_req = zoom_for_slack(fr.ex, required_slack(p.x, from.ox, mx))
        .max(zoom_for_slack(fr.ey, required_slack(p.y, from.oy, my)));
    let zoom = match p.zoom {
        Axis::Hold => {
            if z_req > from.zoom {
                return None;
            }
            from.zoom
        }
        Axis::Increase => {
            let lo = (from.zoom + MIN_ZOOM_STEP).max(z_req);
            if lo >= b.zoom_cap {
                return None;
            }
            uniform(rng, lo, b.zoom_cap)
        }
        Axis::Decrease => {
            let lo = z_req.max(1.0);
            let hi = from.zoom - MIN_ZOOM_STEP;
            if lo >= hi {
                return None;
            }
            uniform(rng, lo, hi)
        }
    };
    let mut axis = |dir: Axis, o: f64, e: f64, m: f64| -> f64 {
        let s = SLACK_USE * slack(e, zoom);
        match dir {
            Axis::Hold => o,
            // Zooming out can shrink the slack below |o| on the side we move away from.
            Axis::Decrease => uniform(rng, -s, (o - m).min(s)),
            Axis::Increase => uniform(rng, (o + m).max(-s), s),
        }
    };
    let ox = axis(p.x, from.ox, fr.ex, mx);
    let oy = axis(p.y, from.oy, fr.ey, my);
    Some(Offsets { zoom, ox, oy })
}

fn push_segment(states: &mut Vec<CameraState>, fr: &Frame, from: Offsets, to: Offsets, steps: usize, include_first: bool) {
    let first = if include_first { 0 } else { 1 };
    for k in first..=steps {
        // The last frame lands exactly on `to` so a following hold matches it bit for bit.
        if k == steps {
            states.push(fr.state(to));
            continue;
        }
        let s = ease(k, steps);
        states.push(fr.state(Offsets {
            zoom: from.zoom + (to.zoom - from.zoom) * s,
            ox: from.ox + (to.ox - from.ox) * s,
            oy: from.oy + (to.oy - from.oy) * s,
        }));
    }
}

/// Per-frame camera path for `rule` over a `src_h x src_w` source.
///
/// Parameters are rescaled to fit the frame; the only error is `frames < 2`.
/// Walk-bob reaches two zero crossings once `frames >= 4`; random-combo has
/// two or three segments once `frames >= 3`.
pub fn camera_path(
    rule: MotionRule,
    frames: usize,
    src_h: usize,
    src_w: usize,
    rng: &mut impl Rng,
    bounds: &MotionBounds,
) -> Result<CameraPath> {
    if frames < 2 {
        return Err(Error::InvalidArgument("camera path needs at least two frames".into()));
    }
    let fr = Frame { ex: src_w as f64 / 2.0, ey: src_h as f64 / 2.0 };
    let steps = frames - 1;
    let mut path = CameraPath { rule: Some(rule), src_h, src_w, states: Vec::with_capacity(frames), segments: Vec::new(), bob: None };
    match rule {
        MotionRule::WalkBob => {
            let zoom = uniform(rng, bounds.zoom.0, bounds.zoom.1);
            let amplitude = uniform(rng, bounds.bob_amplitude.0, bounds.bob_amplitude.1) * SLACK_USE * slack(fr.ey, zoom);
            let cycles = uniform(rng, bounds.bob_cycles.0, bounds.bob_cycles.1).min(0.45 * steps as f64);
            let f = cycles / steps as f64;
            let mut phase = uniform(rng, 0.05 * math::PI, 0.15 * math::PI);
            for _ in 0..16 {
                let near_zero = (0..frames).any(|k| math::sin(2.0 * math::PI * f * k as f64 + phase).abs() < 1e-3);
                if !near_zero {
                    break;
                }
                phase = uniform(rng, 0.05 * math::PI, 0.15 * math::PI);
            }
            let bob = BobParams { base_y: fr.ey, amplitude, cycles_per_frame: f, phase };
            for k in 0..frames {
                let dy = amplitude * math::sin(2.0 * math::PI * f * k as f64 + phase);
                path.states.push(CameraState { center_x: fr.ex, center_y: fr.ey + dy, zoom });
            }
            path.bob = Some(bob);
        }
        MotionRule::RandomCombo => {
            let wanted = if rng.random_bool(0.5) { 2 } else { 3 };
            let count = wanted.min(steps).max(1);
            // Distinct cut points split the steps into `count` non-empty runs.
            let mut cuts: Vec<usize> = rand::seq::index::sample(rng, steps - 1, count - 1).into_iter().map(|c| c + 1).collect();
            cuts.sort_unstable();
            let mut bounds_at = vec![0];
            bounds_at.extend(cuts);
            bounds_at.push(steps);
            let mut state = Offsets { zoom: uniform(rng, 1.0, 1.3), ox: 0.0, oy: 0.0 };
            let mut previous: Option<Primitive> = None;
            for (si, w) in bounds_at.windows(2).enumerate() {
                let mut candidates: Vec<MotionRule> = MotionRule::ALL[..12].to_vec();
                candidates.shuffle(rng);
                let mut chosen = None;
                for pass in 0..2 {
                    for r in &candidates {
                        let p = r.primitive(rng).expect("straight rule");
                        if pass == 0 && Some(p) == previous {
                            continue;
                        }
                        if let Some(end) = continue_segment(p, state, &fr, rng, bounds) {
                            chosen = Some((p, end));
                            break;
                        }
                    }
                    if chosen.is_some() {
                        break;
                    }
                }
                let (p, end) = chosen.expect("a pan away from the nearer edge is always feasible");
                push_segment(&mut path.states, &fr, state, end, w[1] - w[0], si == 0);
                path.segments.push(PathSegment { motion: p, start: w[0], end: w[1] });
                previous = Some(p);
                state = end;
            }
        }
        straight => {
            let p = straight.primitive(rng).expect("straight rule");
            let (from, to) = standalone_endpoints(p, &fr, rng, bounds);
            push_segment(&mut path.states, &fr, from, to, steps, true);
            path.segments.push(PathSegment { motion: p, start: 0, end: steps });
        }
    }
    debug_assert_eq!(path.states.len(), frames);
    Ok(path)
}

fn check_path(path: &CameraPath, frames: usize, h: usize, w: usize) -> Result<()> {
    if path.frames() != frames {
        return Err(Error::shape("camera path and video frame counts differ"));
    }
    if path.src_h != h || path.src_w != w {
        return Err(Error::shape("camera path source size differs from the video"));
    }
    if let Some(frame) = path.first_violation() {
        return Err(Error::Containment { frame });
    }
    Ok(())
}

fn crop_resample(
    data: &[f64],
    path: &CameraPath,
    channels: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    let (h, w) = (path.src_h, path.src_w);
    let frame_len = h * w * channels;
    let mut out = vec![0.0; path.frames() * out_h * out_w * channels];
    for k in 0..path.frames() {
        let (x0, y0, ww, wh) = path.window(k);
        let sx = ww / out_w as f64;
        let sy = wh / out_h as f64;
        let plane = &data[k * frame_len..(k + 1) * frame_len];
        for i in 0..out_h {
            let ty = tap_at(y0 + (i as f64 + 0.5) * sy - 0.5, h);
            for j in 0..out_w {
                let tx = tap_at(x0 + (j as f64 + 0.5) * sx - 0.5, w);
                let o = ((k * out_h + i) * out_w + j) * channels;
                sample_plane(plane, w, channels, ty, tx, &mut out[o..o + channels]);
            }
        }
    }
    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    out
}

/// Crops each frame to the camera window and resamples it to `out_h x out_w`.
pub fn apply_ken_burns(video: &VideoTensor, path: &CameraPath, out_h: usize, out_w: usize) -> Result<VideoTensor> {
    check_path(path, video.frames(), video.height(), video.width())?;
    let data = crop_resample(video.data(), path, CHANNELS, out_h, out_w);
    VideoTensor::new(video.frames(), out_h, out_w, data)
}

/// Mask counterpart of [`apply_ken_burns`]; values are resampled, not binarized.
pub fn apply_ken_burns_mask(mask: &MaskVideo, path: &CameraPath, out_h: usize, out_w: usize) -> Result<MaskVideo> {
    check_path(path, mask.frames(), mask.height(), mask.width())?;
    let data = crop_resample(mask.data(), path, 1, out_h, out_w);
    MaskVideo::new(mask.frames(), out_h, out_w, data)
}

/// Applies one camera path to a whole triplet.
///
/// The mask is binarized at 0.5. The footprint becomes every output pixel
/// whose bilinear taps touch the source mask or footprint, so pixels outside
/// both stay bit-identical between the two videos.
pub fn ken_burns_triplet(sample: &TripletSample, path: &CameraPath, out_h: usize, out_w: usize) -> Result<TripletSample> {
    let object_video = apply_ken_burns(&sample.object_video, path, out_h, out_w)?;
    let background_video = apply_ken_burns(&sample.background_video, path, out_h, out_w)?;
    let mask = apply_ken_burns_mask(&sample.mask, path, out_h, out_w)?.binarized();
    let affected: Vec<f64> = sample
        .mask
        .data()
        .iter()
        .zip(sample.effect_footprint.data())
        .map(|(&m, &e)| if m > 0.0 || e > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let affected = MaskVideo::new(sample.mask.frames(), sample.mask.height(), sample.mask.width(), affected)?;
    let spread = apply_ken_burns_mask(&affected, path, out_h, out_w)?;
    let footprint: Vec<f64> = spread.data().iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
    let effect_footprint = MaskVideo::new(sample.mask.frames(), out_h, out_w, footprint)?;
    let mut meta = sample.meta.clone();
    if let Some(rule) = path.rule {
        meta.motion_rules = vec![rule.id()];
    }
    Ok(TripletSample { object_video, background_video, mask, effect_footprint, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn rule_ids_round_trip() {
        for (i, r) in MotionRule::ALL.iter().enumerate() {
            assert_eq!(r.id() as usize, i + 1);
            assert_eq!(MotionRule::from_id(r.id()), Some(*r));
        }
        assert_eq!(MotionRule::from_id(0), None);
        assert_eq!(MotionRule::from_id(15), None);
    }

    #[test]
    fn zoom_in_is_strictly_increasing() {
        let p = camera_path(MotionRule::ZoomIn, 10, 32, 48, &mut seeded(3), &MotionBounds::default()).unwrap();
        assert!(p.states.windows(2).all(|w| w[1].zoom > w[0].zoom));
        assert!(p.first_violation().is_none());
    }

    #[test]
    fn pan_left_moves_left_only() {
        let p = camera_path(MotionRule::PanLeft, 10, 32, 48, &mut seeded(4), &MotionBounds::default()).unwrap();
        assert!(p.states.windows(2).all(|w| w[1].center_x < w[0].center_x));
        assert!(p.states.iter().all(|s| s.center_y == p.states[0].center_y));
    }

    #[test]
    fn identity_path_returns_input() {
        let v = VideoTensor::from_fn(3, 12, 16, |t, y, x| [(t * 3 + y) as f64 / 50.0, x as f64 / 16.0, 0.25]).unwrap();
        let p = CameraPath::identity(3, 12, 16);
        let out = apply_ken_burns(&v, &p, 12, 16).unwrap();
        for (a, b) in out.data().iter().zip(v.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn constant_video_any_path() {
        let v = VideoTensor::filled(6, 16, 24, 0.3).unwrap();
        let p = camera_path(MotionRule::RandomCombo, 6, 16, 24, &mut seeded(9), &MotionBounds::default()).unwrap();
        let out = apply_ken_burns(&v, &p, 10, 12).unwrap();
        assert!(out.data().iter().all(|&x| (x - 0.3).abs() < 1e-12));
    }

    #[test]
    fn zoom_two_checkerboard_hand_values() {
        // 8x8 checkerboard of 2x2 blocks; the zoom-2 window spans source [2, 6).
        let v = VideoTensor::from_fn(1, 8, 8, |_, y, x| {
            let c = ((y / 2 + x / 2) % 2) as f64;
            [c, c, c]
        })
        .unwrap();
        let mut p = CameraPath::identity(1, 8, 8);
        p.states[0].zoom = 2.0;
        let out = apply_ken_burns(&v, &p, 8, 8).unwrap();
        // Output (0,0) samples source (1.75, 1.75): taps (1,1)=0 (1,2)=1 (2,1)=1 (2,2)=0
        // with weights 0.25/0.75 on each axis -> 0.25*0.75 + 0.75*0.25 = 0.375.
        assert!((out.get(0, 0, 0, 0) - 0.375).abs() < 1e-12);
        // Output (0,1) samples (1.75, 2.25): top row 1.0, bottom row 0.0 -> 0.25.
        assert!((out.get(0, 0, 1, 0) - 0.25).abs() < 1e-12);
        // Output (2,2) samples (2.75, 2.75): all taps in block (1,1) -> 0.0.
        assert_eq!(out.get(0, 2, 2, 0), 0.0);
        // Output (2,4) samples (2.75, 3.75): taps x=3 (0, weight 0.25) and x=4 (1, weight 0.75).
        assert!((out.get(0, 2, 4, 0) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn containment_violation_is_an_error() {
        let v = VideoTensor::filled(1, 8, 8, 0.5).unwrap();
        let mut p = CameraPath::identity(1, 8, 8);
        p.states[0].center_x = 3.0;
        assert_eq!(apply_ken_burns(&v, &p, 8, 8), Err(Error::Containment { frame: 0 }));
    }

    #[test]
    fn sampled_rules_are_distinct_and_deterministic() {
        let a = sample_motion_rules(&mut seeded(5));
        let b = sample_motion_rules(&mut seeded(5));
        assert_eq!(a, b);
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(a[i], a[j]);
            }
        }
    }

    #[test]
    fn too_few_frames_is_rejected() {
        assert!(camera_path(MotionRule::ZoomIn, 1, 8, 8, &mut seeded(0), &MotionBounds::default()).is_err());
    }
}
