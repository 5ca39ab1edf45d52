//! Procedural scenes with analytic object effects.
//!
//! Every effect is a closed-form function of pixel position and object
//! position, so its footprint (the set of pixels it can change) is exact.
//! Rendering order per pixel: background (sampled through the deformation
//! warp of present objects) -> lighting -> shadow -> reflection -> occlusion.
//! Effects are pointwise after the warp, which is what makes pixels outside a
//! removed object's silhouette and footprint bit-identical between the two
//! renders of a triplet.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::video::{MaskVideo, TripletMeta, TripletSample, VideoTensor, CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Shape {
    Disc { radius: f64 },
    Rectangle { half_width: f64, half_height: f64 },
}

impl Shape {
    pub fn contains(&self, dx: f64, dy: f64) -> bool {
        match *self {
            Shape::Disc { radius } => dx * dx + dy * dy <= radius * radius,
            Shape::Rectangle { half_width, half_height } => dx.abs() <= half_width && dy.abs() <= half_height,
        }
    }

    /// Half extents along x and y.
    pub fn extent(&self) -> (f64, f64) {
        match *self {
            Shape::Disc { radius } => (radius, radius),
            Shape::Rectangle { half_width, half_height } => (half_width, half_height),
        }
    }
}

/// Object center over time, in pixel coordinates (pixel centers at `i + 0.5`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Trajectory {
    Linear { start: [f64; 2], velocity: [f64; 2] },
    Circular { center: [f64; 2], radius: f64, angular_speed: f64, phase: f64 },
}

impl Trajectory {
    pub fn position(&self, t: usize) -> (f64, f64) {
        let t = t as f64;
        match *self {
            Trajectory::Linear { start, velocity } => (start[0] + velocity[0] * t, start[1] + velocity[1] * t),
            Trajectory::Circular { center, radius, angular_speed, phase } => {
                let a = phase + angular_speed * t;
                (center[0] + radius * math::cos(a), center[1] + radius * math::sin(a))
            }
        }
    }
}

/// How the object body itself is composited.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Occlusion {
    Opaque,
    /// Alpha blend of the object color, `alpha` in (0, 1).
    Semitransparent { alpha: f64 },
    /// Brightness/tint modulation of what is behind the object.
    Transparent { gain: f64, tint: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EffectSpec {
    /// Darkening by `darkening` (multiplicative, in [0.4, 0.8]) inside an
    /// ellipse offset from the object, with a Gaussian edge cut at 3 sigma.
    Shadow { offset: [f64; 2], radii: [f64; 2], darkening: f64, softness: f64 },
    /// Additive radial gain `gain * (1 - r/radius)^2`, `gain <= 0.3`.
    Lighting { gain: f64, radius: f64 },
    /// Vertically mirrored silhouette blended below `surface_row`, `alpha` in [0.2, 0.5].
    Reflection { surface_row: f64, alpha: f64 },
    /// Radial warp of background coordinates, peak displacement `amplitude <= 3` px.
    Deformation { radius: f64, amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    OcclusionOpaque,
    OcclusionSemitransparent,
    OcclusionTransparent,
    Shadow,
    Lighting,
    Reflection,
    Deformation,
}

impl EffectKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EffectKind::OcclusionOpaque => "occlusion_opaque",
            EffectKind::OcclusionSemitransparent => "occlusion_semitransparent",
            EffectKind::OcclusionTransparent => "occlusion_transparent",
            EffectKind::Shadow => "shadow",
            EffectKind::Lighting => "lighting",
            EffectKind::Reflection => "reflection",
            EffectKind::Deformation => "deformation",
        }
    }
}

impl EffectSpec {
    pub fn kind(&self) -> EffectKind {
        match self {
            EffectSpec::Shadow { .. } => EffectKind::Shadow,
            EffectSpec::Lighting { .. } => EffectKind::Lighting,
            EffectSpec::Reflection { .. } => EffectKind::Reflection,
            EffectSpec::Deformation { .. } => EffectKind::Deformation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            EffectSpec::Shadow { radii, darkening, softness, .. } => {
                (0.4..=0.8).contains(&darkening) && softness > 0.0 && radii[0] > 0.0 && radii[1] > 0.0
            }
            EffectSpec::Lighting { gain, radius } => gain > 0.0 && gain <= 0.3 && radius > 0.0,
            EffectSpec::Reflection { alpha, .. } => (0.2..=0.5).contains(&alpha),
            EffectSpec::Deformation { radius, amplitude } => radius > 0.0 && amplitude > 0.0 && amplitude <= 3.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(alloc::format!("effect parameters out of range: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub color: [f64; 3],
    pub trajectory: Trajectory,
    pub occlusion: Occlusion,
    pub effects: Vec<EffectSpec>,
}

impl ObjectSpec {
    pub fn effect_kinds(&self) -> Vec<EffectKind> {
        let body = match self.occlusion {
            Occlusion::Opaque => EffectKind::OcclusionOpaque,
            Occlusion::Semitransparent { .. } => EffectKind::OcclusionSemitransparent,
            Occlusion::Transparent { .. } => EffectKind::OcclusionTransparent,
        };
        let mut kinds = vec![body];
        kinds.extend(self.effects.iter().map(|e| e.kind()));
        kinds
    }

    pub fn silhouette_contains(&self, t: usize, px: f64, py: f64) -> bool {
        let (cx, cy) = self.trajectory.position(t);
        self.shape.contains(px - cx, py - cy)
    }
}

/// Smooth gradient plus a sinusoidal texture whose phase may drift over time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub base: [f64; 3],
    pub gradient: [f64; 3],
    pub gradient_angle: f64,
    pub texture_amplitude: f64,
    pub texture_frequency: [f64; 2],
    pub texture_tint: [f64; 3],
    pub texture_phase: f64,
    /// Phase advance per frame; zero for a static background.
    pub drift: f64,
}

impl Background {
    /// Color at continuous pixel position `(px, py)` in a `height x width` frame.
    pub fn color(&self, t: usize, px: f64, py: f64, height: usize, width: usize) -> [f64; 3] {
        let u = px / width as f64;
        let v = py / height as f64;
        let g = u * math::cos(self.gradient_angle) + v * math::sin(self.gradient_angle);
        let phase = 2.0
            * math::PI
            * (self.texture_frequency[0] * u + self.texture_frequency[1] * v)
            + self.texture_phase
            + self.drift * t as f64;
        let tex = self.texture_amplitude * math::sin(phase);
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = (self.base[c] + self.gradient[c] * g + tex * self.texture_tint[c]).clamp(0.0, 1.0);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub background: Background,
    pub objects: Vec<ObjectSpec>,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

/// Ranges used by [`SceneSpec::random`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneRanges {
    /// Object half extent as a fraction of the shorter frame side.
    pub object_size: (f64, f64),
    /// Probability that each non-occlusion effect is attached to an object.
    pub effect_probability: f64,
    pub dynamic_background_probability: f64,
}

impl Default for SceneRanges {
    fn default() -> Self {
        Self { object_size: (0.08, 0.16), effect_probability: 0.5, dynamic_background_probability: 0.5 }
    }
}

impl SceneSpec {
    /// Draws a scene whose object trajectories stay inside the frame.
    pub fn random(
        seed: u64,
        frames: usize,
        height: usize,
        width: usize,
        objects: usize,
        ranges: &SceneRanges,
    ) -> Result<Self> {
        if frames == 0 || height < 8 || width < 8 {
            return Err(Error::InvalidArgument("scene needs frames >= 1 and sides >= 8".into()));
        }
        let mut rng = crate::rng::seeded(seed);
        let dynamic = rng.random_bool(ranges.dynamic_background_probability);
        let mut base = [0.0; 3];
        let mut gradient = [0.0; 3];
        let mut tint = [0.0; 3];
        for c in 0..3 {
            base[c] = rng.random_range(0.3..0.7);
            gradient[c] = rng.random_range(-0.15..0.15);
            tint[c] = rng.random_range(0.5..1.0);
        }
        let background = Background {
            base,
            gradient,
            gradient_angle: rng.random_range(0.0..2.0 * math::PI),
            texture_amplitude: rng.random_range(0.03..0.1),
            texture_frequency: [rng.random_range(0.5..3.0), rng.random_range(0.5..3.0)],
            texture_tint: tint,
            texture_phase: rng.random_range(0.0..2.0 * math::PI),
            drift: if dynamic { rng.random_range(0.1..0.4) } else { 0.0 },
        };
        let side = height.min(width) as f64;
        let objects = (0..objects)
            .map(|_| random_object(&mut rng, frames, height, width, side, ranges))
            .collect();
        Ok(Self { background, objects, frames, height, width, seed })
    }

    pub fn validate(&self) -> Result<()> {
        for (i, o) in self.objects.iter().enumerate() {
            for e in &o.effects {
                e.validate()?;
            }
            for t in 0..self.frames {
                let (x, y) = o.trajectory.position(t);
                if !(0.0..=self.width as f64).contains(&x) || !(0.0..=self.height as f64).contains(&y) {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "object {i} center leaves the frame at t={t}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> SceneSpec {
        SceneSpec { objects: indices.iter().map(|&i| self.objects[i].clone()).collect(), ..self.clone() }
    }
}

fn random_object(
    rng: &mut impl Rng,
    frames: usize,
    height: usize,
    width: usize,
    side: f64,
    ranges: &SceneRanges,
) -> ObjectSpec {
    let size = (rng.random_range(ranges.object_size.0..ranges.object_size.1) * side).max(1.5);
    let shape = if rng.random_bool(0.5) {
        Shape::Disc { radius: size }
    } else {
        Shape::Rectangle { half_width: size * rng.random_range(0.6..1.4), half_height: size * rng.random_range(0.6..1.4) }
    };
    let (ex, ey) = shape.extent();
    let (w, h) = (width as f64, height as f64);
    let margin_x = (ex + 1.0).min(w / 2.0 - 1.0);
    let margin_y = (ey + 1.0).min(h / 2.0 - 1.0);
    let span = |rng: &mut dyn rand::RngCore, lo: f64, hi: f64| if hi > lo { rng.random_range(lo..hi) } else { (lo + hi) / 2.0 };
    let trajectory = if rng.random_bool(0.6) || frames < 2 {
        let start = [span(rng, margin_x, w - margin_x), span(rng, margin_y, h - margin_y)];
        let end = [span(rng, margin_x, w - margin_x), span(rng, margin_y, h - margin_y)];
        let steps = (frames.max(2) - 1) as f64;
        Trajectory::Linear { start, velocity: [(end[0] - start[0]) / steps, (end[1] - start[1]) / steps] }
    } else {
        let center = [span(rng, w * 0.35, w * 0.65), span(rng, h * 0.35, h * 0.65)];
        let room = (center[0] - margin_x).min(w - margin_x - center[0]).min(center[1] - margin_y).min(h - margin_y - center[1]);
        Trajectory::Circular {
            center,
            radius: room.max(0.0) * rng.random_range(0.3..0.9),
            angular_speed: rng.random_range(0.05..0.3) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            phase: rng.random_range(0.0..2.0 * math::PI),
        }
    };
    let color = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
    let occlusion = match rng.random_range(0..4) {
        0 | 1 => Occlusion::Opaque,
        2 => Occlusion::Semitransparent { alpha: rng.random_range(0.4..0.8) },
        _ => Occlusion::Transparent {
            gain: rng.random_range(-0.2..0.2),
            tint: [rng.random_range(0.7..1.0), rng.random_range(0.7..1.0), rng.random_range(0.7..1.0)],
        },
    };
    let mut effects = Vec::new();
    let p = ranges.effect_probability;
    if rng.random_bool(p) {
        effects.push(EffectSpec::Lighting { gain: rng.random_range(0.08..0.3), radius: (ex.max(ey)) * rng.random_range(1.8..3.0) });
    }
    if rng.random_bool(p) {
        effects.push(EffectSpec::Shadow {
            offset: [ex * rng.random_range(0.3..0.8), ey * rng.random_range(0.9..1.3)],
            radii: [ex * rng.random_range(1.0..1.3), ey * rng.random_range(0.4..0.6)],
            darkening: rng.random_range(0.4..0.8),
            softness: rng.random_range(0.5..1.5),
        });
    }
    if rng.random_bool(p) {
        effects.push(EffectSpec::Reflection { surface_row: h * rng.random_range(0.55..0.85), alpha: rng.random_range(0.2..0.5) });
    }
    if rng.random_bool(p) {
        effects.push(EffectSpec::Deformation { radius: ex.max(ey) * rng.random_range(1.3..2.0), amplitude: rng.random_range(1.0..3.0) });
    }
    if effects.is_empty() {
        effects.push(EffectSpec::Shadow {
            offset: [ex * 0.5, ey * 1.1],
            radii: [ex * 1.1, ey * 0.5],
            darkening: 0.6,
            softness: 1.0,
        });
    }
    ObjectSpec { shape, color, trajectory, occlusion, effects }
}

/// Weight of a shadow at pixel offset `(dx, dy)` from the ellipse center.
fn shadow_weight(dx: f64, dy: f64, radii: [f64; 2], softness: f64) -> f64 {
    let rho = math::sqrt((dx / radii[0]) * (dx / radii[0]) + (dy / radii[1]) * (dy / radii[1]));
    if rho <= 1.0 {
        return 1.0;
    }
    let d = (rho - 1.0) * radii[0].min(radii[1]);
    if d >= 3.0 * softness {
        0.0
    } else {
        math::exp(-d * d / (2.0 * softness * softness))
    }
}

fn lighting_weight(r: f64, radius: f64) -> f64 {
    if r < radius {
        let u = 1.0 - r / radius;
        u * u
    } else {
        0.0
    }
}

/// Radial displacement (toward the pixel) sampled inward so the region bulges.
fn deformation_offset(dx: f64, dy: f64, radius: f64, amplitude: f64) -> Option<(f64, f64)> {
    let r = math::sqrt(dx * dx + dy * dy);
    if r <= 0.0 || r >= radius {
        return None;
    }
    let mag = amplitude * math::sin(math::PI * r / radius);
    Some((mag * dx / r, mag * dy / r))
}

/// Per-object effect weights at one pixel; all zero outside the footprint.
#[derive(Debug, Default, Clone, Copy)]
struct EffectWeights {
    lighting: f64,
    shadow: f64,
    reflection: bool,
    deformation: Option<(f64, f64)>,
}

fn effect_weights(obj: &ObjectSpec, t: usize, px: f64, py: f64) -> EffectWeights {
    let (cx, cy) = obj.trajectory.position(t);
    let mut w = EffectWeights::default();
    for e in &obj.effects {
        match *e {
            EffectSpec::Lighting { radius, .. } => {
                let r = math::sqrt((px - cx) * (px - cx) + (py - cy) * (py - cy));
                w.lighting = lighting_weight(r, radius);
            }
            EffectSpec::Shadow { offset, radii, softness, .. } => {
                w.shadow = shadow_weight(px - cx - offset[0], py - cy - offset[1], radii, softness);
            }
            EffectSpec::Reflection { surface_row, .. } => {
                if py > surface_row {
                    let mirrored = 2.0 * surface_row - py;
                    w.reflection = obj.shape.contains(px - cx, mirrored - cy);
                }
            }
            EffectSpec::Deformation { radius, amplitude } => {
                w.deformation = deformation_offset(px - cx, py - cy, radius, amplitude);
            }
        }
    }
    w
}

impl EffectWeights {
    fn any(&self) -> bool {
        self.lighting > 0.0 || self.shadow > 0.0 || self.reflection || self.deformation.is_some()
    }
}

/// Renders the background with the objects at `present` (indices into
/// `spec.objects`) and all of their effects.
pub fn render_scene(spec: &SceneSpec, present: &[usize]) -> Result<VideoTensor> {
    if let Some(&i) = present.iter().find(|&&i| i >= spec.objects.len()) {
        return Err(Error::InvalidArgument(alloc::format!("object index {i} out of range")));
    }
    let objs: Vec<&ObjectSpec> = spec.objects.iter().enumerate().filter(|(i, _)| present.contains(i)).map(|(_, o)| o).collect();
    let (h, w) = (spec.height, spec.width);
    let mut data = Vec::with_capacity(spec.frames * h * w * CHANNELS);
    let mut weights = vec![EffectWeights::default(); objs.len()];
    for t in 0..spec.frames {
        for y in 0..h {
            for x in 0..w {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                for (wt, o) in weights.iter_mut().zip(&objs) {
                    *wt = effect_weights(o, t, px, py);
                }
                let (mut qx, mut qy) = (px, py);
                for wt in &weights {
                    if let Some((dx, dy)) = wt.deformation {
                        qx -= dx;
                        qy -= dy;
                    }
                }
                let mut c = spec.background.color(t, qx, qy, h, w);
                for (wt, o) in weights.iter().zip(&objs) {
                    if wt.lighting > 0.0 {
                        let gain = o.effects.iter().find_map(|e| match e {
                            EffectSpec::Lighting { gain, .. } => Some(*gain),
                            _ => None,
                        });
                        let g = gain.unwrap_or(0.0) * wt.lighting;
                        for v in &mut c {
                            *v = (*v + g).min(1.0);
                        }
                    }
                }
                for (wt, o) in weights.iter().zip(&objs) {
                    if wt.shadow > 0.0 {
                        let s = o.effects.iter().find_map(|e| match e {
                            EffectSpec::Shadow { darkening, .. } => Some(*darkening),
                            _ => None,
                        });
                        let k = 1.0 - (1.0 - s.unwrap_or(1.0)) * wt.shadow;
                        for v in &mut c {
                            *v *= k;
                        }
                    }
                }
                for (wt, o) in weights.iter().zip(&objs) {
                    if wt.reflection {
                        let a = o.effects.iter().find_map(|e| match e {
                            EffectSpec::Reflection { alpha, .. } => Some(*alpha),
                            _ => None,
                        });
                        let a = a.unwrap_or(0.0);
                        for (v, oc) in c.iter_mut().zip(o.color) {
                            *v = (1.0 - a) * *v + a * oc;
                        }
                    }
                }
                for o in &objs {
                    if o.silhouette_contains(t, px, py) {
                        match o.occlusion {
                            Occlusion::Opaque => c = o.color,
                            Occlusion::Semitransparent { alpha } => {
                                for (v, oc) in c.iter_mut().zip(o.color) {
                                    *v = (1.0 - alpha) * *v + alpha * oc;
                                }
                            }
                            Occlusion::Transparent { gain, tint } => {
                                for (v, k) in c.iter_mut().zip(tint) {
                                    *v = (*v * k * (1.0 + gain)).clamp(0.0, 1.0);
                                }
                            }
                        }
                    }
                }
                data.extend_from_slice(&c);
            }
        }
    }
    VideoTensor::new(spec.frames, h, w, data)
}

/// Union of the silhouettes of `objects`.
pub fn silhouette_mask(spec: &SceneSpec, objects: &[usize]) -> Result<MaskVideo> {
    MaskVideo::from_fn(spec.frames, spec.height, spec.width, |t, y, x| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let hit = objects.iter().any(|&i| spec.objects[i].silhouette_contains(t, px, py));
        if hit {
            1.0
        } else {
            0.0
        }
    })
}

/// Union of the effect regions of `objects` (silhouettes excluded unless an
/// effect also covers them).
pub fn effect_footprint(spec: &SceneSpec, objects: &[usize]) -> Result<MaskVideo> {
    MaskVideo::from_fn(spec.frames, spec.height, spec.width, |t, y, x| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let hit = objects.iter().any(|&i| effect_weights(&spec.objects[i], t, px, py).any());
        if hit {
            1.0
        } else {
            0.0
        }
    })
}

/// Renders `(V^o, V^b, M, footprint)` for removing `removal_set` from the full scene.
pub fn render_triplet(spec: &SceneSpec, removal_set: &[usize]) -> Result<TripletSample> {
    if removal_set.is_empty() {
        return Err(Error::EmptyRemovalSet);
    }
    if let Some(&i) = removal_set.iter().find(|&&i| i >= spec.objects.len()) {
        return Err(Error::InvalidArgument(alloc::format!("object index {i} out of range")));
    }
    let all: Vec<usize> = (0..spec.objects.len()).collect();
    let kept: Vec<usize> = all.iter().copied().filter(|i| !removal_set.contains(i)).collect();
    let object_video = render_scene(spec, &all)?;
    let background_video = render_scene(spec, &kept)?;
    let mask = silhouette_mask(spec, removal_set)?;
    let effect_footprint = effect_footprint(spec, removal_set)?;
    let mut kinds: Vec<EffectKind> = removal_set.iter().flat_map(|&i| spec.objects[i].effect_kinds()).collect();
    kinds.sort();
    kinds.dedup();
    let mut removal: Vec<usize> = removal_set.to_vec();
    removal.sort_unstable();
    Ok(TripletSample {
        object_video,
        background_video,
        mask,
        effect_footprint,
        meta: TripletMeta {
            seed: spec.seed,
            effect_kinds: kinds.iter().map(|k| String::from(k.as_str())).collect(),
            motion_rules: Vec::new(),
            removal_set: removal,
            camera_id: 0,
        },
    })
}
