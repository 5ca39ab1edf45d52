//! Procedural paired-video synthesis: scenes with object effects, multi-object
//! pair enumeration, and simulated camera motion.

mod camera;
mod pairs;
mod scene;

pub use camera::{
    apply_ken_burns, apply_ken_burns_mask, camera_path, ken_burns_triplet, sample_motion_rules, Axis, BobParams,
    CameraPath, CameraState, MotionBounds, MotionRule, PathSegment, Primitive, MOTION_RULE_COUNT,
    SAMPLED_RULES_PER_CLIP,
};
pub use pairs::{enumerate_pairs, pair_count, ObjectState, PairConfig};
pub use scene::{
    effect_footprint, render_scene, render_triplet, silhouette_mask, Background, EffectKind, EffectSpec, ObjectSpec,
    Occlusion, SceneRanges, SceneSpec, Shape, Trajectory,
};
