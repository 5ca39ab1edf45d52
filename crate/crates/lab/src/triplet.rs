//! `<id>/{object,background,mask,footprint}/` plus `<id>/meta.json`.

use std::fs;
use std::path::Path;

use effecterase_core::video::{validate_triplet, TripletMeta};
use effecterase_core::TripletSample;

use crate::error::{LabError, Result};
use crate::frames::{read_mask_dir, read_video_dir, write_mask_dir, write_video_dir};

pub const OBJECT_DIR: &str = "object";
pub const BACKGROUND_DIR: &str = "background";
pub const MASK_DIR: &str = "mask";
pub const FOOTPRINT_DIR: &str = "footprint";
pub const META_FILE: &str = "meta.json";

pub fn write_triplet(sample: &TripletSample, dir: &Path) -> Result<()> {
    write_video_dir(&sample.object_video, &dir.join(OBJECT_DIR))?;
    write_video_dir(&sample.background_video, &dir.join(BACKGROUND_DIR))?;
    write_mask_dir(&sample.mask, &dir.join(MASK_DIR))?;
    write_mask_dir(&sample.effect_footprint, &dir.join(FOOTPRINT_DIR))?;
    let path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(&sample.meta).expect("meta serializes");
    fs::write(&path, json + "\n").map_err(|e| LabError::io(&path, e))
}

/// Reads a triplet; a missing `footprint/` (real captures) yields an empty footprint.
pub fn read_triplet(dir: &Path) -> Result<TripletSample> {
    let object_video = read_video_dir(&dir.join(OBJECT_DIR))?;
    let background_video = read_video_dir(&dir.join(BACKGROUND_DIR))?;
    let mask = read_mask_dir(&dir.join(MASK_DIR))?;
    let effect_footprint = if dir.join(FOOTPRINT_DIR).is_dir() {
        read_mask_dir(&dir.join(FOOTPRINT_DIR))?
    } else {
        effecterase_core::MaskVideo::zeros(mask.frames(), mask.height(), mask.width())?
    };
    let path = dir.join(META_FILE);
    let meta: TripletMeta = if path.is_file() {
        let text = fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| LabError::data(format!("{}: {e}", path.display())))?
    } else {
        TripletMeta::default()
    };
    Ok(TripletSample { object_video, background_video, mask, effect_footprint, meta })
}

/// Like [`read_triplet`] but rejects samples that break the triplet invariants.
pub fn read_valid_triplet(dir: &Path) -> Result<TripletSample> {
    let sample = read_triplet(dir)?;
    let violations = validate_triplet(&sample);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(LabError::data(format!("{}: invalid triplet: {}", dir.display(), list.join("; "))));
    }
    Ok(sample)
}
