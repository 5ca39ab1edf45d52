//! Synthetic dataset generation and loading.
//!
//! Every scene enumerates its multi-object pair configurations; each
//! configuration is written once with a static camera (`camera_id` 0) and once
//! per sampled Ken Burns rule (`camera_id` 1..). Seeds: scene `i` uses
//! `derive_seed(seed, i)`; its rule draw uses `derive_seed(scene_seed, 0)` and
//! camera `k` uses `derive_seed(scene_seed, k)`.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use effecterase_core::rng::{derive_seed, seeded};
use effecterase_core::synth::{
    camera_path, enumerate_pairs, ken_burns_triplet, render_triplet, sample_motion_rules, CameraPath, MotionBounds,
    SceneRanges, SceneSpec, SAMPLED_RULES_PER_CLIP,
};
use effecterase_core::TripletSample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::triplet::{read_valid_triplet, write_triplet};

pub const INDEX_FILE: &str = "index.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub scenes: usize,
    /// Objects per scene; each scene yields `(3^n - 2^n)` pair configurations.
    pub objects: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Ken Burns variants per configuration, in addition to the static camera.
    pub camera_variants: usize,
    pub seed: u64,
    pub object_size: (f64, f64),
    pub effect_probability: f64,
    pub dynamic_background_probability: f64,
    pub motion: MotionBounds,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let ranges = SceneRanges::default();
        Self {
            scenes: 4,
            objects: 2,
            frames: 8,
            height: 32,
            width: 48,
            camera_variants: SAMPLED_RULES_PER_CLIP,
            seed: 0,
            object_size: ranges.object_size,
            effect_probability: ranges.effect_probability,
            dynamic_background_probability: ranges.dynamic_background_probability,
            motion: MotionBounds::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LabError::config(format!("synth: {m}")));
        if self.scenes == 0 || self.objects == 0 {
            return bad("scenes and objects must be at least 1");
        }
        if self.objects > 6 {
            return bad("objects above 6 explode the pair count");
        }
        if self.frames == 0 || self.height < 8 || self.width < 8 {
            return bad("frames >= 1 and sides >= 8 required");
        }
        if self.camera_variants > SAMPLED_RULES_PER_CLIP {
            return bad("camera_variants exceeds the number of sampled motion rules");
        }
        if self.camera_variants > 0 && self.frames < 2 {
            return bad("camera motion needs at least two frames");
        }
        let p = |v: f64| (0.0..=1.0).contains(&v);
        if !p(self.effect_probability) || !p(self.dynamic_background_probability) {
            return bad("probabilities must lie in [0, 1]");
        }
        if !(self.object_size.0 > 0.0 && self.object_size.0 <= self.object_size.1 && self.object_size.1 < 0.5) {
            return bad("object_size must satisfy 0 < lo <= hi < 0.5");
        }
        Ok(())
    }

    pub fn ranges(&self) -> SceneRanges {
        SceneRanges {
            object_size: self.object_size,
            effect_probability: self.effect_probability,
            dynamic_background_probability: self.dynamic_background_probability,
        }
    }

    pub fn samples_per_scene(&self) -> usize {
        effecterase_core::synth::pair_count(self.objects, 1 + self.camera_variants)
    }
}

/// One line of `index.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub id: String,
    pub scene: usize,
    pub scene_seed: u64,
    pub camera_id: usize,
    pub motion_rules: Vec<u8>,
    pub effect_kinds: Vec<String>,
    /// Removed objects, as indices into the scene.
    pub removal_set: Vec<usize>,
    /// Objects rendered in the object video.
    pub present: Vec<usize>,
}

pub fn sample_id(scene: usize, config: usize, camera: usize) -> String {
    format!("s{scene:04}-p{config:03}-c{camera}")
}

fn ensure_empty_dir(out: &Path) -> Result<()> {
    if out.exists() {
        let mut entries = fs::read_dir(out).map_err(|e| LabError::io(out, e))?;
        if entries.next().is_some() {
            return Err(LabError::data(format!("{}: output directory is not empty", out.display())));
        }
    }
    fs::create_dir_all(out).map_err(|e| LabError::io(out, e))
}

struct SceneJob {
    scene: usize,
    spec: SceneSpec,
    paths: Vec<CameraPath>,
}

fn plan_scene(cfg: &SynthConfig, scene: usize) -> Result<SceneJob> {
    let scene_seed = derive_seed(cfg.seed, scene as u64);
    let spec = SceneSpec::random(scene_seed, cfg.frames, cfg.height, cfg.width, cfg.objects, &cfg.ranges())?;
    let rules = sample_motion_rules(&mut seeded(derive_seed(scene_seed, 0)));
    let paths = rules[..cfg.camera_variants]
        .iter()
        .enumerate()
        .map(|(k, &rule)| {
            let mut rng = seeded(derive_seed(scene_seed, k as u64 + 1));
            camera_path(rule, cfg.frames, cfg.height, cfg.width, &mut rng, &cfg.motion)
        })
        .collect::<effecterase_core::Result<_>>()?;
    Ok(SceneJob { scene, spec, paths })
}

/// Renders one pair configuration under every camera.
fn render_configuration(
    cfg: &SynthConfig,
    job: &SceneJob,
    config_index: usize,
    present: &[usize],
    removed: &[usize],
) -> Result<Vec<(IndexRecord, TripletSample)>> {
    let subset = job.spec.subset(present);
    let local: Vec<usize> = removed.iter().map(|r| present.iter().position(|p| p == r).expect("removed objects are present")).collect();
    let mut base = render_triplet(&subset, &local)?;
    base.meta.removal_set = removed.to_vec();
    let mut out = Vec::with_capacity(1 + job.paths.len());
    for camera in 0..=job.paths.len() {
        let mut sample = if camera == 0 {
            base.clone()
        } else {
            ken_burns_triplet(&base, &job.paths[camera - 1], cfg.height, cfg.width)?
        };
        sample.meta.camera_id = camera;
        sample.meta.removal_set = removed.to_vec();
        let record = IndexRecord {
            id: sample_id(job.scene, config_index, camera),
            scene: job.scene,
            scene_seed: job.spec.seed,
            camera_id: camera,
            motion_rules: sample.meta.motion_rules.clone(),
            effect_kinds: sample.meta.effect_kinds.clone(),
            removal_set: removed.to_vec(),
            present: present.to_vec(),
        };
        out.push((record, sample));
    }
    Ok(out)
}

/// Writes every triplet under `out/<id>/` and the index; returns the index records.
pub fn synth_dataset(cfg: &SynthConfig, out: &Path) -> Result<Vec<IndexRecord>> {
    cfg.validate()?;
    ensure_empty_dir(out)?;
    let jobs: Vec<SceneJob> = (0..cfg.scenes).map(|s| plan_scene(cfg, s)).collect::<Result<_>>()?;
    // Object states are independent of the camera; enumerate with m = 1.
    let configs = enumerate_pairs(cfg.objects, 1)?;
    let units: Vec<(usize, usize)> = (0..jobs.len()).flat_map(|j| (0..configs.len()).map(move |c| (j, c))).collect();
    let records: Vec<Vec<IndexRecord>> = units
        .par_iter()
        .map(|&(j, c)| {
            let pair = &configs[c];
            let rendered = render_configuration(cfg, &jobs[j], c, &pair.present(), &pair.removal_set())?;
            rendered
                .into_iter()
                .map(|(record, sample)| {
                    write_triplet(&sample, &out.join(&record.id))?;
                    Ok(record)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let records: Vec<IndexRecord> = records.into_iter().flatten().collect();
    let mut text = String::new();
    for r in &records {
        text.push_str(&serde_json::to_string(r).expect("index record serializes"));
        text.push('\n');
    }
    let path = out.join(INDEX_FILE);
    fs::write(&path, text).map_err(|e| LabError::io(&path, e))?;
    log::info!("wrote {} triplets from {} scenes to {}", records.len(), cfg.scenes, out.display());
    Ok(records)
}

pub fn read_index(dir: &Path) -> Result<Vec<IndexRecord>> {
    let path = dir.join(INDEX_FILE);
    let file = fs::File::open(&path).map_err(|e| LabError::io(&path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LabError::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| LabError::data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(record);
    }
    Ok(out)
}

/// Sample directories of a dataset: the index order when an index exists,
/// otherwise every subdirectory sorted by name.
pub fn sample_dirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    if dir.join(INDEX_FILE).is_file() {
        return Ok(read_index(dir)?.into_iter().map(|r| (r.id.clone(), dir.join(r.id))).collect());
    }
    list_subdirs(dir)
}

pub fn list_subdirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| LabError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| LabError::io(dir, e))?;
        if entry.path().is_dir() {
            out.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

/// Loads and validates every triplet, in dataset order. Reads run in parallel.
pub fn load_dataset(dir: &Path) -> Result<Vec<(String, TripletSample)>> {
    let dirs = sample_dirs(dir)?;
    if dirs.is_empty() {
        return Err(LabError::data(format!("{}: dataset has no samples", dir.display())));
    }
    dirs.par_iter().map(|(id, path)| Ok((id.clone(), read_valid_triplet(path)?))).collect()
}
