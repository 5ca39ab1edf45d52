//! Pairs predicted and reference videos by sample id and computes the metric suite.
//!
//! Report fields: `count`, `samples[] {id, psnr, ssim, perceptual, qscore}`,
//! `aggregate {psnr, ssim, perceptual, frechet, qscore}`. A PSNR of identical
//! videos is the string `"inf"`; absent values are `null`.

use std::fs;
use std::path::{Path, PathBuf};

use effecterase_core::metrics::{frechet_distance, perceptual_distance, psnr, ssim, FeatureExtractor, RandomProjectionExtractor};
use effecterase_core::VideoTensor;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::list_subdirs;
use crate::error::{LabError, Result};
use crate::frames::{read_video_dir, MANIFEST_FILE};
use crate::vlm::VlmClient;

mod inf_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got `{t}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: String,
    #[serde(with = "inf_f64")]
    pub psnr: f64,
    pub ssim: f64,
    pub perceptual: f64,
    pub qscore: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(with = "inf_f64")]
    pub psnr: f64,
    pub ssim: f64,
    pub perceptual: f64,
    /// Needs at least two samples per side.
    pub frechet: Option<f64>,
    pub qscore: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub count: usize,
    pub samples: Vec<SampleMetrics>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Subdirectory inside each predicted sample, e.g. `background`.
    pub pred_component: Option<String>,
    pub gt_component: Option<String>,
    pub extractor_seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { pred_component: None, gt_component: None, extractor_seed: 0 }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// `(id, video dir)` for every sample under `root`; a root that is itself a
/// video directory is a single sample named after the directory.
pub fn video_dirs(root: &Path, component: Option<&str>) -> Result<Vec<(String, PathBuf)>> {
    let resolve = |p: PathBuf| match component {
        Some(c) => p.join(c),
        None => p,
    };
    if root.join(MANIFEST_FILE).is_file() {
        let id = root.file_name().map_or_else(|| "video".into(), |n| n.to_string_lossy().into_owned());
        return Ok(vec![(id, root.to_path_buf())]);
    }
    let direct = component.map_or(false, |c| root.join(c).join(MANIFEST_FILE).is_file());
    if direct {
        let id = root.file_name().map_or_else(|| "video".into(), |n| n.to_string_lossy().into_owned());
        return Ok(vec![(id, resolve(root.to_path_buf()))]);
    }
    let dirs: Vec<(String, PathBuf)> = list_subdirs(root)?
        .into_iter()
        .map(|(id, p)| (id, resolve(p)))
        .filter(|(_, p)| p.join(MANIFEST_FILE).is_file())
        .collect();
    if dirs.is_empty() {
        return Err(LabError::data(format!("{}: no videos found", root.display())));
    }
    Ok(dirs)
}

fn build_report(samples: Vec<SampleMetrics>, frechet: Option<f64>) -> MetricReport {
    let qscores: Vec<f64> = samples.iter().filter_map(|s| s.qscore).collect();
    let aggregate = Aggregate {
        psnr: mean(samples.iter().map(|s| s.psnr)),
        ssim: mean(samples.iter().map(|s| s.ssim)),
        perceptual: mean(samples.iter().map(|s| s.perceptual)),
        frechet,
        qscore: if qscores.len() == samples.len() && !qscores.is_empty() { Some(mean(qscores.into_iter())) } else { None },
    };
    MetricReport { count: samples.len(), samples, aggregate }
}

/// Metrics for already loaded `(id, prediction, reference)` triples.
pub fn evaluate_videos(
    pairs: &[(String, VideoTensor, VideoTensor)],
    extractor: &RandomProjectionExtractor,
    qscores: Option<&[f64]>,
) -> Result<MetricReport> {
    let samples: Vec<SampleMetrics> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (id, pred, gt))| {
            Ok(SampleMetrics {
                id: id.clone(),
                psnr: psnr(pred, gt)?,
                ssim: ssim(pred, gt)?,
                perceptual: perceptual_distance(pred, gt, extractor)?,
                qscore: qscores.map(|q| q[i]),
            })
        })
        .collect::<Result<_>>()?;
    let frechet = if pairs.len() >= 2 {
        let fa: Vec<Vec<f64>> = pairs.iter().map(|(_, p, _)| extractor.video_features(p)).collect();
        let fb: Vec<Vec<f64>> = pairs.iter().map(|(_, _, g)| extractor.video_features(g)).collect();
        Some(frechet_distance(&fa, &fb)?)
    } else {
        None
    };
    Ok(build_report(samples, frechet))
}

pub fn eval_set(pred_root: &Path, gt_root: &Path, opts: &EvalOptions, vlm: Option<&VlmClient>) -> Result<MetricReport> {
    let preds = video_dirs(pred_root, opts.pred_component.as_deref())?;
    let gts = video_dirs(gt_root, opts.gt_component.as_deref())?;
    let single = preds.len() == 1 && gts.len() == 1;
    let mut jobs = Vec::with_capacity(preds.len());
    for (id, pred) in preds {
        let gt = match gts.iter().find(|(g, _)| *g == id) {
            Some((_, g)) => g.clone(),
            None if single => gts[0].1.clone(),
            None => return Err(LabError::data(format!("sample `{id}` has no reference video in {}", gt_root.display()))),
        };
        jobs.push((id, pred, gt));
    }
    let pairs: Vec<(String, VideoTensor, VideoTensor)> = jobs
        .par_iter()
        .map(|(id, p, g)| {
            let (pred, gt) = (read_video_dir(p)?, read_video_dir(g)?);
            if !gt.same_dims(pred.frames(), pred.height(), pred.width()) {
                return Err(LabError::data(format!("sample `{id}`: prediction and reference shapes differ")));
            }
            Ok((id.clone(), pred, gt))
        })
        .collect::<Result<_>>()?;
    let qscores = match vlm {
        Some(client) => {
            let videos: Vec<&VideoTensor> = pairs.iter().map(|(_, p, _)| p).collect();
            Some(client.score_batch(&videos)?)
        }
        None => None,
    };
    let extractor = RandomProjectionExtractor::standard(opts.extractor_seed);
    evaluate_videos(&pairs, &extractor, qscores.as_deref())
}

pub fn write_report(report: &MetricReport, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
    }
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(path, json + "\n").map_err(|e| LabError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_psnr_round_trips_as_string() {
        let s = SampleMetrics { id: "a".into(), psnr: f64::INFINITY, ssim: 1.0, perceptual: 0.0, qscore: None };
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"psnr\":\"inf\""));
        let back: SampleMetrics = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn aggregates_are_means() {
        let mk = |id: &str, p: f64, q: Option<f64>| SampleMetrics { id: id.into(), psnr: p, ssim: p / 100.0, perceptual: 1.0, qscore: q };
        let r = build_report(vec![mk("a", 20.0, Some(8.0)), mk("b", 30.0, Some(6.0))], None);
        assert_eq!(r.count, 2);
        assert_eq!(r.aggregate.psnr, 25.0);
        assert!((r.aggregate.ssim - 0.25).abs() < 1e-15);
        assert_eq!(r.aggregate.qscore, Some(7.0));
        let partial = build_report(vec![mk("a", 20.0, Some(8.0)), mk("b", 30.0, None)], None);
        assert_eq!(partial.aggregate.qscore, None);
    }

    #[test]
    fn identical_sets_score_perfectly() {
        let v = VideoTensor::from_fn(3, 16, 16, |t, y, x| {
            let v = |c: usize| ((t + y * 3 + x * 5 + c) % 11) as f64 / 10.0;
            [v(0), v(1), v(2)]
        }).unwrap();
        let w = VideoTensor::from_fn(3, 16, 16, |t, y, x| {
            let v = |c: usize| ((t * 2 + y + x + c) % 7) as f64 / 6.0;
            [v(0), v(1), v(2)]
        }).unwrap();
        let pairs = vec![("a".to_string(), v.clone(), v), ("b".to_string(), w.clone(), w)];
        let r = evaluate_videos(&pairs, &RandomProjectionExtractor::standard(1), None).unwrap();
        assert!(r.aggregate.psnr.is_infinite());
        assert_eq!(r.aggregate.ssim, 1.0);
        assert_eq!(r.aggregate.perceptual, 0.0);
        assert!(r.aggregate.frechet.unwrap() < 1e-6);
    }
}
