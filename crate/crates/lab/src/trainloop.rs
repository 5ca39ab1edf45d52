//! Epoch-shuffled training driver with checkpoints and a JSONL loss log.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use effecterase_core::model::Model;
use effecterase_core::rng::{derive_seed, seeded, ChaCha8Rng};
use effecterase_core::train::{LossBreakdown, TrainConfig, Trainer};
use effecterase_core::TripletSample;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::save_checkpoint;
use crate::error::{LabError, Result};

/// Seed stream for model initialization when a run builds its own model.
pub const MODEL_STREAM: u64 = 0x4d4f_4445;
const ORDER_STREAM: u64 = 0x4f52_4452;

/// One line of the loss log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub lr: f64,
    pub denoise_removal: f64,
    pub denoise_insertion: f64,
    pub ec: f64,
    pub total: f64,
    pub wall_ms: u64,
}

impl LossRecord {
    pub fn breakdown(&self) -> LossBreakdown {
        LossBreakdown {
            denoise_removal: self.denoise_removal,
            denoise_insertion: self.denoise_insertion,
            ec: self.ec,
            total: self.total,
        }
    }
}

/// Endless stream of sample indices: a fresh seeded permutation every epoch.
#[derive(Debug, Clone)]
pub struct EpochOrder {
    len: usize,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
}

impl EpochOrder {
    pub fn new(len: usize, seed: u64) -> Self {
        Self { len, rng: seeded(derive_seed(seed, ORDER_STREAM)), order: Vec::new(), pos: 0 }
    }
}

impl Iterator for EpochOrder {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.len == 0 {
            return None;
        }
        if self.pos == self.order.len() {
            self.order = (0..self.len).collect();
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        self.pos += 1;
        Some(self.order[self.pos - 1])
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<LossRecord>,
    pub checkpoints: Vec<PathBuf>,
}

/// Runs `cfg.max_steps` optimizer steps. Checkpoints land in
/// `checkpoint_root/step_<N>` at step 0, every `checkpoint_interval` steps and
/// at the last step; each step appends one record to `loss_log`.
pub fn train_loop(
    samples: &[TripletSample],
    model: Model,
    cfg: &TrainConfig,
    checkpoint_root: &Path,
    loss_log: &Path,
) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(LabError::data("training set is empty"));
    }
    let mut trainer = Trainer::new(model, cfg.clone())?;
    if let Some(parent) = loss_log.parent() {
        fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
    }
    let file = fs::File::create(loss_log).map_err(|e| LabError::io(loss_log, e))?;
    let mut log_file = BufWriter::new(file);
    let mut order = EpochOrder::new(samples.len(), cfg.seed);
    let mut history = Vec::with_capacity(cfg.max_steps as usize);
    let mut totals = Vec::with_capacity(cfg.max_steps as usize);
    let mut checkpoints = vec![save_checkpoint(checkpoint_root, &trainer.model, 0, cfg.seed, Some(cfg), &totals)?];
    let started = Instant::now();
    for step in 1..=cfg.max_steps {
        let batch: Vec<&TripletSample> =
            (0..cfg.batch_size).map(|_| &samples[order.next().expect("non-empty order")]).collect();
        let loss = trainer.train_step(&batch).map_err(|e| {
            log::error!("training aborted at step {step}: {e}");
            LabError::Core(e)
        })?;
        let record = LossRecord {
            step,
            lr: cfg.learning_rate,
            denoise_removal: loss.denoise_removal,
            denoise_insertion: loss.denoise_insertion,
            ec: loss.ec,
            total: loss.total,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        let line = serde_json::to_string(&record).expect("loss record serializes");
        writeln!(log_file, "{line}").and_then(|_| log_file.flush()).map_err(|e| LabError::io(loss_log, e))?;
        totals.push(loss.total);
        if step == 1 || step % 50 == 0 || step == cfg.max_steps {
            log::info!(
                "step {step}/{}: total {:.5} removal {:.5} insertion {:.5} ec {:.5}",
                cfg.max_steps,
                loss.total,
                loss.denoise_removal,
                loss.denoise_insertion,
                loss.ec
            );
        }
        history.push(record);
        let interval_hit = cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0;
        if interval_hit || step == cfg.max_steps {
            checkpoints.push(save_checkpoint(checkpoint_root, &trainer.model, step, cfg.seed, Some(cfg), &totals)?);
        }
    }
    Ok(TrainOutcome { model: trainer.model, history, checkpoints })
}

pub fn read_loss_log(path: &Path) -> Result<Vec<LossRecord>> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| LabError::data(format!("{}:{}: {e}", path.display(), n + 1))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_order_visits_each_sample_once_per_epoch() {
        let mut order = EpochOrder::new(5, 9);
        for _ in 0..3 {
            let mut epoch: Vec<usize> = (&mut order).take(5).collect();
            epoch.sort_unstable();
            assert_eq!(epoch, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn epoch_order_is_seeded() {
        let a: Vec<usize> = EpochOrder::new(8, 1).take(24).collect();
        let b: Vec<usize> = EpochOrder::new(8, 1).take(24).collect();
        let c: Vec<usize> = EpochOrder::new(8, 2).take(24).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
