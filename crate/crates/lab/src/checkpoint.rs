//! `step_<N>/tensors.bin` + `step_<N>/meta.json`.
//!
//! `tensors.bin` layout, little endian: magic `EETN`, `u32` version, `u32`
//! tensor count, then per tensor `u32` name length, UTF-8 name, `u8` trainable
//! flag, `u32` rank, `u64` dims, `f64` values.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use effecterase_core::model::{Model, ModelConfig, LoraSpec, ParamStore};
use effecterase_core::train::TrainConfig;
use effecterase_core::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

pub const MAGIC: &[u8; 4] = b"EETN";
pub const FORMAT_VERSION: u32 = 1;
pub const TENSORS_FILE: &str = "tensors.bin";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub step: u64,
    pub seed: u64,
    pub model: ModelConfig,
    pub lora: Option<LoraSpec>,
    pub train: Option<TrainConfig>,
    /// Total loss of every optimizer step so far.
    pub loss_history: Vec<f64>,
    /// SHA-256 of the JSON-encoded model and training configuration.
    pub config_hash: String,
}

pub fn config_hash(model: &ModelConfig, train: Option<&TrainConfig>) -> String {
    let json = serde_json::json!({ "model": model, "train": train }).to_string();
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn step_dir(root: &Path, step: u64) -> PathBuf {
    root.join(format!("step_{step}"))
}

pub fn encode_tensors(params: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, p) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(u8::from(p.trainable));
        out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(LabError::data("tensor file truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<ParamStore> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(LabError::data("not a tensor file (bad magic)"));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(LabError::data(format!("unsupported tensor file version {version}")));
    }
    let count = c.u32()?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?).map_err(|_| LabError::data("tensor name is not UTF-8"))?.to_string();
        let trainable = c.take(1)?[0] != 0;
        let rank = c.u32()? as usize;
        let shape: Vec<usize> = (0..rank).map(|_| c.u64().map(|d| d as usize)).collect::<Result<_>>()?;
        let n: usize = shape.iter().product();
        let raw = c.take(n.checked_mul(8).ok_or_else(|| LabError::data("tensor too large"))?)?;
        let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        params.insert(name, Tensor::new(shape, data), trainable);
    }
    if c.pos != bytes.len() {
        return Err(LabError::data("trailing bytes after tensors"));
    }
    Ok(params)
}

pub fn save_checkpoint(
    root: &Path,
    model: &Model,
    step: u64,
    seed: u64,
    train: Option<&TrainConfig>,
    loss_history: &[f64],
) -> Result<PathBuf> {
    let dir = step_dir(root, step);
    fs::create_dir_all(&dir).map_err(|e| LabError::io(&dir, e))?;
    let path = dir.join(TENSORS_FILE);
    let mut file = fs::File::create(&path).map_err(|e| LabError::io(&path, e))?;
    file.write_all(&encode_tensors(&model.params)).map_err(|e| LabError::io(&path, e))?;
    let meta = CheckpointMeta {
        format_version: FORMAT_VERSION,
        step,
        seed,
        model: model.config.clone(),
        lora: model.lora.clone(),
        train: train.cloned(),
        loss_history: loss_history.to_vec(),
        config_hash: config_hash(&model.config, train),
    };
    let path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(&meta).expect("checkpoint meta serializes");
    fs::write(&path, json + "\n").map_err(|e| LabError::io(&path, e))?;
    Ok(dir)
}

/// Loads a checkpoint and checks its tensors against the layout its
/// configuration implies (names, shapes, finiteness).
pub fn load_checkpoint(dir: &Path) -> Result<(Model, CheckpointMeta)> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&text).map_err(|e| LabError::data(format!("{}: {e}", path.display())))?;
    if meta.config_hash != config_hash(&meta.model, meta.train.as_ref()) {
        return Err(LabError::data(format!("{}: config hash does not match its contents", path.display())));
    }
    let path = dir.join(TENSORS_FILE);
    let mut bytes = Vec::new();
    fs::File::open(&path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| LabError::io(&path, e))?;
    let params = decode_tensors(&bytes)?;

    let mut skeleton = Model::base(&meta.model, 0)?;
    if let Some(spec) = &meta.lora {
        skeleton = effecterase_core::model::apply_lora(&skeleton, spec, &mut effecterase_core::rng::seeded(0))?;
    }
    let expected: Vec<(&str, &[usize])> = skeleton.params.iter().map(|(n, p)| (n, p.value.shape())).collect();
    let found: Vec<(&str, &[usize])> = params.iter().map(|(n, p)| (n, p.value.shape())).collect();
    if expected != found {
        let missing = expected.iter().find(|e| !found.contains(e)).or_else(|| found.iter().find(|f| !expected.contains(f)));
        return Err(LabError::data(format!(
            "{}: checkpoint does not match its model config (first mismatch: {:?})",
            dir.display(),
            missing.map(|m| m.0)
        )));
    }
    if let Some((name, _)) = params.iter().find(|(_, p)| !p.value.is_finite()) {
        return Err(LabError::data(format!("{}: tensor `{name}` has non-finite values", dir.display())));
    }
    let model = Model { config: meta.model.clone(), params, lora: meta.lora.clone() };
    Ok((model, meta))
}
