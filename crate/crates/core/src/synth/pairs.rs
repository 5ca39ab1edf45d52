use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectState {
    Absent,
    Kept,
    Removed,
}

/// One training pair: per-object state plus the camera configuration index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairConfig {
    pub states: Vec<ObjectState>,
    pub camera_id: usize,
}

impl PairConfig {
    /// Objects rendered in the object video.
    pub fn present(&self) -> Vec<usize> {
        self.indices(|s| s != ObjectState::Absent)
    }

    pub fn removal_set(&self) -> Vec<usize> {
        self.indices(|s| s == ObjectState::Removed)
    }

    fn indices(&self, keep: impl Fn(ObjectState) -> bool) -> Vec<usize> {
        self.states.iter().enumerate().filter(|(_, s)| keep(**s)).map(|(i, _)| i).collect()
    }
}

/// `(3^n - 2^n) * m`.
pub fn pair_count(n: usize, m: usize) -> usize {
    (3usize.pow(n as u32) - 2usize.pow(n as u32)) * m
}

/// Every assignment of {absent, kept, removed} to `n` objects with at least one
/// removed object, crossed with `m` camera configurations.
pub fn enumerate_pairs(n: usize, m: usize) -> Result<Vec<PairConfig>> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("enumerate_pairs needs n >= 1 and m >= 1".into()));
    }
    let mut out = Vec::with_capacity(pair_count(n, m));
    let mut digits = vec![0u8; n];
    loop {
        if digits.contains(&2) {
            let states: Vec<ObjectState> = digits
                .iter()
                .map(|d| match d {
                    0 => ObjectState::Absent,
                    1 => ObjectState::Kept,
                    _ => ObjectState::Removed,
                })
                .collect();
            for camera_id in 0..m {
                out.push(PairConfig { states: states.clone(), camera_id });
            }
        }
        // Base-3 counter over object states.
        let mut i = 0;
        loop {
            if i == n {
                return Ok(out);
            }
            digits[i] += 1;
            if digits[i] < 3 {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}
