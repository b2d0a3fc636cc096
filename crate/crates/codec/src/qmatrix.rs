//! Quantization matrices: standard quality-factor scaling, custom pools,
//! seeded perturbation, and train/test partitioning.

use crate::tables::BASE_LUMA_QTABLE;
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

/// An 8x8 table of quantization steps, row-major, each in 1..=255.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QMatrix {
    steps: [u16; 64],
}

impl QMatrix {
    pub fn from_steps(steps: [u16; 64]) -> Result<Self> {
        for (index, &value) in steps.iter().enumerate() {
            if !(1..=255).contains(&value) {
                return Err(Error::QStepOutOfRange { index, value: value as u32 });
            }
        }
        Ok(Self { steps })
    }

    /// All 64 steps equal to `step`.
    pub fn uniform(step: u16) -> Result<Self> {
        Self::from_steps([step; 64])
    }

    pub fn steps(&self) -> &[u16; 64] {
        &self.steps
    }

    /// Step at frequency (u, v), both 0-based row/column indices.
    pub fn step(&self, u: usize, v: usize) -> u16 {
        self.steps[u * 8 + v]
    }
}

/// Scales the base luminance table by an IJG-style quality factor.
///
/// scale = 5000/QF for QF < 50, else 200 - 2*QF;
/// step = clamp(floor((base*scale + 50) / 100), 1, 255).
pub fn standard_qmatrix(quality_factor: u32) -> Result<QMatrix> {
    if !(1..=100).contains(&quality_factor) {
        return Err(Error::QualityOutOfRange(quality_factor));
    }
    let scale: u32 = if quality_factor < 50 { 5000 / quality_factor } else { 200 - 2 * quality_factor };
    let mut steps = [0u16; 64];
    for (s, &base) in steps.iter_mut().zip(BASE_LUMA_QTABLE.iter()) {
        *s = ((base as u32 * scale + 50) / 100).clamp(1, 255) as u16;
    }
    QMatrix::from_steps(steps)
}

/// Provenance of a pool entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Standard,
    Custom,
}

#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub id: String,
    pub matrix: QMatrix,
    pub origin: Origin,
}

/// A named collection of distinct Q-matrices.
#[derive(Debug, Clone, Default)]
pub struct QMatrixPool {
    entries: Vec<PoolEntry>,
}

#[derive(Serialize, Deserialize)]
struct FileEntry {
    id: String,
    steps: Vec<u16>,
}

impl QMatrixPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry, rejecting duplicate ids and duplicate matrices.
    pub fn push(&mut self, id: impl Into<String>, matrix: QMatrix) -> Result<()> {
        let id = id.into();
        if self.entries.iter().any(|e| e.id == id) {
            return Err(Error::Pool(format!("duplicate id {id:?}")));
        }
        if let Some(dup) = self.entries.iter().find(|e| e.matrix == matrix) {
            return Err(Error::Pool(format!(
                "matrix for id {:?} duplicates entry {:?}",
                id, dup.id
            )));
        }
        let origin = if (1..=100).any(|qf| standard_qmatrix(qf).unwrap() == matrix) {
            Origin::Standard
        } else {
            Origin::Custom
        };
        self.entries.push(PoolEntry { id, matrix, origin });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn get(&self, idx: usize) -> &PoolEntry {
        &self.entries[idx]
    }

    pub fn find(&self, id: &str) -> Option<&PoolEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Draws one entry uniformly at random.
    pub fn choose<'a>(&'a self, rng: &mut impl rand::Rng) -> &'a PoolEntry {
        assert!(!self.entries.is_empty(), "empty pool");
        &self.entries[rng.random_range(0..self.entries.len())]
    }

    /// The standard tables for quality factors 51..=100.
    pub fn standard_51_to_100() -> Self {
        let mut pool = Self::new();
        for qf in 51..=100u32 {
            pool.push(format!("qf{qf}"), standard_qmatrix(qf).unwrap()).unwrap();
        }
        pool
    }

    /// Extends the pool with seeded perturbations of its current entries.
    ///
    /// Each perturbed table moves every step independently by one of
    /// {-2,-1,0,+1,+2}, clamped to 1..=255; exact duplicates of any entry
    /// already present are re-drawn.
    pub fn extend_with_perturbations(&mut self, count: usize, seed: u64) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Pool("cannot perturb an empty pool".into()));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let base_len = self.entries.len();
        let mut made = 0;
        let mut attempts = 0;
        while made < count {
            attempts += 1;
            if attempts > count * 1000 {
                return Err(Error::Pool("perturbation failed to find distinct matrices".into()));
            }
            let base = &self.entries[rng.random_range(0..base_len)].matrix;
            let mut steps = *base.steps();
            for s in steps.iter_mut() {
                let delta: i32 = rng.random_range(-2..=2);
                *s = (*s as i32 + delta).clamp(1, 255) as u16;
            }
            let m = QMatrix::from_steps(steps)?;
            if self.entries.iter().any(|e| e.matrix == m) {
                continue;
            }
            self.push(format!("pert{made}"), m)?;
            made += 1;
        }
        Ok(())
    }

    /// Deterministically partitions the pool into disjoint train/test pools.
    pub fn split(&self, seed: u64, train_count: usize) -> Result<(Self, Self)> {
        if train_count >= self.entries.len() {
            return Err(Error::Pool(format!(
                "train count {} must be below pool size {}",
                train_count,
                self.entries.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let mut train = Self::new();
        let mut test = Self::new();
        for (rank, &idx) in order.iter().enumerate() {
            let e = &self.entries[idx];
            let target = if rank < train_count { &mut train } else { &mut test };
            target.push(e.id.clone(), e.matrix.clone())?;
        }
        Ok((train, test))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Vec<FileEntry> =
            serde_json::from_str(text).map_err(|e| Error::Pool(format!("parse error: {e}")))?;
        let mut pool = Self::new();
        for entry in raw {
            if entry.steps.len() != 64 {
                return Err(Error::Pool(format!(
                    "entry {:?} has {} steps, expected 64",
                    entry.id,
                    entry.steps.len()
                )));
            }
            let mut steps = [0u16; 64];
            steps.copy_from_slice(&entry.steps);
            let matrix = QMatrix::from_steps(steps)?;
            pool.push(entry.id, matrix)?;
        }
        Ok(pool)
    }

    pub fn to_json(&self) -> String {
        let raw: Vec<FileEntry> = self
            .entries
            .iter()
            .map(|e| FileEntry { id: e.id.clone(), steps: e.matrix.steps().to_vec() })
            .collect();
        serde_json::to_string_pretty(&raw).expect("pool serialization")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_json())?)
    }
}

/// Checks the pool invariant that all matrices are pairwise distinct.
pub fn all_distinct(pool: &QMatrixPool) -> bool {
    let mut seen = HashSet::new();
    pool.entries().iter().all(|e| seen.insert(e.matrix.clone()))
}
