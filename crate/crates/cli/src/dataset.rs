//! On-disk layout of synthesized patch datasets: an index.json next to a
//! patches/ directory of JPEG files.

use anyhow::{Context, Result, bail};
use requant_forensics::Label;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct PatchEntry {
    pub file: String,
    pub label: Label,
    pub source: u64,
    pub q_first: Option<String>,
    pub q_final: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub patch_size: usize,
    pub entries: Vec<PatchEntry>,
}

impl DatasetIndex {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(INDEX_FILE);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        let index: DatasetIndex = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))?;
        if index.patch_size == 0 || !index.patch_size.is_multiple_of(8) {
            bail!("index declares invalid patch size {}", index.patch_size);
        }
        Ok(index)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join(INDEX_FILE), json)?;
        Ok(())
    }

    pub fn patch_path(&self, dir: &Path, entry: &PatchEntry) -> PathBuf {
        dir.join(&entry.file)
    }
}
