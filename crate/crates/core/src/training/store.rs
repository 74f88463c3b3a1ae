use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use super::TrainError;
use crate::numeric::io::{read_tensor, write_tensor};
use crate::numeric::Tensor;

/// Structural-block outputs `h^t` (`V x f`) per time step, optionally
/// mirrored to a directory as `h_0000.bin`, `h_0001.bin`, ...
#[derive(Debug, Clone, Default)]
pub struct RepresentationStore {
    entries: BTreeMap<usize, Tensor>,
    dir: Option<PathBuf>,
}

impl RepresentationStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a store directory and loads every step
    /// file found there.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, TrainError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut entries = BTreeMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            let Some(step) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_prefix("h_")?.strip_suffix(".bin")?.parse().ok())
            else {
                continue;
            };
            let t = read_tensor(&mut BufReader::new(File::open(&path)?))?;
            entries.insert(step, t);
        }
        Ok(Self {
            entries,
            dir: Some(dir),
        })
    }

    fn path(dir: &Path, step: usize) -> PathBuf {
        dir.join(format!("h_{step:04}.bin"))
    }

    pub fn save(&mut self, step: usize, h: Tensor) -> Result<(), TrainError> {
        if let Some(dir) = &self.dir {
            let mut w = BufWriter::new(File::create(Self::path(dir, step))?);
            write_tensor(&mut w, &h)?;
        }
        self.entries.insert(step, h);
        Ok(())
    }

    /// Reads step `t`, from disk when the store is directory-backed.
    pub fn load(&self, step: usize) -> Result<Tensor, TrainError> {
        if let Some(dir) = &self.dir {
            let path = Self::path(dir, step);
            if path.exists() {
                return Ok(read_tensor(&mut BufReader::new(File::open(path)?))?);
            }
        }
        self.entries
            .get(&step)
            .cloned()
            .ok_or(TrainError::MissingHistory {
                missing: vec![step],
            })
    }

    pub fn contains(&self, step: usize) -> bool {
        self.entries.contains_key(&step)
    }

    pub fn steps(&self) -> Vec<usize> {
        self.entries.keys().copied().collect()
    }

    /// `h^0 .. h^{upto-1}`, or the list of absent steps.
    pub fn history(&self, upto: usize) -> Result<Vec<Tensor>, TrainError> {
        let missing: Vec<usize> = (0..upto).filter(|t| !self.contains(*t)).collect();
        if !missing.is_empty() {
            return Err(TrainError::MissingHistory { missing });
        }
        Ok((0..upto).map(|t| self.entries[&t].clone()).collect())
    }
}
