use std::fs;
use std::io::{BufRead, BufReader};
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::error::{LodError, Result};
use crate::lod::write_vector;

/// File cache of reference vectors keyed by a content hash.
#[derive(Clone, Debug, Default)]
pub struct ReferenceCache {
    dir: Option<PathBuf>,
}

impl ReferenceCache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self { dir }
    }

    pub fn key(description: &serde_json::Value) -> String {
        let digest = Sha256::digest(description.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.txt")))
    }

    pub fn load(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(path) = self.path(key) else {
            return Ok(None);
        };
        if !path.exists() {
            return Ok(None);
        }
        let file = fs::File::open(&path)?;
        let mut out = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            let v = line
                .trim()
                .parse()
                .map_err(|_| LodError::Parse(format!("bad cache entry '{line}'")))?;
            out.push(v);
        }
        Ok(Some(out))
    }

    pub fn store(&self, key: &str, values: &[f64]) -> Result<()> {
        let Some(path) = self.path(key) else {
            return Ok(());
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        write_vector(fs::File::create(path)?, values)
    }

    /// Cached vector or the result of `compute`, stored on success.
    pub fn get_or_compute(
        &self,
        key: &str,
        compute: impl FnOnce() -> Result<Vec<f64>>,
    ) -> Result<(Vec<f64>, bool)> {
        if let Some(v) = self.load(key)? {
            return Ok((v, true));
        }
        let v = compute()?;
        self.store(key, &v)?;
        Ok((v, false))
    }
}
