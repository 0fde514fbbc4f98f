use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ChatRequest;

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    request: ChatRequest,
    response: String,
}

/// One JSON file per request key, written via temp file and atomic rename.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(ResponseCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or("xx");
        self.dir.join(shard).join(format!("{key}.json"))
    }

    /// Returns the stored response. Unreadable or mismatched entries count
    /// as misses.
    pub fn get(&self, key: &str) -> Option<String> {
        let path = self.path_for(key);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                tracing::warn!(path = %path.display(), error = %e, "cache entry unreadable, treating as miss");
                return None;
            }
        };
        match serde_json::from_slice::<Entry>(&bytes) {
            Ok(entry) if entry.key == key => Some(entry.response),
            Ok(_) => {
                tracing::warn!(path = %path.display(), "cache entry key mismatch, treating as miss");
                None
            }
            Err(e) => {
                tracing::warn!(path = %path.display(), error = %e, "corrupt cache entry, treating as miss");
                None
            }
        }
    }

    pub fn put(&self, request: &ChatRequest, response: &str) -> std::io::Result<()> {
        let key = request.cache_key();
        let path = self.path_for(&key);
        let parent = path.parent().expect("entry path has a parent");
        std::fs::create_dir_all(parent)?;
        let entry = Entry { key, request: request.clone(), response: response.to_string() };
        let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
        serde_json::to_writer_pretty(&mut tmp, &entry)?;
        tmp.write_all(b"\n")?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }
}
