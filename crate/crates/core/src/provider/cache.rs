use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{non_empty, GenRequest, GenResponse, Origin, Provider};
use crate::error::{Error, Result};

static TMP_SEQ: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheEntry {
    request: GenRequest,
    text: String,
    timestamp: String,
}

/// Record/replay cache keyed by [`GenRequest::cache_key`].
///
/// With an inner provider, misses are forwarded and the reply is written to
/// `<dir>/<first2>/<digest>.json` before returning. Without one the cache is
/// replay-only and a miss is a hard error.
pub struct CacheProvider {
    dir: PathBuf,
    inner: Option<Box<dyn Provider>>,
}

impl CacheProvider {
    pub fn recording(dir: impl Into<PathBuf>, inner: Box<dyn Provider>) -> Self {
        CacheProvider { dir: dir.into(), inner: Some(inner) }
    }

    pub fn replay_only(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(Error::Config(format!("replay cache directory {} does not exist", dir.display())));
        }
        Ok(CacheProvider { dir, inner: None })
    }

    pub fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2.min(key.len())]).join(format!("{key}.json"))
    }

    fn store(&self, path: &Path, req: &GenRequest, text: &str) -> Result<()> {
        let parent = path.parent().unwrap_or(&self.dir);
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let entry = CacheEntry {
            request: req.clone(),
            text: text.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        };
        // write-then-rename so readers never observe a partial entry
        let tmp = parent.join(format!(
            ".{}.{}-{}.tmp",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("entry"),
            std::process::id(),
            TMP_SEQ.fetch_add(1, Ordering::Relaxed)
        ));
        let body = serde_json::to_vec_pretty(&entry)?;
        std::fs::write(&tmp, body).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

impl Provider for CacheProvider {
    fn generate(&self, req: &GenRequest) -> Result<GenResponse> {
        let key = req.cache_key();
        let path = self.entry_path(&key);
        if path.exists() {
            let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let entry: CacheEntry = serde_json::from_str(&raw)?;
            return non_empty(entry.text, Origin::Cache, &key);
        }
        let Some(inner) = &self.inner else {
            return Err(Error::CacheMiss { key });
        };
        let resp = inner.generate(req)?;
        self.store(&path, req, &resp.text)?;
        Ok(resp)
    }
}
