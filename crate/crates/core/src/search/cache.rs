use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{SearchBackend, SearchOrigin, SearchOutcome, SearchResponse};
use crate::error::SearchError;

/// Lowercased, whitespace-collapsed query text.
pub fn cache_key(query: &str) -> String {
    crate::types::collapse_whitespace(&query.to_lowercase())
}

/// One stored response, in `<dir>/<sha256(key)>.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    /// Seconds since the Unix epoch.
    pub stored_at: u64,
    pub response: SearchResponse,
}

/// Read-through disk cache in front of an optional upstream backend.
///
/// Without an upstream, a miss is an error: the cache is a pure replay source.
pub struct CachedSearch {
    dir: PathBuf,
    upstream: Option<Arc<dyn SearchBackend>>,
}

impl CachedSearch {
    pub fn new(
        dir: impl Into<PathBuf>,
        upstream: Option<Arc<dyn SearchBackend>>,
    ) -> Result<Self, SearchError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| SearchError::CacheIo {
            path: dir.clone(),
            source,
        })?;
        Ok(CachedSearch { dir, upstream })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, query: &str) -> PathBuf {
        let digest = Sha256::digest(cache_key(query).as_bytes());
        self.dir.join(format!("{}.json", hex::encode(digest)))
    }

    pub fn get(&self, query: &str) -> Result<Option<CacheEntry>, SearchError> {
        let path = self.entry_path(query);
        let raw = match fs::read_to_string(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(SearchError::CacheIo { path, source }),
        };
        let entry: CacheEntry = serde_json::from_str(&raw).map_err(|e| {
            SearchError::Protocol(format!("corrupt cache entry {}: {e}", path.display()))
        })?;
        entry.response.validate().map_err(|e| {
            SearchError::Protocol(format!("invalid cache entry {}: {e}", path.display()))
        })?;
        Ok(Some(entry))
    }

    /// Writes an entry through a temporary file and an atomic rename.
    pub fn put(&self, query: &str, response: &SearchResponse) -> Result<(), SearchError> {
        let path = self.entry_path(query);
        let stored_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let entry = CacheEntry {
            key: cache_key(query),
            stored_at,
            response: response.clone(),
        };
        let io_err = |source: io::Error| SearchError::CacheIo {
            path: path.clone(),
            source,
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io_err)?;
        let json = serde_json::to_vec_pretty(&entry).map_err(|e| io_err(io::Error::other(e)))?;
        tmp.write_all(&json).map_err(io_err)?;
        tmp.persist(&path).map_err(|e| io_err(e.error))?;
        Ok(())
    }
}

impl SearchBackend for CachedSearch {
    fn fetch(&self, query: &str) -> Result<SearchOutcome, SearchError> {
        if let Some(entry) = self.get(query)? {
            return Ok(SearchOutcome {
                response: entry.response,
                origin: SearchOrigin::Cache,
            });
        }
        let upstream = self
            .upstream
            .as_ref()
            .ok_or_else(|| SearchError::CacheMiss(cache_key(query)))?;
        let outcome = upstream.fetch(query)?;
        self.put(query, &outcome.response)?;
        Ok(outcome)
    }

    fn name(&self) -> &str {
        "cache"
    }
}
