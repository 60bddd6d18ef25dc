//! Embedding cache keyed by (provider id, SHA-256 of normalized text).
//!
//! Remote embeddings dominate run cost, so every embedding passes through
//! this wrapper: hits are served from memory, misses go to the inner
//! provider and are appended to an optional sidecar file so later runs skip
//! re-embedding entirely. Cached values round-trip bit-exactly (shortest
//! round-trip float encoding), keeping warm results bitwise equal to cold
//! ones. Reads share an `RwLock`; file appends take a separate mutex.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use infoseek_core::retrieval::{prepare_text, Embedder, EmbeddingVector, RetrievalError};

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("io failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt cache line {line} in {path}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    dim: usize,
    values: Vec<f64>,
}

/// Caching wrapper around any embedding provider.
pub struct CachingEmbedder {
    inner: Box<dyn Embedder + Send + Sync>,
    entries: RwLock<HashMap<String, Vec<f64>>>,
    sidecar: Option<Mutex<BufWriter<File>>>,
    provider_calls: AtomicU64,
}

impl CachingEmbedder {
    /// Purely in-memory cache.
    pub fn in_memory(inner: Box<dyn Embedder + Send + Sync>) -> Self {
        CachingEmbedder {
            inner,
            entries: RwLock::new(HashMap::new()),
            sidecar: None,
            provider_calls: AtomicU64::new(0),
        }
    }

    /// Cache backed by a sidecar file: existing records are loaded, new ones
    /// appended.
    pub fn with_sidecar(
        inner: Box<dyn Embedder + Send + Sync>,
        path: &Path,
    ) -> Result<Self, CacheError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|source| CacheError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|source| CacheError::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: CacheRecord =
                    serde_json::from_str(&line).map_err(|e| CacheError::Corrupt {
                        path: path.to_path_buf(),
                        line: idx + 1,
                        message: e.to_string(),
                    })?;
                entries.insert(record.key, record.values);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| CacheError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(CachingEmbedder {
            inner,
            entries: RwLock::new(entries),
            sidecar: Some(Mutex::new(BufWriter::new(file))),
            provider_calls: AtomicU64::new(0),
        })
    }

    /// How many times the inner provider was actually called.
    pub fn provider_calls(&self) -> u64 {
        self.provider_calls.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn cache_key(&self, prepared: &str) -> String {
        let digest = Sha256::digest(prepared.as_bytes());
        format!("{}:{}", self.inner.provider_id(), hex::encode(digest))
    }
}

impl Embedder for CachingEmbedder {
    fn provider_id(&self) -> String {
        self.inner.provider_id()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let prepared = prepare_text(text)?;
        let key = self.cache_key(&prepared);
        if let Some(values) = self.entries.read().expect("cache lock").get(&key) {
            return EmbeddingVector::new(values.clone());
        }
        self.provider_calls.fetch_add(1, Ordering::Relaxed);
        let vector = self.inner.embed(&prepared)?;
        let values = vector.values().to_vec();
        self.entries
            .write()
            .expect("cache lock")
            .insert(key.clone(), values.clone());
        if let Some(sidecar) = &self.sidecar {
            let record = CacheRecord {
                key,
                dim: values.len(),
                values,
            };
            let line = serde_json::to_string(&record).expect("record serializes");
            let mut writer = sidecar.lock().expect("sidecar lock");
            // Flush per record so concurrent runs and crashes lose nothing.
            if writeln!(writer, "{line}").and_then(|_| writer.flush()).is_err() {
                log::warn!("embedding cache sidecar write failed; continuing in memory");
            }
        }
        Ok(vector)
    }
}
