//! Corpus persistence: line-delimited documents under a schema-versioned
//! header, plus source-record directory reading for ingestion.
//!
//! Round trips are bit-exact: documents carry only integers and strings, and
//! every field is serialized verbatim.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use infoseek_core::corpus::{Document, SourceRecord};

pub const CORPUS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusIoError {
    #[error("io failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus schema mismatch in {path}: found version {found}, expected {expected}")]
    SchemaMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("malformed corpus file {path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusIoError + '_ {
    move |source| CorpusIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusHeader {
    schema_version: u32,
    kind: String,
    profile: String,
}

/// A corpus loaded from disk, with the profile name it was filtered under.
#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub profile: String,
    pub documents: Vec<Document>,
}

impl LoadedCorpus {
    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }
}

/// Write one header line plus one document per line.
pub fn store_corpus(
    documents: &[Document],
    profile: &str,
    path: &Path,
) -> Result<(), CorpusIoError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut writer = BufWriter::new(file);
    let header = CorpusHeader {
        schema_version: CORPUS_SCHEMA_VERSION,
        kind: "corpus".into(),
        profile: profile.into(),
    };
    let header_line = serde_json::to_string(&header).expect("header serializes");
    writeln!(writer, "{header_line}").map_err(io_err(path))?;
    for doc in documents {
        let line = serde_json::to_string(doc).expect("document serializes");
        writeln!(writer, "{line}").map_err(io_err(path))?;
    }
    writer.flush().map_err(io_err(path))
}

/// Load a corpus, verifying the schema version before reading any document.
pub fn load_corpus(path: &Path) -> Result<LoadedCorpus, CorpusIoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = match lines.next() {
        Some(line) => line.map_err(io_err(path))?,
        None => {
            return Err(CorpusIoError::Malformed {
                path: path.to_path_buf(),
                message: "missing header line".into(),
            })
        }
    };
    let header: CorpusHeader =
        serde_json::from_str(&header_line).map_err(|e| CorpusIoError::Malformed {
            path: path.to_path_buf(),
            message: format!("unreadable header: {e}"),
        })?;
    if header.schema_version != CORPUS_SCHEMA_VERSION {
        return Err(CorpusIoError::SchemaMismatch {
            path: path.to_path_buf(),
            found: header.schema_version,
            expected: CORPUS_SCHEMA_VERSION,
        });
    }
    let mut documents = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| CorpusIoError::Malformed {
            path: path.to_path_buf(),
            message: format!("bad document on line {}: {e}", idx + 2),
        })?;
        documents.push(doc);
    }
    Ok(LoadedCorpus {
        profile: header.profile,
        documents,
    })
}

/// Read all `*.json` source records in a directory, sorted by file name for
/// deterministic ingestion order.
pub fn read_source_records(dir: &Path) -> Result<Vec<(PathBuf, SourceRecord)>, CorpusIoError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    let mut records = Vec::with_capacity(paths.len());
    for path in paths {
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let record: SourceRecord =
            serde_json::from_str(&text).map_err(|e| CorpusIoError::Malformed {
                path: path.clone(),
                message: format!("unreadable source record: {e}"),
            })?;
        records.push((path, record));
    }
    Ok(records)
}
