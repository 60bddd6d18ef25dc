//! Belief-pool and calibration-artifact files.
//!
//! A pool file is one header line (schema version, bin width, seed) followed
//! by one synthetic belief per line. The calibration artifact freezes a
//! [`CalibrationModel`] together with the estimator name, split seed, and a
//! SHA-256 of the pool file it was calibrated from, so inference runs can
//! verify provenance.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use infoseek_core::calibration::{CalibrationModel, SyntheticBelief};

pub const POOL_SCHEMA_VERSION: u32 = 1;
pub const CALIBRATION_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PoolIoError {
    #[error("io failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema mismatch in {path}: found version {found}, expected {expected}")]
    SchemaMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("malformed file {path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PoolIoError + '_ {
    move |source| PoolIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolHeader {
    pub schema_version: u32,
    pub kind: String,
    pub delta: usize,
    pub seed: u64,
}

pub fn store_belief_pool(
    beliefs: &[SyntheticBelief],
    delta: usize,
    seed: u64,
    path: &Path,
) -> Result<(), PoolIoError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut writer = BufWriter::new(file);
    let header = PoolHeader {
        schema_version: POOL_SCHEMA_VERSION,
        kind: "belief_pool".into(),
        delta,
        seed,
    };
    writeln!(writer, "{}", serde_json::to_string(&header).expect("header")).map_err(io_err(path))?;
    for belief in beliefs {
        writeln!(writer, "{}", serde_json::to_string(belief).expect("belief"))
            .map_err(io_err(path))?;
    }
    writer.flush().map_err(io_err(path))
}

pub fn load_belief_pool(path: &Path) -> Result<(PoolHeader, Vec<SyntheticBelief>), PoolIoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| PoolIoError::Malformed {
            path: path.to_path_buf(),
            message: "missing header line".into(),
        })?
        .map_err(io_err(path))?;
    let header: PoolHeader =
        serde_json::from_str(&header_line).map_err(|e| PoolIoError::Malformed {
            path: path.to_path_buf(),
            message: format!("unreadable header: {e}"),
        })?;
    if header.schema_version != POOL_SCHEMA_VERSION {
        return Err(PoolIoError::SchemaMismatch {
            path: path.to_path_buf(),
            found: header.schema_version,
            expected: POOL_SCHEMA_VERSION,
        });
    }
    let mut beliefs = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let belief: SyntheticBelief =
            serde_json::from_str(&line).map_err(|e| PoolIoError::Malformed {
                path: path.to_path_buf(),
                message: format!("bad belief on line {}: {e}", idx + 2),
            })?;
        beliefs.push(belief);
    }
    Ok((header, beliefs))
}

/// SHA-256 of a file's bytes, hex-encoded; used for pool provenance.
pub fn file_sha256(path: &Path) -> Result<String, PoolIoError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// A frozen calibration with its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub schema_version: u32,
    pub estimator: String,
    pub split_seed: u64,
    pub pool_sha256: String,
    pub model: CalibrationModel,
}

pub fn store_calibration(artifact: &CalibrationArtifact, path: &Path) -> Result<(), PoolIoError> {
    let json = serde_json::to_string_pretty(artifact).expect("artifact serializes");
    std::fs::write(path, json + "\n").map_err(io_err(path))
}

pub fn load_calibration(path: &Path) -> Result<CalibrationArtifact, PoolIoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let artifact: CalibrationArtifact =
        serde_json::from_str(&text).map_err(|e| PoolIoError::Malformed {
            path: path.to_path_buf(),
            message: format!("unreadable calibration artifact: {e}"),
        })?;
    if artifact.schema_version != CALIBRATION_SCHEMA_VERSION {
        return Err(PoolIoError::SchemaMismatch {
            path: path.to_path_buf(),
            found: artifact.schema_version,
            expected: CALIBRATION_SCHEMA_VERSION,
        });
    }
    Ok(artifact)
}
