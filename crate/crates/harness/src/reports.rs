//! Report emission. Every file is a deterministic function of the run: the
//! same `RunReport` and episode list always produce byte-identical output.
//!
//! Files written under the run directory:
//! - `run_summary.json` — the aggregated [`RunReport`]
//! - `episodes.jsonl` — one [`EpisodeReport`] per line
//! - `failures.jsonl` — one failure record per line (only when non-empty)
//! - `per_topic.csv` — one row per topic group
//! - `step_curve.csv` — one row per step with the dispersion band

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use infoseek_core::protocol::{EpisodeReport, RunReport};

use crate::runner::{EpisodeFailure, TrajectoryStep};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv failure on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<(), ReportError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut writer = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).expect("report items serialize");
        writeln!(writer, "{line}").map_err(io_err(path))?;
    }
    writer.flush().map_err(io_err(path))
}

/// Emit the machine-readable summary, per-episode records, per-topic matrix,
/// and step curve into `dir`.
pub fn emit_reports(
    run: &RunReport,
    episodes: &[EpisodeReport],
    failures: &[EpisodeFailure],
    belief: &str,
    dir: &Path,
) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    let summary_path = dir.join("run_summary.json");
    let summary = serde_json::to_string_pretty(run).expect("run report serializes");
    std::fs::write(&summary_path, summary + "\n").map_err(io_err(&summary_path))?;

    write_jsonl(&dir.join("episodes.jsonl"), episodes)?;
    if !failures.is_empty() {
        write_jsonl(&dir.join("failures.jsonl"), failures)?;
    }

    let topic_path = dir.join("per_topic.csv");
    let mut topics = csv::Writer::from_path(&topic_path).map_err(|source| ReportError::Csv {
        path: topic_path.clone(),
        source,
    })?;
    topics
        .write_record(["topic_group", "episodes", "mean_completeness"])
        .and_then(|_| {
            for row in &run.per_topic {
                topics.write_record([
                    row.topic_group.as_str(),
                    &row.episodes.to_string(),
                    &row.mean_completeness.to_string(),
                ])?;
            }
            topics.flush().map_err(csv::Error::from)
        })
        .map_err(|source| ReportError::Csv {
            path: topic_path.clone(),
            source,
        })?;

    let curve_path = dir.join("step_curve.csv");
    let mut curve = csv::Writer::from_path(&curve_path).map_err(|source| ReportError::Csv {
        path: curve_path.clone(),
        source,
    })?;
    curve
        .write_record([
            "belief",
            "step",
            "mean_completeness",
            "std_completeness",
            "band_lo",
            "band_hi",
        ])
        .and_then(|_| {
            for row in &run.step_curve {
                curve.write_record([
                    belief,
                    &row.step.to_string(),
                    &row.mean_completeness.to_string(),
                    &row.std_completeness.to_string(),
                    &row.band_lo.to_string(),
                    &row.band_hi.to_string(),
                ])?;
            }
            curve.flush().map_err(csv::Error::from)
        })
        .map_err(|source| ReportError::Csv {
            path: curve_path.clone(),
            source,
        })?;

    Ok(())
}

/// Append-free trajectory log: one line per step across the whole run.
pub fn write_trajectories(steps: &[TrajectoryStep], dir: &Path) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_jsonl(&dir.join("trajectories.jsonl"), steps)
}
