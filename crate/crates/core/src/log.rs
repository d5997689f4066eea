//! Prediction-log files.
//!
//! A log is line-delimited JSON: the first line is a schema header naming
//! the payload kind every record must carry, and each following line is
//! one [`PredictionRecord`]. The format is streamable, diff-able, and
//! append-friendly.
//!
//! ```text
//! {"schema":"classification","version":1}
//! {"id":"r0","index":0,"payload":{"kind":"classification","label":0,"probs":[0.7,0.2,0.1]},"truth":{"kind":"class","class":0}}
//! {"id":"r1","index":1,"payload":{"kind":"classification","label":1,"probs":[0.1,0.8,0.1]}}
//! ```
//!
//! Loading validates every record invariant, enforces unique ids and
//! strictly increasing indices, and reports the offending line number on
//! failure. A zero-length (or all-blank) file is an empty log.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{PayloadKind, PredictionRecord};

pub const LOG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line 1: expected a schema header like {{\"schema\":\"classification\",\"version\":1}}: {0}")]
    BadHeader(String),
    #[error("line 1: log schema is {found}, expected {expected}")]
    SchemaMismatch {
        expected: PayloadKind,
        found: PayloadKind,
    },
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: duplicate id \"{id}\"")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: index {index} does not increase over previous index {previous}")]
    IndexNotIncreasing {
        line: usize,
        index: u64,
        previous: u64,
    },
    #[error("line {line}: payload kind {found} does not match log schema {expected}")]
    PayloadKindMismatch {
        line: usize,
        expected: PayloadKind,
        found: PayloadKind,
    },
}

/// First line of every non-empty log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: PayloadKind,
    pub version: u32,
}

/// Load a prediction log, validating it against the expected payload kind.
/// Records come back in file order, which is index order.
pub fn load_log(path: impl AsRef<Path>, schema: PayloadKind) -> Result<Vec<PredictionRecord>, LogError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| LogError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    read_log(BufReader::new(file), schema).map_err(|e| match e {
        LogError::Read { source, .. } => LogError::Read {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Load a log from any reader; `load_log` is this plus file opening.
pub fn read_log<R: Read>(reader: R, schema: PayloadKind) -> Result<Vec<PredictionRecord>, LogError> {
    let reader = BufReader::new(reader);
    let mut records = Vec::new();
    let mut ids: HashSet<String> = HashSet::new();
    let mut previous_index: Option<u64> = None;
    let mut saw_header = false;

    for (line_idx, line) in reader.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line.map_err(|source| LogError::Read {
            path: PathBuf::from("<reader>"),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            let header: LogHeader = serde_json::from_str(&line)
                .map_err(|e| LogError::BadHeader(e.to_string()))?;
            if header.schema != schema {
                return Err(LogError::SchemaMismatch {
                    expected: schema,
                    found: header.schema,
                });
            }
            saw_header = true;
            continue;
        }
        let record: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| LogError::MalformedLine {
                line: line_no,
                message: e.to_string(),
            })?;
        record.validate().map_err(|e| LogError::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        if record.payload.kind() != schema {
            return Err(LogError::PayloadKindMismatch {
                line: line_no,
                expected: schema,
                found: record.payload.kind(),
            });
        }
        if !ids.insert(record.id.clone()) {
            return Err(LogError::DuplicateId {
                line: line_no,
                id: record.id,
            });
        }
        if let Some(prev) = previous_index {
            if record.index <= prev {
                return Err(LogError::IndexNotIncreasing {
                    line: line_no,
                    index: record.index,
                    previous: prev,
                });
            }
        }
        previous_index = Some(record.index);
        records.push(record);
    }
    Ok(records)
}

/// Write a complete log (header plus records) to a file.
pub fn save_log(
    path: impl AsRef<Path>,
    schema: PayloadKind,
    records: &[PredictionRecord],
) -> Result<(), LogError> {
    let path = path.as_ref();
    let mut out = String::new();
    write_log(&mut out, schema, records);
    std::fs::write(path, out).map_err(|source| LogError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Render a complete log to a string. Serialization is deterministic, so
/// identical records always produce identical bytes.
pub fn write_log(out: &mut String, schema: PayloadKind, records: &[PredictionRecord]) {
    let header = LogHeader {
        schema,
        version: LOG_FORMAT_VERSION,
    };
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
}

/// Append records to an existing log file without touching prior content.
pub fn append_records(
    path: impl AsRef<Path>,
    records: &[PredictionRecord],
) -> Result<usize, LogError> {
    let path = path.as_ref();
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| LogError::Write {
            path: path.to_path_buf(),
            source,
        })?;
    for record in records {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(file, "{line}").map_err(|source| LogError::Write {
            path: path.to_path_buf(),
            source,
        })?;
    }
    Ok(records.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{ClassProbVector, Payload, Truth};

    fn classification_record(id: &str, index: u64, probs: Vec<f64>, truth: usize) -> PredictionRecord {
        let probs = ClassProbVector::new(probs).unwrap();
        let label = probs.argmax();
        PredictionRecord::new(
            id,
            index,
            Payload::Classification { label, probs },
            Some(Truth::Class { class: truth }),
        )
        .unwrap()
    }

    #[test]
    fn empty_file_is_empty_log() {
        let records = read_log(std::io::Cursor::new(""), PayloadKind::Classification).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn three_valid_lines() {
        let mut out = String::new();
        let records = vec![
            classification_record("a", 0, vec![0.7, 0.3], 0),
            classification_record("b", 1, vec![0.2, 0.8], 1),
            classification_record("c", 2, vec![0.5, 0.5], 0),
        ];
        write_log(&mut out, PayloadKind::Classification, &records);
        let loaded = read_log(std::io::Cursor::new(out), PayloadKind::Classification).unwrap();
        assert_eq!(loaded.len(), 3);
        assert_eq!(
            loaded.iter().map(|r| r.index).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert_eq!(loaded, records);
    }

    #[test]
    fn bad_probability_sum_reports_line() {
        let text = "{\"schema\":\"classification\",\"version\":1}\n\
            {\"id\":\"a\",\"index\":0,\"payload\":{\"kind\":\"classification\",\"label\":0,\"probs\":[0.5,0.6]}}\n";
        let err = read_log(std::io::Cursor::new(text), PayloadKind::Classification).unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("line 2:"), "{msg}");
        assert!(msg.contains("probabilities sum to 1.1"), "{msg}");
    }

    #[test]
    fn duplicate_id_rejected() {
        let mut out = String::new();
        write_log(
            &mut out,
            PayloadKind::Classification,
            &[classification_record("a", 0, vec![0.7, 0.3], 0)],
        );
        out.push_str(&serde_json::to_string(&classification_record("a", 1, vec![0.7, 0.3], 0)).unwrap());
        out.push('\n');
        let err = read_log(std::io::Cursor::new(out), PayloadKind::Classification).unwrap_err();
        assert!(matches!(err, LogError::DuplicateId { line: 3, .. }), "{err}");
    }

    #[test]
    fn indices_must_increase() {
        let mut out = String::new();
        write_log(
            &mut out,
            PayloadKind::Classification,
            &[classification_record("a", 5, vec![0.7, 0.3], 0)],
        );
        out.push_str(&serde_json::to_string(&classification_record("b", 5, vec![0.7, 0.3], 0)).unwrap());
        out.push('\n');
        let err = read_log(std::io::Cursor::new(out), PayloadKind::Classification).unwrap_err();
        assert!(matches!(err, LogError::IndexNotIncreasing { .. }), "{err}");
    }

    #[test]
    fn schema_mismatch_rejected() {
        let text = "{\"schema\":\"gaussian\",\"version\":1}\n";
        let err = read_log(std::io::Cursor::new(text), PayloadKind::Classification).unwrap_err();
        assert!(matches!(err, LogError::SchemaMismatch { .. }));
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join(format!("surety-log-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.jsonl");
        let records = vec![
            classification_record("a", 0, vec![0.7, 0.3], 0).with_features(vec![1.0, -2.0]),
            classification_record("b", 1, vec![0.2, 0.8], 1)
                .with_tags(["night".to_string()].into_iter()),
        ];
        save_log(&path, PayloadKind::Classification, &records).unwrap();
        let loaded = load_log(&path, PayloadKind::Classification).unwrap();
        assert_eq!(loaded, records);
        // A second save produces identical bytes.
        let first = std::fs::read(&path).unwrap();
        save_log(&path, PayloadKind::Classification, &loaded).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
        std::fs::remove_dir_all(&dir).ok();
    }
}
