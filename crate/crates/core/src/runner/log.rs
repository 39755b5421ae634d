//! Append-only JSONL run log.
//!
//! Each line is one self-contained record. A crash can only leave a partial
//! final line, which [`read_log`] reports and the writer truncates away.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{Classification, Selection};
use crate::backends::{now_ms, ChatExchange};
use crate::protocol::{Phase, RunConfig, Trial};
use crate::templates::TemplateId;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("line {line}: schema version {found}, expected {SCHEMA_VERSION}")]
    SchemaMismatch { line: usize, found: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogRecord {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial_id: Option<String>,
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub body: RecordBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum RecordBody {
    /// First line of every log.
    Meta { config: RunConfig, planned_trials: usize, tool_version: String },
    Trial { trial: Trial },
    Exchange { attempt: u32, exchange: ChatExchange },
    Outcome(OutcomeRecord),
    /// A trial that could not be completed; it has no outcome.
    Error { attempt: u32, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub category: String,
    pub phase: Phase,
    pub template_id: TemplateId,
    pub rep_index: u32,
    /// Number of model calls made, including the format-reminder retry.
    pub attempts: u32,
    /// The reply that was scored.
    pub response: String,
    pub selection: Selection,
    pub classification: Classification,
}

impl RunLogRecord {
    pub fn new(trial_id: Option<&str>, body: RecordBody) -> Self {
        RunLogRecord {
            schema_version: SCHEMA_VERSION,
            trial_id: trial_id.map(str::to_string),
            timestamp_ms: now_ms(),
            body,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.body {
            RecordBody::Meta { .. } => "meta",
            RecordBody::Trial { .. } => "trial",
            RecordBody::Exchange { .. } => "exchange",
            RecordBody::Outcome(_) => "outcome",
            RecordBody::Error { .. } => "error",
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("log records always serialize");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunLog {
    pub records: Vec<RunLogRecord>,
    /// A partial last line was found and ignored.
    pub torn_tail: bool,
    /// Length of the well-formed prefix in bytes.
    pub valid_len: u64,
}

impl RunLog {
    pub fn meta(&self) -> Option<&RunConfig> {
        self.records.iter().find_map(|r| match &r.body {
            RecordBody::Meta { config, .. } => Some(config),
            _ => None,
        })
    }

    /// Last outcome per trial id.
    pub fn outcomes(&self) -> std::collections::BTreeMap<&str, &OutcomeRecord> {
        let mut out = std::collections::BTreeMap::new();
        for r in &self.records {
            if let (RecordBody::Outcome(o), Some(id)) = (&r.body, &r.trial_id) {
                out.insert(id.as_str(), o);
            }
        }
        out
    }
}

/// Parses log text. Only the final line may be malformed, and only if it
/// lacks its terminating newline.
pub fn parse_log(text: &str) -> Result<RunLog, LogError> {
    let mut log = RunLog::default();
    let mut offset = 0usize;
    let mut lines = text.split_inclusive('\n').enumerate().peekable();
    while let Some((i, raw)) = lines.next() {
        let complete = raw.ends_with('\n');
        let line = raw.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            offset += raw.len();
            continue;
        }
        match serde_json::from_str::<RunLogRecord>(line) {
            Ok(r) if r.schema_version != SCHEMA_VERSION => {
                return Err(LogError::SchemaMismatch {
                    line: i + 1,
                    found: r.schema_version,
                })
            }
            Ok(r) if complete => log.records.push(r),
            Ok(_) | Err(_) if !complete && lines.peek().is_none() => {
                log.torn_tail = true;
                break;
            }
            Ok(_) => unreachable!("incomplete line that is not last"),
            Err(e) => {
                return Err(LogError::Corrupt {
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
        offset += raw.len();
    }
    log.valid_len = offset as u64;
    Ok(log)
}

pub fn read_log(path: &Path) -> Result<RunLog, LogError> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_log(&text)
}

/// Destination for log records.
pub trait RecordSink {
    fn append(&mut self, record: &RunLogRecord) -> io::Result<()>;
}

impl RecordSink for Vec<RunLogRecord> {
    fn append(&mut self, record: &RunLogRecord) -> io::Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Appends records to a file, one flushed line each.
pub struct LogWriter {
    out: BufWriter<File>,
}

impl LogWriter {
    /// Opens `path` for appending, first cutting it back to `valid_len`
    /// bytes so a torn line does not end up in the middle of the log.
    pub fn open(path: &Path, valid_len: Option<u64>) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        if let Some(len) = valid_len {
            if file.metadata()?.len() > len {
                file.set_len(len)?;
            }
        }
        Ok(LogWriter {
            out: BufWriter::new(file),
        })
    }
}

impl RecordSink for LogWriter {
    fn append(&mut self, record: &RunLogRecord) -> io::Result<()> {
        self.out.write_all(record.to_line().as_bytes())?;
        self.out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::ModelEndpoint;

    fn meta() -> RunLogRecord {
        RunLogRecord::new(
            None,
            RecordBody::Meta {
                config: RunConfig::new("r", ModelEndpoint::mock("m", crate::backends::MockSpec::uniform(0.5, 0.5, 0.0))),
                planned_trials: 0,
                tool_version: "t".into(),
            },
        )
    }

    fn error(id: &str) -> RunLogRecord {
        RunLogRecord::new(
            Some(id),
            RecordBody::Error {
                attempt: 0,
                message: "boom".into(),
            },
        )
    }

    #[test]
    fn round_trip_lines() {
        let text: String = [meta(), error("a")].iter().map(|r| r.to_line()).collect();
        let log = parse_log(&text).unwrap();
        assert_eq!(log.records.len(), 2);
        assert!(!log.torn_tail);
        assert_eq!(log.valid_len as usize, text.len());
        assert_eq!(log.records[1].kind(), "error");
        assert!(text.contains("\"kind\":\"error\""));
    }

    #[test]
    fn torn_tail_is_dropped() {
        let full = meta().to_line() + &error("a").to_line();
        let cut = &full[..full.len() - 7];
        let log = parse_log(cut).unwrap();
        assert!(log.torn_tail);
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.valid_len as usize, meta().to_line().len());
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let text = meta().to_line() + "{not json\n" + &error("a").to_line();
        assert!(matches!(parse_log(&text), Err(LogError::Corrupt { line: 2, .. })));
    }

    #[test]
    fn schema_version_checked() {
        let mut r = error("a");
        r.schema_version = 99;
        assert!(matches!(
            parse_log(&r.to_line()),
            Err(LogError::SchemaMismatch { found: 99, .. })
        ));
    }

    #[test]
    fn writer_truncates_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        std::fs::write(&path, meta().to_line() + "{\"schema_ver").unwrap();
        let log = read_log(&path).unwrap();
        let mut w = LogWriter::open(&path, Some(log.valid_len)).unwrap();
        w.append(&error("b")).unwrap();
        drop(w);
        let again = read_log(&path).unwrap();
        assert!(!again.torn_tail);
        assert_eq!(again.records.len(), 2);
    }
}
