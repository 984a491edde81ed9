//! Newline-delimited JSON decision log.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Decider, Decision, ItemKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub item_id: String,
    pub kind: ItemKind,
    pub decision: Decision,
    pub decider: Decider,
    pub timestamp: DateTime<Utc>,
}

pub fn to_ndjson(records: &[LogRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn append_record(path: &Path, record: &LogRecord) -> Result<()> {
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(&line).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    crate::table::read_rows(path)?
        .into_iter()
        .map(|(line, row)| serde_json::from_str(&row).map_err(|e| Error::parse(path, line, e.to_string())))
        .collect()
}
