//! Helpers shared by the TSV artifact readers and writers.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Reads a UTF-8 text file and yields `(line_number, line)` pairs for every
/// non-blank line. Line numbers are 1-based.
pub(crate) fn read_rows(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Splits a row into exactly `n` tab-separated fields. A missing trailing
/// field is treated as empty.
pub(crate) fn fields<'a>(path: &Path, line: usize, row: &'a str, n: usize) -> Result<Vec<&'a str>> {
    let mut out: Vec<&str> = row.split('\t').collect();
    if out.len() == n - 1 {
        out.push("");
    }
    if out.len() != n {
        return Err(Error::parse(
            path,
            line,
            format!("expected {n} tab-separated fields, found {}", out.len()),
        ));
    }
    Ok(out)
}

pub(crate) fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {what} `{s}`")))
}

pub(crate) fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty())
}

/// Shortest round-trip formatting for floats, so tables re-read identically.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
