//! Delimited interaction logs.
//!
//! One event per row after a header row. The first three columns are
//! `user_id`, `item_id` and `timestamp` (integer seconds); every further
//! column is a context field named by its header. Multi-valued cells separate
//! categories with the intra-field delimiter, and an empty cell means the
//! field is unknown for that event.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use arnn_core::data::{Attributes, RawEvent};

use crate::error::{AppError, Result};

pub const FIXED_COLUMNS: [&str; 3] = ["user_id", "item_id", "timestamp"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dialect {
    pub delimiter: u8,
    pub intra_delimiter: char,
}

impl Default for Dialect {
    fn default() -> Self {
        Self {
            delimiter: b'\t',
            intra_delimiter: '|',
        }
    }
}

/// Events of a log together with its declared context fields.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub fields: Vec<String>,
    pub events: Vec<RawEvent>,
}

pub fn read_events(path: &Path, dialect: Dialect) -> Result<EventLog> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    parse_events(file, path, dialect)
}

/// Parses a log from any reader. `origin` only labels errors.
pub fn parse_events<R: Read>(input: R, origin: &Path, dialect: Dialect) -> Result<EventLog> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(dialect.delimiter)
        .has_headers(true)
        .quoting(false)
        .flexible(false)
        .from_reader(input);
    let parse_err = |line: u64, message: String| AppError::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 3 || names[..3] != FIXED_COLUMNS {
        return Err(parse_err(
            1,
            format!(
                "header must start with {}, found {}",
                FIXED_COLUMNS.join(","),
                names.join(",")
            ),
        ));
    }
    let fields: Vec<String> = names[3..].iter().map(|s| s.to_string()).collect();
    for (i, f) in fields.iter().enumerate() {
        if f.is_empty() || fields[..i].contains(f) {
            return Err(parse_err(1, format!("bad or repeated field name {f:?}")));
        }
    }

    let mut events = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let user_id = record[0].to_string();
        let item_id = record[1].to_string();
        if user_id.is_empty() || item_id.is_empty() {
            return Err(parse_err(line, "empty user_id or item_id".into()));
        }
        let timestamp: u64 = record[2].trim().parse().map_err(|_| {
            parse_err(
                line,
                format!("timestamp {:?} is not a non-negative integer", &record[2]),
            )
        })?;
        let mut attributes = Attributes::new();
        for (name, cell) in fields.iter().zip(record.iter().skip(3)) {
            let values: Vec<String> = cell
                .split(dialect.intra_delimiter)
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(String::from)
                .collect();
            if !values.is_empty() {
                attributes.insert(name.clone(), values);
            }
        }
        events.push(RawEvent {
            user_id,
            item_id,
            timestamp,
            attributes,
        });
    }
    Ok(EventLog { fields, events })
}

pub fn write_events(path: &Path, log: &EventLog, dialect: Dialect) -> Result<()> {
    let mut out = Vec::new();
    render_events(&mut out, log, dialect);
    let mut file = File::create(path).map_err(|e| AppError::io(path, e))?;
    file.write_all(&out).map_err(|e| AppError::io(path, e))
}

fn render_events(out: &mut Vec<u8>, log: &EventLog, dialect: Dialect) {
    let sep = dialect.delimiter as char;
    let intra = dialect.intra_delimiter.to_string();
    let mut header: Vec<&str> = FIXED_COLUMNS.to_vec();
    header.extend(log.fields.iter().map(String::as_str));
    out.extend_from_slice(header.join(&sep.to_string()).as_bytes());
    out.push(b'\n');
    for e in &log.events {
        let mut row = vec![
            e.user_id.clone(),
            e.item_id.clone(),
            e.timestamp.to_string(),
        ];
        for f in &log.fields {
            row.push(
                e.attributes
                    .get(f)
                    .map(|v| v.join(&intra))
                    .unwrap_or_default(),
            );
        }
        out.extend_from_slice(row.join(&sep.to_string()).as_bytes());
        out.push(b'\n');
    }
}
