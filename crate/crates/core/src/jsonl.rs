use std::io::{self, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

/// A parsed JSONL file: optional leading schema header plus records.
pub(crate) struct JsonlFile<T> {
    pub header: Option<serde_json::Value>,
    pub records: Vec<(usize, T)>,
}

#[derive(Debug)]
pub(crate) struct JsonlLineError {
    pub line: usize,
    pub message: String,
}

/// Parses JSONL text. A first non-blank object carrying a `"schema"` key and
/// none of the record's required keys is returned as the header.
pub(crate) fn parse<T: DeserializeOwned>(text: &str, record_key: &str) -> Result<JsonlFile<T>, JsonlLineError> {
    let mut header = None;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| JsonlLineError {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if header.is_none() && records.is_empty() && value.get("schema").is_some() && value.get(record_key).is_none() {
            header = Some(value);
            continue;
        }
        let record = serde_json::from_value(value).map_err(|e| JsonlLineError {
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push((idx + 1, record));
    }
    Ok(JsonlFile { header, records })
}

pub(crate) fn write_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}
