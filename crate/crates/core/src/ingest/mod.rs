//! Parsers for knowledge-source dumps, video metadata, corpus labels and
//! embedding files, plus the cached connector used for live source queries.
//!
//! Line-oriented parsers are total: every input line yields either a record
//! or a [`Reject`] carrying the line number and reason. Only unreadable
//! streams are fatal.

mod cache;
mod embeddings;
mod normalize;
mod originals;
mod sources;
mod videos;

use std::io::{BufRead, Write};

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use cache::{
    fetch_with_cache, ConnectorError, ConnectorResponse, DirectoryConnector, FetchCache, FetchOutcome, RetryPolicy,
    SourceConnector,
};
pub use embeddings::{parse_embeddings, write_embeddings, EmbeddingRecord, EmbeddingSet, EMBEDDING_DIM};
pub use normalize::PersonKey;
pub use originals::{parse_original_labels, OriginalLabel};
pub use sources::{parse_source_dump, parse_source_payload, BirthDate, SourceId, SourceRecord};
pub use videos::{parse_video_meta, VideoMeta};

/// One line that failed validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub input_file: String,
    pub line: usize,
    pub reason: String,
}

/// Output of a line-oriented parser.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub rejects: Vec<Reject>,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Parsed {
            records: Vec::new(),
            rejects: Vec::new(),
        }
    }
}

impl<T> Parsed<T> {
    pub fn lines(&self) -> usize {
        self.records.len() + self.rejects.len()
    }
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    /// Upper bound for birth and upload years.
    pub current_year: i32,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            current_year: chrono::Utc::now().year(),
        }
    }
}

/// Writes a rejects report as JSON Lines `{input_file, line, reason}`.
pub fn write_rejects<W: Write>(mut out: W, rejects: &[Reject]) -> Result<()> {
    for reject in rejects {
        serde_json::to_writer(&mut out, reject)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Iterates raw lines, handing each (1-based number, text) to `handle`.
/// Lines that are not valid UTF-8 are passed as `Err` with the reason.
pub(crate) fn for_each_line<R, F>(mut reader: R, mut handle: F) -> Result<()>
where
    R: BufRead,
    F: FnMut(usize, std::result::Result<&str, String>),
{
    let mut buf = Vec::new();
    let mut number = 0;
    loop {
        buf.clear();
        let read = reader.read_until(b'\n', &mut buf)?;
        if read == 0 {
            break;
        }
        number += 1;
        let mut bytes = buf.as_slice();
        if let Some(stripped) = bytes.strip_suffix(b"\n") {
            bytes = stripped;
        }
        if let Some(stripped) = bytes.strip_suffix(b"\r") {
            bytes = stripped;
        }
        match std::str::from_utf8(bytes) {
            Ok(text) => handle(number, Ok(text)),
            Err(e) => handle(number, Err(format!("invalid UTF-8: {e}"))),
        }
    }
    Ok(())
}

/// Parses a JSON object line and checks its key set is exactly `keys`.
pub(crate) fn object_with_keys(
    line: &str,
    keys: &[&str],
) -> std::result::Result<serde_json::Map<String, serde_json::Value>, String> {
    if line.trim().is_empty() {
        return Err("blank line".into());
    }
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| format!("malformed JSON: {e}"))?;
    let serde_json::Value::Object(map) = value else {
        return Err("record must be a JSON object".into());
    };
    for key in keys {
        if !map.contains_key(*key) {
            return Err(format!("missing key \"{key}\""));
        }
    }
    if let Some(extra) = map.keys().find(|k| !keys.contains(&k.as_str())) {
        return Err(format!("unexpected key \"{extra}\""));
    }
    Ok(map)
}
