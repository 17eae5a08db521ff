//! Directory-backed response cache in front of knowledge-source connectors.
//!
//! Entries live at `<dir>/<source>/<sha256(person_key)>.{hit,miss}`. A `.hit`
//! file holds the raw response bytes exactly as received, a `.miss` file
//! records that the source has no such person. Entries are written to a
//! temporary file and renamed into place, so readers never see partial data.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use sha2::{Digest, Sha256};

use super::{parse_source_payload, ParseOptions, PersonKey, SourceId, SourceRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConnectorResponse {
    Found(Vec<u8>),
    NotFound,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConnectorError {
    Timeout,
    Http(u16),
    Transport(String),
}

impl fmt::Display for ConnectorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConnectorError::Timeout => f.write_str("timeout"),
            ConnectorError::Http(status) => write!(f, "HTTP {status}"),
            ConnectorError::Transport(msg) => write!(f, "transport error: {msg}"),
        }
    }
}

/// A knowledge source that can be queried by person name.
pub trait SourceConnector {
    fn source_id(&self) -> SourceId;
    fn get_by_name(&self, key: &PersonKey) -> std::result::Result<ConnectorResponse, ConnectorError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchOutcome {
    Found(SourceRecord),
    Absent,
    /// The source could not be consulted or answered with garbage. Never
    /// converted into a label.
    Unavailable {
        reason: String,
    },
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

pub struct FetchCache {
    dir: PathBuf,
    retry: RetryPolicy,
    parse: ParseOptions,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl FetchCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FetchCache {
            dir: dir.into(),
            retry: RetryPolicy::default(),
            parse: ParseOptions::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_parse_options(mut self, parse: ParseOptions) -> Self {
        self.parse = parse;
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_stem(&self, source: SourceId, key: &PersonKey) -> PathBuf {
        let digest = Sha256::digest(key.as_str().as_bytes());
        self.dir.join(source.token()).join(hex::encode(digest))
    }

    fn write_entry(&self, path: &Path, bytes: &[u8]) -> Result<()> {
        let parent = path.parent().expect("cache entries live in a source directory");
        fs::create_dir_all(parent).map_err(|e| Error::at_path(parent, e))?;
        let tmp = parent.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let write = || -> io::Result<()> {
            let mut file = fs::File::create(&tmp)?;
            file.write_all(bytes)?;
            file.sync_all()?;
            fs::rename(&tmp, path)
        };
        write().map_err(|e| {
            let _ = fs::remove_file(&tmp);
            Error::at_path(path, e)
        })
    }

    fn decode(&self, source: SourceId, key: &PersonKey, bytes: &[u8]) -> FetchOutcome {
        match parse_source_payload(bytes, source, &self.parse) {
            Ok(mut record) => {
                record.person_key = key.clone();
                FetchOutcome::Found(record)
            }
            Err(reason) => FetchOutcome::Unavailable {
                reason: format!("malformed payload: {reason}"),
            },
        }
    }

    /// Looks `key` up in the cache, querying `connector` only on a miss.
    pub fn fetch(&self, connector: &dyn SourceConnector, key: &PersonKey) -> Result<FetchOutcome> {
        let source = connector.source_id();
        let stem = self.entry_stem(source, key);
        let hit = stem.with_extension("hit");
        let miss = stem.with_extension("miss");
        if miss.exists() {
            return Ok(FetchOutcome::Absent);
        }
        match fs::read(&hit) {
            Ok(bytes) => return Ok(self.decode(source, key, &bytes)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::at_path(&hit, e)),
        }

        let mut last_error = None;
        for attempt in 0..self.retry.attempts {
            if attempt > 0 {
                std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 1));
            }
            match connector.get_by_name(key) {
                Ok(ConnectorResponse::Found(bytes)) => {
                    self.write_entry(&hit, &bytes)?;
                    return Ok(self.decode(source, key, &bytes));
                }
                Ok(ConnectorResponse::NotFound) | Err(ConnectorError::Http(404)) => {
                    self.write_entry(&miss, b"")?;
                    return Ok(FetchOutcome::Absent);
                }
                Err(e) => {
                    log::warn!("{source} lookup of \"{key}\" failed (attempt {}): {e}", attempt + 1);
                    last_error = Some(e);
                }
            }
        }
        Ok(FetchOutcome::Unavailable {
            reason: match last_error {
                Some(e) => format!("unavailable after {} attempts: {e}", self.retry.attempts),
                None => "unavailable: no attempts configured".into(),
            },
        })
    }

    /// Raw bytes stored for `key`, if any. Kept for debugging malformed payloads.
    pub fn raw_entry(&self, source: SourceId, key: &PersonKey) -> Option<Vec<u8>> {
        fs::read(self.entry_stem(source, key).with_extension("hit")).ok()
    }
}

pub fn fetch_with_cache(cache: &FetchCache, connector: &dyn SourceConnector, key: &PersonKey) -> Result<FetchOutcome> {
    cache.fetch(connector, key)
}

/// Offline connector serving `<root>/<person key>.json` files, e.g. a frozen
/// mirror of source responses.
pub struct DirectoryConnector {
    root: PathBuf,
    source: SourceId,
}

impl DirectoryConnector {
    pub fn new(root: impl Into<PathBuf>, source: SourceId) -> Self {
        DirectoryConnector {
            root: root.into(),
            source,
        }
    }
}

impl SourceConnector for DirectoryConnector {
    fn source_id(&self) -> SourceId {
        self.source
    }

    fn get_by_name(&self, key: &PersonKey) -> std::result::Result<ConnectorResponse, ConnectorError> {
        let path = self.root.join(format!("{}.json", key.as_str()));
        match fs::read(&path) {
            Ok(bytes) => Ok(ConnectorResponse::Found(bytes)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(ConnectorResponse::NotFound),
            Err(e) => Err(ConnectorError::Transport(e.to_string())),
        }
    }
}
