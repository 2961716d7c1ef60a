//! Keyed-sequential dataset emulation.
//!
//! A [`KsdsStore`] keeps records in key order either in one ordered map
//! (`SingleTable`) or in one ordered map per record layout (`PerLayout`), the
//! latter read back through a k-way merge. A [`CacheSession`] loads a whole
//! store into memory and writes the changes back on flush.

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::copybook::LayoutError;
use crate::recio::{KeySpec, RecioError};

mod bench;
mod cache;
mod merge;
mod persist;
mod store;

pub use bench::{bench_scan, synthetic_record, synthetic_schema, synthetic_store, BenchRow, SYNTHETIC_KEY};
pub use cache::{cache_open, CacheSession, FlushSummary};
pub use persist::{read_lock_owner, LockOwner, LOCK_FILE, MANIFEST_FILE, MANIFEST_VERSION};
pub use store::KsdsStore;

/// Storage mapping of a store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// One ordered map of whole records.
    Single,
    /// One ordered map per record layout.
    PerLayout,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Single => "single",
            Backend::PerLayout => "perlayout",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "single" | "singletable" => Ok(Backend::Single),
            "perlayout" | "per-layout" => Ok(Backend::PerLayout),
            other => Err(format!("unknown backend `{other}` (expected single or perlayout)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartMode {
    /// Exact full-key match.
    Eq,
    /// First key whose prefix is >= the given prefix.
    Ge,
    /// First key whose prefix is > the given prefix.
    Gt,
}

impl FromStr for StartMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "=" | "eq" => Ok(StartMode::Eq),
            ">=" | "ge" => Ok(StartMode::Ge),
            ">" | "gt" => Ok(StartMode::Gt),
            other => Err(format!("unknown start mode `{other}` (expected =, >= or >)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpStats {
    pub sub_cursor_advances: u64,
    pub comparisons: u64,
    pub records_returned: u64,
}

/// Where a cursor sits: in the gap just before or just after a key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Gap {
    Before(Vec<u8>),
    After(Vec<u8>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Dir {
    Next,
    Prev,
}

/// Position between records plus the store generation it was taken at.
#[derive(Debug, Clone)]
pub struct Cursor {
    pub(crate) owner: u64,
    pub(crate) generation: u64,
    pub(crate) pos: Gap,
    pub(crate) merge: Option<merge::Merge>,
}

impl Cursor {
    pub(crate) fn new(owner: u64, generation: u64, pos: Gap) -> Cursor {
        Cursor { owner, generation, pos, merge: None }
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }
}

#[derive(Debug, Error)]
pub enum KsdsError {
    #[error("record not found for key {key}")]
    NotFound { key: String },
    #[error("duplicate key {key}")]
    DuplicateKey { key: String },
    #[error("end of file")]
    EndOfFile,
    #[error("cursor invalidated (taken at generation {cursor}, store is at {store})")]
    CursorInvalidated { cursor: u64, store: u64 },
    #[error("key argument of {got} bytes does not fit key length {expected}")]
    KeyLength { expected: usize, got: usize },
    #[error("record of {length} bytes is invalid: {reason}")]
    RecordLength { length: usize, reason: String },
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("store {path} is locked by pid {pid} on {host} since {acquired}")]
    ExclusiveLockHeld { path: PathBuf, pid: u32, host: String, acquired: String },
    #[error("store schema fingerprint {stored} does not match the given schema {given}")]
    SchemaMismatch { stored: String, given: String },
    #[error("store was created with {what} {stored}, opened with {given}")]
    StoreMismatch { what: &'static str, stored: String, given: String },
    #[error("store changed on disk since the cache was loaded (generation {loaded} -> {current})")]
    FlushConflict { loaded: u64, current: u64 },
    #[error("invalid store configuration: {0}")]
    Config(String),
    #[error("store is corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Recio(#[from] RecioError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Error kinds with the comparison semantics of keyed-file status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    NotFound,
    DuplicateKey,
    EndOfFile,
    CursorInvalidated,
    KeyLength,
    RecordLength,
    NoMatchingLayout,
    Other,
}

impl KsdsError {
    pub fn status(&self) -> Status {
        match self {
            KsdsError::NotFound { .. } => Status::NotFound,
            KsdsError::DuplicateKey { .. } => Status::DuplicateKey,
            KsdsError::EndOfFile => Status::EndOfFile,
            KsdsError::CursorInvalidated { .. } => Status::CursorInvalidated,
            KsdsError::KeyLength { .. } => Status::KeyLength,
            KsdsError::RecordLength { .. } => Status::RecordLength,
            KsdsError::Layout(_) => Status::NoMatchingLayout,
            _ => Status::Other,
        }
    }

    /// Two-character file status as a legacy program would see it.
    pub fn file_status(&self) -> &'static str {
        match self.status() {
            Status::EndOfFile => "10",
            Status::DuplicateKey => "22",
            Status::NotFound => "23",
            Status::KeyLength | Status::RecordLength => "44",
            Status::NoMatchingLayout => "34",
            Status::CursorInvalidated => "46",
            Status::Other => "30",
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, KsdsError::Io(_) | KsdsError::Corrupt(_) | KsdsError::Recio(_))
    }
}

pub(crate) fn key_hex(key: &[u8]) -> String {
    hex::encode_upper(key)
}

/// Keyed access as a translated program uses it.
pub trait KeyedDataset {
    fn key_spec(&self) -> KeySpec;

    /// Positions a cursor relative to `prefix` (at most the key length).
    fn start(&self, prefix: &[u8], mode: StartMode) -> Result<Cursor, KsdsError>;

    /// Cursor before the first record.
    fn first(&self) -> Cursor {
        self.start(&[], StartMode::Ge).expect("empty prefix is always valid")
    }

    /// Cursor after the last record.
    fn last(&self) -> Cursor {
        let key = vec![0xFF; self.key_spec().length];
        self.start(&key, StartMode::Gt).expect("full-length prefix is always valid")
    }

    fn read_next(&mut self, cursor: &mut Cursor) -> Result<Vec<u8>, KsdsError>;
    fn read_prev(&mut self, cursor: &mut Cursor) -> Result<Vec<u8>, KsdsError>;
    fn read(&self, key: &[u8]) -> Result<Vec<u8>, KsdsError>;
    fn write(&mut self, record: &[u8]) -> Result<(), KsdsError>;
    fn rewrite(&mut self, record: &[u8]) -> Result<(), KsdsError>;
    fn delete(&mut self, key: &[u8]) -> Result<(), KsdsError>;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn stats(&self) -> OpStats;
    /// Every record in key order.
    fn records(&self) -> Vec<Vec<u8>>;
    /// Deletes every record.
    fn clear(&mut self) -> Result<usize, KsdsError>;
}

/// Datasets sitting on a [`KsdsStore`], sharing its schema and key rules.
pub trait StoreBacked: KeyedDataset {
    fn backing(&self) -> &KsdsStore;
}

impl StoreBacked for KsdsStore {
    fn backing(&self) -> &KsdsStore {
        self
    }
}

impl StoreBacked for CacheSession {
    fn backing(&self) -> &KsdsStore {
        self.inner()
    }
}

impl StoreBacked for Dataset {
    fn backing(&self) -> &KsdsStore {
        self.store()
    }
}

/// Backend recorded in a store directory, if the directory holds a store.
pub fn stored_backend(dir: &Path) -> Result<Option<Backend>, KsdsError> {
    Ok(persist::read_manifest(dir)?.map(|m| m.backend))
}

/// A store or a cache session over one, chosen at open time.
pub enum Dataset {
    Store(KsdsStore),
    Cache(CacheSession),
}

impl Dataset {
    /// Persists and releases the store (flushing the cache first).
    pub fn close(self) -> Result<Option<FlushSummary>, KsdsError> {
        match self {
            Dataset::Store(s) => {
                s.close()?;
                Ok(None)
            }
            Dataset::Cache(c) => {
                let (summary, store) = c.flush()?;
                store.close()?;
                Ok(Some(summary))
            }
        }
    }

    pub fn store(&self) -> &KsdsStore {
        match self {
            Dataset::Store(s) => s,
            Dataset::Cache(c) => c.inner(),
        }
    }
}

macro_rules! delegate {
    ($self:ident, $d:ident => $e:expr) => {
        match $self {
            Dataset::Store($d) => $e,
            Dataset::Cache($d) => $e,
        }
    };
}

impl KeyedDataset for Dataset {
    fn key_spec(&self) -> KeySpec {
        delegate!(self, d => d.key_spec())
    }
    fn start(&self, prefix: &[u8], mode: StartMode) -> Result<Cursor, KsdsError> {
        delegate!(self, d => d.start(prefix, mode))
    }
    fn read_next(&mut self, cursor: &mut Cursor) -> Result<Vec<u8>, KsdsError> {
        delegate!(self, d => d.read_next(cursor))
    }
    fn read_prev(&mut self, cursor: &mut Cursor) -> Result<Vec<u8>, KsdsError> {
        delegate!(self, d => d.read_prev(cursor))
    }
    fn read(&self, key: &[u8]) -> Result<Vec<u8>, KsdsError> {
        delegate!(self, d => d.read(key))
    }
    fn write(&mut self, record: &[u8]) -> Result<(), KsdsError> {
        delegate!(self, d => d.write(record))
    }
    fn rewrite(&mut self, record: &[u8]) -> Result<(), KsdsError> {
        delegate!(self, d => d.rewrite(record))
    }
    fn delete(&mut self, key: &[u8]) -> Result<(), KsdsError> {
        delegate!(self, d => d.delete(key))
    }
    fn len(&self) -> usize {
        delegate!(self, d => d.len())
    }
    fn stats(&self) -> OpStats {
        delegate!(self, d => d.stats())
    }
    fn records(&self) -> Vec<Vec<u8>> {
        delegate!(self, d => d.records())
    }
    fn clear(&mut self) -> Result<usize, KsdsError> {
        delegate!(self, d => d.clear())
    }
}

#[cfg(test)]
mod tests;
