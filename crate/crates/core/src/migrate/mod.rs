//! Bulk movement between record files and keyed stores: load, unload,
//! byte-level validation and the two prune strategies.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Encoding;
use crate::ksds::{key_hex, KeyedDataset, KsdsError, StoreBacked};
use crate::recio::{read_records, write_records, RecioError, RecordFileSpec};

mod predicate;

pub use predicate::{BoundPredicate, Op, Predicate, PredicateError, Term};

#[derive(Debug, Error)]
pub enum MigrateError {
    #[error("store already holds {count} records; use replace to overwrite")]
    NotEmpty { count: usize },
    #[error("duplicate key {key} at records {first} and {second}")]
    DuplicateKey { key: String, first: usize, second: usize },
    #[error("record {ordinal}: {source}")]
    Record { ordinal: usize, source: KsdsError },
    #[error("file encoding {file} does not match store encoding {store}")]
    EncodingMismatch { file: Encoding, store: Encoding },
    #[error("record with key {key}: {source}")]
    Predicate { key: String, source: PredicateError },
    #[error(transparent)]
    BadPredicate(#[from] PredicateError),
    #[error(transparent)]
    Recio(#[from] RecioError),
    #[error(transparent)]
    Ksds(#[from] KsdsError),
}

impl MigrateError {
    pub fn is_io(&self) -> bool {
        match self {
            MigrateError::Recio(e) => !e.is_format(),
            MigrateError::Ksds(e) => e.is_io(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadSummary {
    pub records: usize,
    /// Every layout in schema order with its record count; a single
    /// `RECORDS` entry when layouts cannot be told apart.
    pub per_layout: Vec<(String, usize)>,
}

fn check_encoding<S: StoreBacked + ?Sized>(spec: &RecordFileSpec, store: &S) -> Result<(), MigrateError> {
    let encoding = store.backing().encoding();
    if spec.encoding != encoding {
        return Err(MigrateError::EncodingMismatch { file: spec.encoding, store: encoding });
    }
    Ok(())
}

/// Loads `records` (file order, 1-based ordinals in errors). Every record is
/// checked before the store is touched.
pub fn load_records<S: StoreBacked + ?Sized>(store: &mut S, records: &[Vec<u8>], replace: bool) -> Result<LoadSummary, MigrateError> {
    if !replace && !store.is_empty() {
        return Err(MigrateError::NotEmpty { count: store.len() });
    }
    let rules = store.backing().rules().clone();
    let schema = store.backing().schema().clone();
    let mut counts: Vec<usize> = vec![0; schema.layouts().len()];
    let mut unselected = 0;
    let mut seen: BTreeMap<&[u8], usize> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let ordinal = i + 1;
        match rules.check(r).map_err(|source| MigrateError::Record { ordinal, source })? {
            Some(layout) => counts[layout] += 1,
            None => unselected += 1,
        }
        if let Some(first) = seen.insert(rules.key_of(r), ordinal) {
            return Err(MigrateError::DuplicateKey { key: key_hex(rules.key_of(r)), first, second: ordinal });
        }
    }
    store.clear()?;
    for (i, r) in records.iter().enumerate() {
        store.write(r).map_err(|source| MigrateError::Record { ordinal: i + 1, source })?;
    }
    let per_layout = if schema.can_select() {
        schema.layouts().iter().map(|l| l.name.clone()).zip(counts).collect()
    } else {
        vec![("RECORDS".to_string(), unselected)]
    };
    Ok(LoadSummary { records: records.len(), per_layout })
}

pub fn load<S: StoreBacked + ?Sized>(file: &Path, spec: &RecordFileSpec, store: &mut S, replace: bool) -> Result<LoadSummary, MigrateError> {
    check_encoding(spec, store)?;
    let records = read_records(file, spec)?;
    load_records(store, &records, replace)
}

/// Writes every record in ascending key order; returns the count.
pub fn unload<S: KeyedDataset + ?Sized>(store: &S, spec: &RecordFileSpec, path: &Path) -> Result<usize, MigrateError> {
    Ok(write_records(path, spec, store.records())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    /// In the file, not in the store.
    Missing,
    /// In the store, not in the file.
    Extra,
    /// Same key, different bytes.
    Differing,
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntryKind::Missing => "missing",
            EntryKind::Extra => "extra",
            EntryKind::Differing => "differing",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationEntry {
    pub kind: EntryKind,
    pub key: String,
    /// 1-based position in the file, when the file has the record.
    pub ordinal: Option<usize>,
    pub file_hex: Option<String>,
    pub store_hex: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub file_records: usize,
    pub store_records: usize,
    pub entries: Vec<ValidationEntry>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, kind: EntryKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).count()
    }

    /// One line per entry, then a totals line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("{} key={}", e.kind, e.key));
            if let Some(o) = e.ordinal {
                out.push_str(&format!(" record={o}"));
            }
            if let Some(h) = &e.file_hex {
                out.push_str(&format!(" file={h}"));
            }
            if let Some(h) = &e.store_hex {
                out.push_str(&format!(" store={h}"));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "file={} store={} missing={} extra={} differing={}\n",
            self.file_records,
            self.store_records,
            self.count(EntryKind::Missing),
            self.count(EntryKind::Extra),
            self.count(EntryKind::Differing)
        ));
        out
    }
}

/// Pairs file and store records by key and compares raw bytes. Records too
/// short to hold the key are reported missing under their partial key.
pub fn validate_records<S: KeyedDataset + ?Sized>(records: &[Vec<u8>], store: &S) -> ValidationReport {
    let key = store.key_spec();
    let cut = |r: &[u8]| r[key.offset.min(r.len())..key.end().min(r.len())].to_vec();
    let mut by_key: BTreeMap<Vec<u8>, VecDeque<(usize, &Vec<u8>)>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_key.entry(cut(r)).or_default().push_back((i + 1, r));
    }
    let stored = store.records();
    let mut entries = Vec::new();
    for s in &stored {
        let k = cut(s);
        match by_key.get_mut(&k).and_then(VecDeque::pop_front) {
            None => entries.push(ValidationEntry {
                kind: EntryKind::Extra,
                key: key_hex(&k),
                ordinal: None,
                file_hex: None,
                store_hex: Some(hex::encode_upper(s)),
            }),
            Some((ordinal, f)) if f != s => entries.push(ValidationEntry {
                kind: EntryKind::Differing,
                key: key_hex(&k),
                ordinal: Some(ordinal),
                file_hex: Some(hex::encode_upper(f)),
                store_hex: Some(hex::encode_upper(s)),
            }),
            Some(_) => {}
        }
    }
    for (k, rest) in by_key {
        for (ordinal, f) in rest {
            entries.push(ValidationEntry {
                kind: EntryKind::Missing,
                key: key_hex(&k),
                ordinal: Some(ordinal),
                file_hex: Some(hex::encode_upper(f)),
                store_hex: None,
            });
        }
    }
    entries.sort_by(|a, b| (&a.key, a.ordinal, a.kind).cmp(&(&b.key, b.ordinal, b.kind)));
    ValidationReport { file_records: records.len(), store_records: stored.len(), entries }
}

pub fn validate<S: KeyedDataset + ?Sized>(file: &Path, spec: &RecordFileSpec, store: &S) -> Result<ValidationReport, MigrateError> {
    let records = read_records(file, spec)?;
    Ok(validate_records(&records, store))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Delete matching records where they are.
    InPlace,
    /// Unload everything, filter, empty the store and reload the survivors.
    Reload,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::InPlace => "inplace",
            Strategy::Reload => "reload",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "inplace" | "in-place" => Ok(Strategy::InPlace),
            "reload" | "unload-filter-reload" => Ok(Strategy::Reload),
            other => Err(format!("unknown strategy `{other}` (expected inplace or reload)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneSummary {
    pub strategy: Strategy,
    pub examined: usize,
    pub deleted: usize,
    pub retained: usize,
    pub delete_ops: usize,
    pub insert_ops: usize,
}

impl PruneSummary {
    pub fn operations(&self) -> usize {
        self.delete_ops + self.insert_ops
    }
}

/// Removes every record matching `predicate`. The predicate is evaluated on
/// all records first, so a decode failure leaves the store untouched.
pub fn prune<S: StoreBacked + ?Sized>(store: &mut S, predicate: &Predicate, strategy: Strategy) -> Result<PruneSummary, MigrateError> {
    let bound = predicate.bind(store.backing().schema(), store.backing().encoding())?;
    let records = store.records();
    let rules = store.backing().rules().clone();
    let mut doomed = Vec::new();
    let mut kept = Vec::new();
    for r in &records {
        let hit = bound
            .matches(r)
            .map_err(|source| MigrateError::Predicate { key: key_hex(rules.key_of(r)), source })?;
        if hit {
            doomed.push(r);
        } else {
            kept.push(r);
        }
    }
    let mut summary = PruneSummary {
        strategy,
        examined: records.len(),
        deleted: doomed.len(),
        retained: kept.len(),
        delete_ops: 0,
        insert_ops: 0,
    };
    match strategy {
        Strategy::InPlace => {
            for r in doomed {
                store.delete(rules.key_of(r))?;
                summary.delete_ops += 1;
            }
        }
        Strategy::Reload => {
            summary.delete_ops = store.clear()?;
            for r in kept {
                store.write(r)?;
                summary.insert_ops += 1;
            }
        }
    }
    Ok(summary)
}
