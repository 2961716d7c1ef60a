use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use super::merge::{Map, Merge};
use super::persist::{self, Manifest, StoreLock};
use super::{key_hex, Backend, Cursor, Dir, Gap, KeyedDataset, KsdsError, OpStats, StartMode};
use crate::codec::Encoding;
use crate::copybook::CopybookSchema;
use crate::recio::KeySpec;

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

pub(crate) fn next_id() -> u64 {
    NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed)
}

/// Record acceptance rules shared by every backend.
#[derive(Debug, Clone)]
pub(crate) struct Rules {
    pub schema: CopybookSchema,
    pub key: KeySpec,
    pub encoding: Encoding,
    min_length: usize,
}

impl Rules {
    pub fn new(schema: CopybookSchema, key: KeySpec, encoding: Encoding) -> Result<Rules, KsdsError> {
        key.check(&schema).map_err(KsdsError::Config)?;
        let min_length = schema.layouts().iter().map(|l| l.length).min().unwrap_or(0);
        Ok(Rules { schema, key, encoding, min_length })
    }

    /// Validates a record, returning its layout index when one can be chosen.
    pub fn check(&self, record: &[u8]) -> Result<Option<usize>, KsdsError> {
        let bad = |reason: String| KsdsError::RecordLength { length: record.len(), reason };
        if record.len() < self.key.end() {
            return Err(bad(format!("shorter than key end {}", self.key.end())));
        }
        if record.len() > self.schema.total_length() {
            return Err(bad(format!("longer than the schema's {} bytes", self.schema.total_length())));
        }
        if !self.schema.can_select() {
            if record.len() < self.min_length {
                return Err(bad(format!("shorter than the smallest layout ({} bytes)", self.min_length)));
            }
            return Ok(None);
        }
        let index = self.schema.select_layout_index(record, self.encoding)?;
        let layout = &self.schema.layouts()[index];
        if record.len() < layout.length {
            return Err(bad(format!("shorter than layout `{}` ({} bytes)", layout.name, layout.length)));
        }
        Ok(Some(index))
    }

    pub fn key_of<'a>(&self, record: &'a [u8]) -> &'a [u8] {
        &record[self.key.offset..self.key.end()]
    }

    pub fn check_key(&self, key: &[u8]) -> Result<(), KsdsError> {
        if key.len() != self.key.length {
            return Err(KsdsError::KeyLength { expected: self.key.length, got: key.len() });
        }
        Ok(())
    }

    /// Cursor gap for a START request.
    pub fn start_gap(&self, prefix: &[u8], mode: StartMode) -> Result<Gap, KsdsError> {
        if prefix.len() > self.key.length || (mode == StartMode::Eq && prefix.len() != self.key.length) {
            return Err(KsdsError::KeyLength { expected: self.key.length, got: prefix.len() });
        }
        Ok(match mode {
            StartMode::Eq | StartMode::Ge => Gap::Before(prefix.to_vec()),
            StartMode::Gt => {
                let mut k = prefix.to_vec();
                k.resize(self.key.length, 0xFF);
                Gap::After(k)
            }
        })
    }
}

struct StoreDir {
    path: PathBuf,
    manifest: Manifest,
    _lock: StoreLock,
}

/// Keyed store over one or many ordered maps.
pub struct KsdsStore {
    id: u64,
    rules: Rules,
    backend: Backend,
    maps: Vec<Map>,
    /// Table index of each key (PerLayout only).
    residence: HashMap<Vec<u8>, usize>,
    generation: u64,
    stats: OpStats,
    dir: Option<StoreDir>,
}

impl KsdsStore {
    /// A store that lives only in memory.
    pub fn in_memory(schema: CopybookSchema, key: KeySpec, backend: Backend, encoding: Encoding) -> Result<KsdsStore, KsdsError> {
        let rules = Rules::new(schema, key, encoding)?;
        if backend == Backend::PerLayout && !rules.schema.can_select() {
            return Err(KsdsError::Config(format!(
                "perlayout backend needs a discriminator rule for {} layouts",
                rules.schema.layouts().len()
            )));
        }
        let tables = match backend {
            Backend::Single => 1,
            Backend::PerLayout => rules.schema.layouts().len(),
        };
        Ok(KsdsStore {
            id: next_id(),
            rules,
            backend,
            maps: vec![Map::new(); tables],
            residence: HashMap::new(),
            generation: 0,
            stats: OpStats::default(),
            dir: None,
        })
    }

    /// Opens the store in `location`, creating it if absent. The handle holds
    /// the directory's lock until dropped.
    pub fn open(location: &Path, schema: CopybookSchema, key: KeySpec, backend: Backend, encoding: Encoding) -> Result<KsdsStore, KsdsError> {
        fs::create_dir_all(location)?;
        let lock = StoreLock::acquire(location)?;
        let mut store = KsdsStore::in_memory(schema, key, backend, encoding)?;
        let fingerprint = store.rules.schema.fingerprint();
        let manifest = match persist::read_manifest(location)? {
            Some(m) => {
                if m.schema_fingerprint != fingerprint {
                    return Err(KsdsError::SchemaMismatch { stored: m.schema_fingerprint, given: fingerprint });
                }
                let mismatch = |what, stored: String, given: String| Err(KsdsError::StoreMismatch { what, stored, given });
                if m.backend != backend {
                    return mismatch("backend", m.backend.to_string(), backend.to_string());
                }
                if (m.key_offset, m.key_length) != (key.offset, key.length) {
                    return mismatch("key", format!("{},{}", m.key_offset, m.key_length), key.to_string());
                }
                if m.encoding != encoding {
                    return mismatch("encoding", m.encoding.to_string(), encoding.to_string());
                }
                store.load_tables(location, &m)?;
                store.generation = m.generation;
                m
            }
            None => {
                let m = Manifest::new(backend, fingerprint, (key.offset, key.length), encoding);
                persist::write_store(location, m, &store.table_names(), &store.maps, store.rules.schema.total_length())?
            }
        };
        store.dir = Some(StoreDir { path: location.to_path_buf(), manifest, _lock: lock });
        Ok(store)
    }

    fn load_tables(&mut self, location: &Path, m: &Manifest) -> Result<(), KsdsError> {
        let names = self.table_names();
        let listed: Vec<String> = m.tables.iter().map(|t| t.name.clone()).collect();
        if listed != names {
            return Err(KsdsError::Corrupt(format!("manifest tables {listed:?} do not match {names:?}")));
        }
        let tables = persist::read_tables(location, m, self.rules.schema.total_length())?;
        for (index, records) in tables.into_iter().enumerate() {
            let mut previous: Option<Vec<u8>> = None;
            for record in records {
                let corrupt = |why: &str| KsdsError::Corrupt(format!("table {}: {why}", names[index]));
                self.rules.check(&record).map_err(|e| corrupt(&e.to_string()))?;
                let key = self.rules.key_of(&record).to_vec();
                if previous.as_ref().is_some_and(|p| *p >= key) {
                    return Err(corrupt("keys out of order"));
                }
                if self.backend == Backend::PerLayout && self.residence.insert(key.clone(), index).is_some() {
                    return Err(corrupt("key stored in two tables"));
                }
                previous = Some(key.clone());
                self.maps[index].insert(key, record);
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> &CopybookSchema {
        &self.rules.schema
    }

    pub fn encoding(&self) -> Encoding {
        self.rules.encoding
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn location(&self) -> Option<&Path> {
        self.dir.as_ref().map(|d| d.path.as_path())
    }

    /// Generation last written to (or read from) the manifest.
    pub(crate) fn persisted_generation(&self) -> Option<u64> {
        self.dir.as_ref().map(|d| d.manifest.generation)
    }

    pub(crate) fn rules(&self) -> &Rules {
        &self.rules
    }

    pub fn reset_stats(&mut self) {
        self.stats = OpStats::default();
    }

    /// Names of the underlying tables: the layout names for PerLayout, a
    /// single `RECORDS` table otherwise.
    pub fn table_names(&self) -> Vec<String> {
        match self.backend {
            Backend::Single => vec!["RECORDS".into()],
            Backend::PerLayout => self.rules.schema.layouts().iter().map(|l| l.name.clone()).collect(),
        }
    }

    /// Record count of each table.
    pub fn table_counts(&self) -> Vec<(String, usize)> {
        self.table_names().into_iter().zip(self.maps.iter().map(|m| m.len())).collect()
    }

    /// Keys held by one table, in order.
    pub fn table_keys(&self, table: usize) -> Vec<Vec<u8>> {
        self.maps[table].keys().cloned().collect()
    }

    /// Writes the current contents to the store directory.
    pub fn sync(&mut self) -> Result<(), KsdsError> {
        let Some(dir) = &mut self.dir else { return Ok(()) };
        let mut manifest = dir.manifest.clone();
        manifest.generation = self.generation;
        let names = match self.backend {
            Backend::Single => vec!["RECORDS".to_string()],
            Backend::PerLayout => self.rules.schema.layouts().iter().map(|l| l.name.clone()).collect(),
        };
        dir.manifest = persist::write_store(&dir.path, manifest, &names, &self.maps, self.rules.schema.total_length())?;
        Ok(())
    }

    /// Syncs and releases the lock.
    pub fn close(mut self) -> Result<(), KsdsError> {
        self.sync()
    }

    fn table_of(&self, key: &[u8]) -> Option<usize> {
        match self.backend {
            Backend::Single => self.maps[0].contains_key(key).then_some(0),
            Backend::PerLayout => self.residence.get(key).copied(),
        }
    }

    fn target_table(&self, layout: Option<usize>) -> usize {
        match self.backend {
            Backend::Single => 0,
            Backend::PerLayout => layout.expect("perlayout schemas always select"),
        }
    }

    fn mutated(&mut self) {
        self.generation += 1;
    }

    fn check_cursor(&self, cursor: &Cursor) -> Result<(), KsdsError> {
        if cursor.owner != self.id || cursor.generation != self.generation {
            return Err(KsdsError::CursorInvalidated { cursor: cursor.generation, store: self.generation });
        }
        Ok(())
    }

    fn step(&mut self, cursor: &mut Cursor, dir: Dir) -> Result<Vec<u8>, KsdsError> {
        self.check_cursor(cursor)?;
        if cursor.merge.as_ref().is_none_or(|m| m.dir != dir) {
            cursor.merge = Some(Merge::build(&self.maps, dir, &cursor.pos, &mut self.stats));
        }
        let merge = cursor.merge.as_mut().expect("merge built above");
        let (_, key, record) = merge.next(&self.maps, &mut self.stats).ok_or(KsdsError::EndOfFile)?;
        cursor.pos = match dir {
            Dir::Next => Gap::After(key),
            Dir::Prev => Gap::Before(key),
        };
        self.stats.records_returned += 1;
        Ok(record)
    }
}

impl KeyedDataset for KsdsStore {
    fn key_spec(&self) -> KeySpec {
        self.rules.key
    }

    fn start(&self, prefix: &[u8], mode: StartMode) -> Result<Cursor, KsdsError> {
        let gap = self.rules.start_gap(prefix, mode)?;
        if mode == StartMode::Eq && self.table_of(prefix).is_none() {
            return Err(KsdsError::NotFound { key: key_hex(prefix) });
        }
        Ok(Cursor::new(self.id, self.generation, gap))
    }

    fn read_next(&mut self, cursor: &mut Cursor) -> Result<Vec<u8>, KsdsError> {
        self.step(cursor, Dir::Next)
    }

    fn read_prev(&mut self, cursor: &mut Cursor) -> Result<Vec<u8>, KsdsError> {
        self.step(cursor, Dir::Prev)
    }

    fn read(&self, key: &[u8]) -> Result<Vec<u8>, KsdsError> {
        self.rules.check_key(key)?;
        self.table_of(key)
            .map(|t| self.maps[t][key].clone())
            .ok_or_else(|| KsdsError::NotFound { key: key_hex(key) })
    }

    fn write(&mut self, record: &[u8]) -> Result<(), KsdsError> {
        let layout = self.rules.check(record)?;
        let key = self.rules.key_of(record).to_vec();
        if self.table_of(&key).is_some() {
            return Err(KsdsError::DuplicateKey { key: key_hex(&key) });
        }
        let table = self.target_table(layout);
        if self.backend == Backend::PerLayout {
            self.residence.insert(key.clone(), table);
        }
        self.maps[table].insert(key, record.to_vec());
        self.mutated();
        Ok(())
    }

    fn rewrite(&mut self, record: &[u8]) -> Result<(), KsdsError> {
        let layout = self.rules.check(record)?;
        let key = self.rules.key_of(record).to_vec();
        let old = self.table_of(&key).ok_or_else(|| KsdsError::NotFound { key: key_hex(&key) })?;
        let table = self.target_table(layout);
        if table != old {
            self.maps[old].remove(&key);
            self.residence.insert(key.clone(), table);
        }
        self.maps[table].insert(key, record.to_vec());
        self.mutated();
        Ok(())
    }

    fn delete(&mut self, key: &[u8]) -> Result<(), KsdsError> {
        self.rules.check_key(key)?;
        let table = self.table_of(key).ok_or_else(|| KsdsError::NotFound { key: key_hex(key) })?;
        self.maps[table].remove(key);
        self.residence.remove(key);
        self.mutated();
        Ok(())
    }

    fn len(&self) -> usize {
        self.maps.iter().map(|m| m.len()).sum()
    }

    fn stats(&self) -> OpStats {
        self.stats
    }

    fn records(&self) -> Vec<Vec<u8>> {
        let mut all: Vec<(&Vec<u8>, &Vec<u8>)> = self.maps.iter().flat_map(|m| m.iter()).collect();
        all.sort_unstable_by(|a, b| a.0.cmp(b.0));
        all.into_iter().map(|(_, v)| v.clone()).collect()
    }

    fn clear(&mut self) -> Result<usize, KsdsError> {
        let n = self.len();
        for m in &mut self.maps {
            m.clear();
        }
        self.residence.clear();
        if n > 0 {
            self.mutated();
        }
        Ok(n)
    }
}
