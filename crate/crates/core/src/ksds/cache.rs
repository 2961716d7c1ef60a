use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::merge::{Map, Merge};
use super::persist;
use super::store::next_id;
use super::{key_hex, Cursor, Dir, Gap, KeyedDataset, KsdsError, KsdsStore, OpStats, StartMode};
use crate::recio::KeySpec;

/// Counts of what a flush wrote back.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlushSummary {
    pub deletes: usize,
    pub upserts: usize,
    pub inserted: usize,
    pub updated: usize,
}

/// Whole-store in-memory copy with dirty tracking. Owns the store, and with
/// it the store's lock, until flushed.
pub struct CacheSession {
    id: u64,
    inner: KsdsStore,
    map: Map,
    inserted: BTreeSet<Vec<u8>>,
    updated: BTreeSet<Vec<u8>>,
    deleted: BTreeSet<Vec<u8>>,
    loaded_generation: Option<u64>,
    generation: u64,
    stats: OpStats,
}

/// Loads every record of `store` into memory.
pub fn cache_open(store: KsdsStore) -> CacheSession {
    let map: Map = store
        .records()
        .into_iter()
        .map(|r| (store.rules().key_of(&r).to_vec(), r))
        .collect();
    CacheSession {
        id: next_id(),
        loaded_generation: store.persisted_generation(),
        inner: store,
        map,
        inserted: BTreeSet::new(),
        updated: BTreeSet::new(),
        deleted: BTreeSet::new(),
        generation: 0,
        stats: OpStats::default(),
    }
}

impl CacheSession {
    pub fn inner(&self) -> &KsdsStore {
        &self.inner
    }

    pub fn dirty_counts(&self) -> (usize, usize, usize) {
        (self.inserted.len(), self.updated.len(), self.deleted.len())
    }

    /// Applies deletes, then upserts, to the store and syncs it. Fails without
    /// writing anything if the store directory was changed by someone else
    /// since the cache was loaded.
    pub fn flush(self) -> Result<(FlushSummary, KsdsStore), KsdsError> {
        let CacheSession { mut inner, map, inserted, updated, deleted, loaded_generation, .. } = self;
        if let (Some(loaded), Some(dir)) = (loaded_generation, inner.location()) {
            let current = persist::read_manifest(dir)?.map(|m| m.generation).unwrap_or(0);
            if current != loaded {
                return Err(KsdsError::FlushConflict { loaded, current });
            }
        }
        let mut summary = FlushSummary { inserted: inserted.len(), updated: updated.len(), ..Default::default() };
        for key in &deleted {
            inner.delete(key)?;
            summary.deletes += 1;
        }
        for key in inserted.iter().chain(&updated) {
            let record = &map[key];
            match inner.read(key) {
                Ok(_) => inner.rewrite(record)?,
                Err(e) if e.status() == super::Status::NotFound => inner.write(record)?,
                Err(e) => return Err(e),
            }
            summary.upserts += 1;
        }
        inner.sync()?;
        Ok((summary, inner))
    }

    /// Drops all changes and returns the untouched store.
    pub fn discard(self) -> KsdsStore {
        self.inner
    }

    fn check_cursor(&self, cursor: &Cursor) -> Result<(), KsdsError> {
        if cursor.owner != self.id || cursor.generation != self.generation {
            return Err(KsdsError::CursorInvalidated { cursor: cursor.generation, store: self.generation });
        }
        Ok(())
    }

    fn step(&mut self, cursor: &mut Cursor, dir: Dir) -> Result<Vec<u8>, KsdsError> {
        self.check_cursor(cursor)?;
        let maps = std::slice::from_ref(&self.map);
        if cursor.merge.as_ref().is_none_or(|m| m.dir != dir) {
            cursor.merge = Some(Merge::build(maps, dir, &cursor.pos, &mut self.stats));
        }
        let merge = cursor.merge.as_mut().expect("merge built above");
        let (_, key, record) = merge.next(maps, &mut self.stats).ok_or(KsdsError::EndOfFile)?;
        cursor.pos = match dir {
            Dir::Next => Gap::After(key),
            Dir::Prev => Gap::Before(key),
        };
        self.stats.records_returned += 1;
        Ok(record)
    }
}

impl KeyedDataset for CacheSession {
    fn key_spec(&self) -> KeySpec {
        self.inner.rules().key
    }

    fn start(&self, prefix: &[u8], mode: StartMode) -> Result<Cursor, KsdsError> {
        let gap = self.inner.rules().start_gap(prefix, mode)?;
        if mode == StartMode::Eq && !self.map.contains_key(prefix) {
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
        self.inner.rules().check_key(key)?;
        self.map.get(key).cloned().ok_or_else(|| KsdsError::NotFound { key: key_hex(key) })
    }

    fn write(&mut self, record: &[u8]) -> Result<(), KsdsError> {
        self.inner.rules().check(record)?;
        let key = self.inner.rules().key_of(record).to_vec();
        if self.map.contains_key(&key) {
            return Err(KsdsError::DuplicateKey { key: key_hex(&key) });
        }
        if self.deleted.remove(&key) {
            self.updated.insert(key.clone());
        } else {
            self.inserted.insert(key.clone());
        }
        self.map.insert(key, record.to_vec());
        self.generation += 1;
        Ok(())
    }

    fn rewrite(&mut self, record: &[u8]) -> Result<(), KsdsError> {
        self.inner.rules().check(record)?;
        let key = self.inner.rules().key_of(record).to_vec();
        let slot = self.map.get_mut(&key).ok_or_else(|| KsdsError::NotFound { key: key_hex(&key) })?;
        *slot = record.to_vec();
        if !self.inserted.contains(&key) {
            self.updated.insert(key);
        }
        self.generation += 1;
        Ok(())
    }

    fn delete(&mut self, key: &[u8]) -> Result<(), KsdsError> {
        self.inner.rules().check_key(key)?;
        if self.map.remove(key).is_none() {
            return Err(KsdsError::NotFound { key: key_hex(key) });
        }
        if !self.inserted.remove(key) {
            self.updated.remove(key);
            self.deleted.insert(key.to_vec());
        }
        self.generation += 1;
        Ok(())
    }

    fn len(&self) -> usize {
        self.map.len()
    }

    fn stats(&self) -> OpStats {
        self.stats
    }

    fn records(&self) -> Vec<Vec<u8>> {
        self.map.values().cloned().collect()
    }

    fn clear(&mut self) -> Result<usize, KsdsError> {
        let keys: Vec<Vec<u8>> = self.map.keys().cloned().collect();
        for k in &keys {
            self.delete(k)?;
        }
        Ok(keys.len())
    }
}
