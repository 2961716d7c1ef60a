//! Store directory: `MANIFEST`, one record file per table, and `LOCK`.

use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::merge::Map;
use super::{Backend, KsdsError};
use crate::codec::Encoding;
use crate::recio::{frame_records, parse_records, RecordFileSpec, MAX_VARIABLE_LRECL};

pub const MANIFEST_FILE: &str = "MANIFEST";
pub const LOCK_FILE: &str = "LOCK";
const MANIFEST_FORMAT: &str = "mfmig-ksds";
pub const MANIFEST_VERSION: u32 = 1;
const LOCK_HEADER: &str = "mfmig-lock v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Manifest {
    pub format: String,
    pub version: u32,
    pub backend: Backend,
    pub schema_fingerprint: String,
    pub key_offset: usize,
    pub key_length: usize,
    pub encoding: Encoding,
    pub generation: u64,
    #[serde(rename = "table", default)]
    pub tables: Vec<TableEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct TableEntry {
    pub name: String,
    pub file: String,
    pub records: usize,
}

impl Manifest {
    pub fn new(backend: Backend, schema_fingerprint: String, key: (usize, usize), encoding: Encoding) -> Manifest {
        Manifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            backend,
            schema_fingerprint,
            key_offset: key.0,
            key_length: key.1,
            encoding,
            generation: 0,
            tables: Vec::new(),
        }
    }
}

pub(crate) fn read_manifest(dir: &Path) -> Result<Option<Manifest>, KsdsError> {
    let path = dir.join(MANIFEST_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let m: Manifest = toml::from_str(&text).map_err(|e| KsdsError::Corrupt(format!("{}: {e}", path.display())))?;
    if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
        return Err(KsdsError::Corrupt(format!(
            "{}: unsupported manifest {} v{}",
            path.display(),
            m.format,
            m.version
        )));
    }
    Ok(Some(m))
}

fn data_spec(lrecl: usize) -> RecordFileSpec {
    RecordFileSpec::variable(lrecl.clamp(1, MAX_VARIABLE_LRECL), Encoding::Ascii)
}

/// Loads every table's records as listed in the manifest.
pub(crate) fn read_tables(dir: &Path, manifest: &Manifest, lrecl: usize) -> Result<Vec<Vec<Vec<u8>>>, KsdsError> {
    let spec = data_spec(lrecl);
    let mut out = Vec::with_capacity(manifest.tables.len());
    for t in &manifest.tables {
        let path = dir.join(&t.file);
        let bytes = fs::read(&path)?;
        let records = parse_records(&bytes, &spec).map_err(|e| KsdsError::Corrupt(format!("{}: {e}", path.display())))?;
        if records.len() != t.records {
            return Err(KsdsError::Corrupt(format!(
                "{}: manifest lists {} records, file holds {}",
                path.display(),
                t.records,
                records.len()
            )));
        }
        out.push(records);
    }
    Ok(out)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), KsdsError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes the table files under generation-stamped names, then swaps the
/// manifest in and removes files no longer referenced.
pub(crate) fn write_store(
    dir: &Path,
    mut manifest: Manifest,
    names: &[String],
    maps: &[Map],
    lrecl: usize,
) -> Result<Manifest, KsdsError> {
    let spec = data_spec(lrecl);
    manifest.tables.clear();
    for (i, (name, map)) in names.iter().zip(maps).enumerate() {
        let file = format!("t{i:03}.g{}.dat", manifest.generation);
        let bytes = frame_records(map.values(), &spec)?;
        write_atomic(&dir.join(&file), &bytes)?;
        manifest.tables.push(TableEntry { name: name.clone(), file, records: map.len() });
    }
    let text = toml::to_string(&manifest).expect("manifest serializes");
    write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())?;
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if name.ends_with(".dat") && !manifest.tables.iter().any(|t| t.file == name) {
            let _ = fs::remove_file(dir.join(name));
        }
    }
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LockOwner {
    pub pid: u32,
    pub host: String,
    pub acquired: String,
}

fn hostname() -> String {
    let mut buf = [0u8; 256];
    // SAFETY: buf is valid for buf.len() bytes; gethostname NUL-terminates on success.
    let rc = unsafe { libc::gethostname(buf.as_mut_ptr() as *mut libc::c_char, buf.len()) };
    if rc != 0 {
        return "unknown".into();
    }
    let end = buf.iter().position(|&b| b == 0).unwrap_or(buf.len());
    String::from_utf8_lossy(&buf[..end]).into_owned()
}

fn process_alive(pid: u32) -> bool {
    if pid == 0 || pid > i32::MAX as u32 {
        return false;
    }
    // SAFETY: signal 0 performs only the existence and permission check.
    let rc = unsafe { libc::kill(pid as libc::pid_t, 0) };
    rc == 0 || io_errno() != libc::ESRCH
}

fn io_errno() -> i32 {
    std::io::Error::last_os_error().raw_os_error().unwrap_or(0)
}

fn parse_lock(text: &str) -> Option<LockOwner> {
    let mut lines = text.lines();
    if lines.next()? != LOCK_HEADER {
        return None;
    }
    let (mut pid, mut host, mut acquired) = (None, None, None);
    for line in lines {
        match line.split_once('=') {
            Some(("pid", v)) => pid = v.parse().ok(),
            Some(("host", v)) => host = Some(v.to_string()),
            Some(("acquired", v)) => acquired = Some(v.to_string()),
            _ => {}
        }
    }
    Some(LockOwner { pid: pid?, host: host?, acquired: acquired? })
}

/// Owner recorded in a store's lock file, if any.
pub fn read_lock_owner(dir: &Path) -> Option<LockOwner> {
    fs::read_to_string(dir.join(LOCK_FILE)).ok().as_deref().and_then(parse_lock)
}

/// Exclusive ownership of a store directory, released on drop.
#[derive(Debug)]
pub(crate) struct StoreLock {
    path: PathBuf,
}

impl StoreLock {
    pub fn acquire(dir: &Path) -> Result<StoreLock, KsdsError> {
        let path = dir.join(LOCK_FILE);
        let me = LockOwner {
            pid: std::process::id(),
            host: hostname(),
            acquired: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    writeln!(f, "{LOCK_HEADER}\npid={}\nhost={}\nacquired={}", me.pid, me.host, me.acquired)?;
                    f.sync_all()?;
                    return Ok(StoreLock { path });
                }
                Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                    let owner = read_lock_owner(dir);
                    match owner {
                        Some(o) if o.host == me.host && !process_alive(o.pid) => {
                            log::warn!("removing stale lock of dead pid {} in {}", o.pid, dir.display());
                            let _ = fs::remove_file(&path);
                        }
                        Some(o) => {
                            return Err(KsdsError::ExclusiveLockHeld {
                                path: dir.to_path_buf(),
                                pid: o.pid,
                                host: o.host,
                                acquired: o.acquired,
                            })
                        }
                        None => {
                            return Err(KsdsError::ExclusiveLockHeld {
                                path: dir.to_path_buf(),
                                pid: 0,
                                host: "?".into(),
                                acquired: "?".into(),
                            })
                        }
                    }
                }
                Err(e) => return Err(e.into()),
            }
        }
        Err(KsdsError::ExclusiveLockHeld { path: dir.to_path_buf(), pid: 0, host: "?".into(), acquired: "?".into() })
    }
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = StoreLock::acquire(dir.path()).unwrap();
        let owner = read_lock_owner(dir.path()).unwrap();
        assert_eq!(owner.pid, std::process::id());
        assert!(matches!(StoreLock::acquire(dir.path()), Err(KsdsError::ExclusiveLockHeld { .. })));
        drop(lock);
        assert!(!dir.path().join(LOCK_FILE).exists());
        StoreLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn stale_lock_is_broken() {
        let dir = tempfile::tempdir().unwrap();
        // Spawn and reap a child so its pid is known to be dead.
        let mut child = std::process::Command::new("true").spawn().unwrap();
        let pid = child.id();
        child.wait().unwrap();
        fs::write(
            dir.path().join(LOCK_FILE),
            format!("{LOCK_HEADER}\npid={pid}\nhost={}\nacquired=2000-01-01T00:00:00Z\n", hostname()),
        )
        .unwrap();
        StoreLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn foreign_host_lock_is_respected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(LOCK_FILE), format!("{LOCK_HEADER}\npid=1\nhost=elsewhere.invalid\nacquired=x\n")).unwrap();
        match StoreLock::acquire(dir.path()) {
            Err(KsdsError::ExclusiveLockHeld { host, .. }) => assert_eq!(host, "elsewhere.invalid"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::new(Backend::PerLayout, "abc".into(), (0, 8), Encoding::Ebcdic);
        m.generation = 7;
        let maps: Vec<Map> = vec![
            [(b"k1".to_vec(), b"k1-data".to_vec())].into_iter().collect(),
            Map::new(),
        ];
        let written = write_store(dir.path(), m, &["A".into(), "B".into()], &maps, 10).unwrap();
        let read = read_manifest(dir.path()).unwrap().unwrap();
        assert_eq!(read, written);
        let tables = read_tables(dir.path(), &read, 10).unwrap();
        assert_eq!(tables, vec![vec![b"k1-data".to_vec()], vec![]]);
        let text = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(text.contains("backend = \"perlayout\""), "{text}");
    }
}
