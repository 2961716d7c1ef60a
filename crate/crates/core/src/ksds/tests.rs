use std::collections::BTreeMap;

use super::*;
use crate::codec::Encoding;
use crate::copybook::{parse_copybook, CopybookSchema, DiscriminatorRule};

fn ab_schema() -> CopybookSchema {
    parse_copybook(
        "01 REC-A. 05 K PIC X(2). 05 T PIC X. 05 A-DATA PIC X(3).
         01 REC-B. 05 K PIC X(2). 05 T PIC X. 05 B-DATA PIC 9(3).",
    )
    .unwrap()
    .with_discriminator(DiscriminatorRule {
        field: "T".into(),
        values: [("A".to_string(), "REC-A".to_string()), ("B".to_string(), "REC-B".to_string())].into(),
        default: None,
    })
    .unwrap()
}

const KEY: KeySpec = KeySpec { offset: 0, length: 2 };

fn store(backend: Backend) -> KsdsStore {
    KsdsStore::in_memory(ab_schema(), KEY, backend, Encoding::Ascii).unwrap()
}

fn rec(key: &str, kind: char) -> Vec<u8> {
    match kind {
        'A' => format!("{key}Axyz").into_bytes(),
        _ => format!("{key}B123").into_bytes(),
    }
}

fn keys_of(records: &[Vec<u8>]) -> Vec<String> {
    records.iter().map(|r| String::from_utf8_lossy(&r[..2]).into_owned()).collect()
}

fn scan(ds: &mut dyn KeyedDataset) -> Vec<Vec<u8>> {
    let mut c = ds.first();
    let mut out = Vec::new();
    loop {
        match ds.read_next(&mut c) {
            Ok(r) => out.push(r),
            Err(KsdsError::EndOfFile) => return out,
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn empty_stores() {
    assert_eq!(store(Backend::Single).len(), 0);
    let n97 = KsdsStore::in_memory(synthetic_schema(97), SYNTHETIC_KEY, Backend::PerLayout, Encoding::Ascii).unwrap();
    let counts = n97.table_counts();
    assert_eq!(counts.len(), 97);
    assert!(counts.iter().all(|(_, c)| *c == 0));
    assert_eq!(counts[96].0, "L097");
}

#[test]
fn perlayout_needs_a_discriminator() {
    let schema = parse_copybook("01 A. 05 K PIC X(2). 01 B. 05 K PIC X(2).").unwrap();
    assert!(matches!(
        KsdsStore::in_memory(schema.clone(), KEY, Backend::PerLayout, Encoding::Ascii),
        Err(KsdsError::Config(_))
    ));
    KsdsStore::in_memory(schema, KEY, Backend::Single, Encoding::Ascii).unwrap();
    let bad_key = KeySpec::new(5, 2);
    assert!(KsdsStore::in_memory(ab_schema(), bad_key, Backend::Single, Encoding::Ascii).is_err());
}

fn seeded(backend: Backend) -> KsdsStore {
    let mut s = store(backend);
    for (k, t) in [("09", 'A'), ("02", 'B'), ("05", 'A')] {
        s.write(&rec(k, t)).unwrap();
    }
    s
}

#[test]
fn start_modes() {
    for backend in [Backend::Single, Backend::PerLayout] {
        let mut s = seeded(backend);
        let mut c = s.start(b"05", StartMode::Ge).unwrap();
        assert_eq!(s.read_next(&mut c).unwrap(), rec("05", 'A'));
        let mut c = s.start(b"05", StartMode::Gt).unwrap();
        assert_eq!(s.read_next(&mut c).unwrap(), rec("09", 'A'));
        assert!(matches!(s.start(b"07", StartMode::Eq), Err(KsdsError::NotFound { .. })));
        let mut c = s.start(b"05", StartMode::Eq).unwrap();
        assert_eq!(s.read_next(&mut c).unwrap(), rec("05", 'A'));
        // Prefix compare: ">" "0" skips every key starting with '0'.
        let mut c = s.start(b"0", StartMode::Gt).unwrap();
        assert!(matches!(s.read_next(&mut c), Err(KsdsError::EndOfFile)));
        let mut c = s.start(b"0", StartMode::Ge).unwrap();
        assert_eq!(s.read_next(&mut c).unwrap(), rec("02", 'B'));
        assert!(matches!(s.start(b"0", StartMode::Eq), Err(KsdsError::KeyLength { .. })));
        assert!(matches!(s.start(b"001", StartMode::Ge), Err(KsdsError::KeyLength { .. })));
    }
}

#[test]
fn sequential_reads_both_ways() {
    for backend in [Backend::Single, Backend::PerLayout] {
        let mut s = seeded(backend);
        assert_eq!(keys_of(&scan(&mut s)), vec!["02", "05", "09"]);
        let mut c = s.last();
        let back: Vec<Vec<u8>> = std::iter::from_fn(|| s.read_prev(&mut c).ok()).collect();
        assert_eq!(keys_of(&back), vec!["09", "05", "02"]);
        // Turning around returns the record just read.
        let mut c = s.first();
        s.read_next(&mut c).unwrap();
        assert_eq!(keys_of(&[s.read_next(&mut c).unwrap()]), vec!["05"]);
        assert_eq!(keys_of(&[s.read_prev(&mut c).unwrap()]), vec!["05"]);
        assert_eq!(keys_of(&[s.read_prev(&mut c).unwrap()]), vec!["02"]);
        assert!(matches!(s.read_prev(&mut c), Err(KsdsError::EndOfFile)));
        assert_eq!(keys_of(&[s.read_next(&mut c).unwrap()]), vec!["02"]);
    }
}

#[test]
fn end_of_file_is_repeatable() {
    let mut s = seeded(Backend::PerLayout);
    let mut c = s.start(b"09", StartMode::Ge).unwrap();
    s.read_next(&mut c).unwrap();
    assert!(matches!(s.read_next(&mut c), Err(KsdsError::EndOfFile)));
    assert!(matches!(s.read_next(&mut c), Err(KsdsError::EndOfFile)));
    assert_eq!(s.read_prev(&mut c).unwrap(), rec("09", 'A'));
}

#[test]
fn random_access_and_mutations() {
    for backend in [Backend::Single, Backend::PerLayout] {
        let mut s = seeded(backend);
        assert_eq!(s.read(b"02").unwrap(), rec("02", 'B'));
        assert!(matches!(s.read(b"03"), Err(KsdsError::NotFound { .. })));
        assert!(matches!(s.write(&rec("02", 'A')), Err(KsdsError::DuplicateKey { .. })));
        assert!(matches!(s.rewrite(&rec("03", 'A')), Err(KsdsError::NotFound { .. })));
        s.delete(b"02").unwrap();
        assert!(matches!(s.read(b"02"), Err(KsdsError::NotFound { .. })));
        assert!(matches!(s.delete(b"02"), Err(KsdsError::NotFound { .. })));
        s.write(&rec("02", 'A')).unwrap();
        assert_eq!(s.read(b"02").unwrap(), rec("02", 'A'));
        assert!(matches!(s.write(b"04Qzzz"), Err(KsdsError::Layout(_))));
        assert!(matches!(s.write(b"04A"), Err(KsdsError::RecordLength { .. })));
        assert!(matches!(s.write(b"04Axyz!"), Err(KsdsError::RecordLength { .. })));
        assert!(matches!(s.read(b"0"), Err(KsdsError::KeyLength { .. })));
        assert_eq!(s.len(), 3);
    }
}

#[test]
fn rewrite_moves_record_between_tables() {
    let mut s = seeded(Backend::PerLayout);
    assert_eq!(s.table_keys(0), vec![b"05".to_vec(), b"09".to_vec()]);
    s.rewrite(&rec("05", 'B')).unwrap();
    assert_eq!(s.table_keys(0), vec![b"09".to_vec()]);
    assert_eq!(s.table_keys(1), vec![b"02".to_vec(), b"05".to_vec()]);
    assert_eq!(s.read(b"05").unwrap(), rec("05", 'B'));
    assert_eq!(s.len(), 3);
}

#[test]
fn mutation_invalidates_cursors() {
    let mut s = seeded(Backend::PerLayout);
    let mut c = s.first();
    s.read_next(&mut c).unwrap();
    s.write(&rec("07", 'B')).unwrap();
    assert!(matches!(s.read_next(&mut c), Err(KsdsError::CursorInvalidated { .. })));
    // Failed mutations leave cursors alone.
    let mut c = s.first();
    assert!(s.write(&rec("07", 'B')).is_err());
    s.read_next(&mut c).unwrap();
    // Cursors are bound to the store that made them.
    let mut other = seeded(Backend::PerLayout);
    let mut foreign = s.first();
    assert!(matches!(other.read_next(&mut foreign), Err(KsdsError::CursorInvalidated { .. })));
}

// Brute force: concatenate and sort, and count a lazy tournament independently.
fn oracle_merge(lists: &[Vec<Vec<u8>>]) -> (Vec<Vec<u8>>, u64) {
    let mut all: Vec<Vec<u8>> = lists.iter().flatten().cloned().collect();
    all.sort();
    let advances = if all.is_empty() { lists.len() as u64 } else { lists.len() as u64 + all.len() as u64 - 1 };
    (all, advances)
}

#[test]
fn three_layout_merge_matches_brute_force() {
    let schema = synthetic_schema(3);
    let mut s = KsdsStore::in_memory(schema, SYNTHETIC_KEY, Backend::PerLayout, Encoding::Ascii).unwrap();
    for i in 0..9 {
        s.write(&synthetic_record(i, 3)).unwrap();
    }
    let lists: Vec<Vec<Vec<u8>>> = (0..3).map(|t| s.table_keys(t)).collect();
    assert!(lists.iter().all(|l| l.len() == 3));
    let (expected, advances) = oracle_merge(&lists);
    s.reset_stats();
    let mut c = s.first();
    let got: Vec<Vec<u8>> = (0..9).map(|_| s.read_next(&mut c).unwrap()[..8].to_vec()).collect();
    assert_eq!(got, expected);
    let stats = s.stats();
    assert_eq!(stats.sub_cursor_advances, advances);
    assert!(stats.sub_cursor_advances >= 9 + 3 - 1);
    assert_eq!(stats.records_returned, 9);
    // Four leaves: three matches to build, two per replay for eight steps.
    assert_eq!(stats.comparisons, 3 + 8 * 2);
}

#[test]
fn bench_counts() {
    let rows = bench_scan(&[1, 3], 50, 2).unwrap();
    assert_eq!(rows[0].stats.sub_cursor_advances, 50);
    assert_eq!(rows[0].stats.comparisons, 0);
    assert_eq!(rows[1].stats.sub_cursor_advances, 50 + 3 - 1);
    assert_eq!(rows[1].stats.records_returned, 50);
    assert_eq!(rows[1].wall_ms_runs.len(), 2);
    assert!(rows[1].to_csv().starts_with("3,50,"));
    assert!(bench_scan(&[98], 1, 1).is_err());
}

#[test]
fn persisted_store_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store");
    for backend in [Backend::Single, Backend::PerLayout] {
        let _ = std::fs::remove_dir_all(&path);
        let mut s = KsdsStore::open(&path, ab_schema(), KEY, backend, Encoding::Ascii).unwrap();
        for (k, t) in [("09", 'A'), ("02", 'B'), ("05", 'A')] {
            s.write(&rec(k, t)).unwrap();
        }
        assert!(matches!(
            KsdsStore::open(&path, ab_schema(), KEY, backend, Encoding::Ascii),
            Err(KsdsError::ExclusiveLockHeld { .. })
        ));
        s.close().unwrap();
        assert!(!path.join(LOCK_FILE).exists());
        let mut again = KsdsStore::open(&path, ab_schema(), KEY, backend, Encoding::Ascii).unwrap();
        assert_eq!(again.generation(), 3);
        assert_eq!(keys_of(&scan(&mut again)), vec!["02", "05", "09"]);
        drop(again);

        let other = match backend {
            Backend::Single => Backend::PerLayout,
            Backend::PerLayout => Backend::Single,
        };
        assert!(matches!(
            KsdsStore::open(&path, ab_schema(), KEY, other, Encoding::Ascii),
            Err(KsdsError::StoreMismatch { what: "backend", .. })
        ));
        let altered = parse_copybook("01 R. 05 K PIC X(2). 05 T PIC X(4).").unwrap();
        assert!(matches!(
            KsdsStore::open(&path, altered, KEY, backend, Encoding::Ascii),
            Err(KsdsError::SchemaMismatch { .. })
        ));
    }
}

#[test]
fn unsynced_changes_are_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = KsdsStore::open(dir.path(), ab_schema(), KEY, Backend::Single, Encoding::Ascii).unwrap();
    s.write(&rec("01", 'A')).unwrap();
    drop(s);
    let s = KsdsStore::open(dir.path(), ab_schema(), KEY, Backend::Single, Encoding::Ascii).unwrap();
    assert_eq!(s.len(), 0);
}

fn dump(ds: &dyn KeyedDataset) -> BTreeMap<Vec<u8>, Vec<u8>> {
    ds.records().into_iter().map(|r| (r[..2].to_vec(), r)).collect()
}

#[test]
fn cache_flush_matches_direct_apply() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let dir = tempfile::tempdir().unwrap();
    let mut base = KsdsStore::open(dir.path(), ab_schema(), KEY, Backend::PerLayout, Encoding::Ascii).unwrap();
    let mut direct = store(Backend::Single);
    for i in 0..30 {
        let r = rec(&format!("{:02}", i * 3), if i % 2 == 0 { 'A' } else { 'B' });
        base.write(&r).unwrap();
        direct.write(&r).unwrap();
    }
    base.sync().unwrap();
    let mut session = cache_open(base);
    assert!(matches!(
        KsdsStore::open(dir.path(), ab_schema(), KEY, Backend::PerLayout, Encoding::Ascii),
        Err(KsdsError::ExclusiveLockHeld { .. })
    ));
    for _ in 0..100 {
        let key = format!("{:02}", rng.gen_range(0..100));
        let kind = if rng.gen_bool(0.5) { 'A' } else { 'B' };
        let (a, b) = match rng.gen_range(0..3) {
            0 => (session.write(&rec(&key, kind)).map_err(|e| e.status()), direct.write(&rec(&key, kind)).map_err(|e| e.status())),
            1 => (session.rewrite(&rec(&key, kind)).map_err(|e| e.status()), direct.rewrite(&rec(&key, kind)).map_err(|e| e.status())),
            _ => (session.delete(key.as_bytes()).map_err(|e| e.status()), direct.delete(key.as_bytes()).map_err(|e| e.status())),
        };
        assert_eq!(a, b);
    }
    let (summary, flushed) = session.flush().unwrap();
    assert!(summary.upserts + summary.deletes > 0);
    assert_eq!(dump(&flushed), dump(&direct));
    flushed.close().unwrap();
    let reopened = KsdsStore::open(dir.path(), ab_schema(), KEY, Backend::PerLayout, Encoding::Ascii).unwrap();
    assert_eq!(dump(&reopened), dump(&direct));
}

#[test]
fn idle_cache_flush_writes_nothing() {
    let session = cache_open(seeded(Backend::PerLayout));
    let (summary, store) = session.flush().unwrap();
    assert_eq!(summary, FlushSummary::default());
    assert_eq!(store.len(), 3);
}

#[test]
fn cache_tracks_dirty_keys() {
    let mut session = cache_open(seeded(Backend::Single));
    session.delete(b"02").unwrap();
    session.write(&rec("02", 'A')).unwrap(); // back in place: an update
    session.write(&rec("03", 'A')).unwrap();
    session.rewrite(&rec("03", 'B')).unwrap(); // still an insert
    session.write(&rec("04", 'A')).unwrap();
    session.delete(b"04").unwrap(); // never reaches the store
    session.rewrite(&rec("05", 'B')).unwrap();
    session.delete(b"09").unwrap();
    assert_eq!(session.dirty_counts(), (1, 2, 1));
    let (summary, store) = session.flush().unwrap();
    assert_eq!(summary, FlushSummary { deletes: 1, upserts: 3, inserted: 1, updated: 2 });
    assert_eq!(keys_of(&store.records()), vec!["02", "03", "05"]);
}

#[test]
fn out_of_band_write_causes_flush_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let base = KsdsStore::open(dir.path(), ab_schema(), KEY, Backend::Single, Encoding::Ascii).unwrap();
    let mut session = cache_open(base);
    session.write(&rec("01", 'A')).unwrap();
    // Someone breaks the lock and writes behind the session's back.
    std::fs::remove_file(dir.path().join(LOCK_FILE)).unwrap();
    let mut intruder = KsdsStore::open(dir.path(), ab_schema(), KEY, Backend::Single, Encoding::Ascii).unwrap();
    intruder.write(&rec("02", 'B')).unwrap();
    intruder.close().unwrap();
    assert!(matches!(session.flush(), Err(KsdsError::FlushConflict { loaded: 0, current: 1 })));
}

#[test]
fn dataset_enum_delegates() {
    let mut ds = Dataset::Cache(cache_open(seeded(Backend::PerLayout)));
    ds.write(&rec("01", 'B')).unwrap();
    assert_eq!(keys_of(&scan(&mut ds)), vec!["01", "02", "05", "09"]);
    assert_eq!(ds.clear().unwrap(), 4);
    assert!(ds.is_empty());
    assert_eq!(ds.close().unwrap(), Some(FlushSummary { deletes: 3, upserts: 0, inserted: 0, updated: 0 }));
}

#[test]
fn error_statuses() {
    assert_eq!(KsdsError::EndOfFile.file_status(), "10");
    assert_eq!(KsdsError::DuplicateKey { key: "00".into() }.file_status(), "22");
    assert_eq!(KsdsError::NotFound { key: "00".into() }.file_status(), "23");
}
