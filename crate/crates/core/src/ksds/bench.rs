use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Backend, KeyedDataset, KsdsError, KsdsStore, OpStats};
use crate::codec::Encoding;
use crate::copybook::{parse_copybook, CopybookSchema, DiscriminatorRule};
use crate::recio::KeySpec;

pub const SYNTHETIC_KEY: KeySpec = KeySpec { offset: 0, length: 8 };
const BODY_LEN: usize = 20;

/// One row of the scan benchmark: medians over `runs` timed full scans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub layouts: usize,
    pub records: usize,
    pub runs: usize,
    pub wall_ms: f64,
    pub wall_ms_runs: Vec<f64>,
    pub stats: OpStats,
}

impl BenchRow {
    pub const HEADER: &'static str = "N,records,wall_ms,advances,comparisons";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:.3},{},{}",
            self.layouts, self.records, self.wall_ms, self.stats.sub_cursor_advances, self.stats.comparisons
        )
    }
}

/// `n` record layouts `L001..`, each `REC-KEY X(8)`, `REC-TYPE X(3)` and a
/// body, told apart by REC-TYPE (`001`, `002`, ...).
pub fn synthetic_schema(n: usize) -> CopybookSchema {
    assert!((1..=999).contains(&n), "layout count {n} out of range");
    let mut text = String::new();
    for i in 1..=n {
        text.push_str(&format!(
            "01 L{i:03}.\n   05 REC-KEY PIC X(8).\n   05 REC-TYPE PIC X(3).\n   05 BODY-{i:03} PIC X({BODY_LEN}).\n"
        ));
    }
    let schema = parse_copybook(&text).expect("synthetic copybook parses");
    if n == 1 {
        return schema;
    }
    let values: BTreeMap<String, String> = (1..=n).map(|i| (format!("{i:03}"), format!("L{i:03}"))).collect();
    schema
        .with_discriminator(DiscriminatorRule { field: "REC-TYPE".into(), values, default: None })
        .expect("synthetic rule is valid")
}

/// Record `i` of an `n`-layout synthetic dataset; records are spread over
/// the layouts round-robin.
pub fn synthetic_record(i: usize, n: usize) -> Vec<u8> {
    let mut r = format!("{i:08}{:03}", i % n + 1).into_bytes();
    r.extend(std::iter::repeat_n(b'.', BODY_LEN));
    r
}

pub fn synthetic_store(n: usize, records: usize) -> Result<KsdsStore, KsdsError> {
    let mut store = KsdsStore::in_memory(synthetic_schema(n), SYNTHETIC_KEY, Backend::PerLayout, Encoding::Ascii)?;
    for i in 0..records {
        store.write(&synthetic_record(i, n))?;
    }
    Ok(store)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

/// Times `runs` full forward scans of a PerLayout store for each layout
/// count. Counters cover exactly the record-returning reads of one scan.
pub fn bench_scan(layout_counts: &[usize], record_count: usize, runs: usize) -> Result<Vec<BenchRow>, KsdsError> {
    let runs = runs.max(1);
    let mut rows = Vec::with_capacity(layout_counts.len());
    for &n in layout_counts {
        if !(1..=97).contains(&n) {
            return Err(KsdsError::Config(format!("layout count {n} outside 1..=97")));
        }
        let mut store = synthetic_store(n, record_count)?;
        let mut times = Vec::with_capacity(runs);
        let mut stats = None;
        for _ in 0..runs {
            store.reset_stats();
            let began = Instant::now();
            let mut cursor = store.first();
            for _ in 0..record_count {
                store.read_next(&mut cursor)?;
            }
            times.push(began.elapsed().as_secs_f64() * 1e3);
            let snapshot = store.stats();
            if stats.is_some_and(|s| s != snapshot) {
                return Err(KsdsError::Corrupt("scan counters differ between runs".into()));
            }
            stats = Some(snapshot);
            match store.read_next(&mut cursor) {
                Err(KsdsError::EndOfFile) => {}
                other => return Err(KsdsError::Corrupt(format!("scan did not end after {record_count} records: {other:?}"))),
            }
        }
        rows.push(BenchRow {
            layouts: n,
            records: record_count,
            runs,
            wall_ms: median(&times),
            wall_ms_runs: times,
            stats: stats.unwrap_or_default(),
        });
    }
    Ok(rows)
}
