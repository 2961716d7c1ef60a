//! Shared integration-test helpers: a sorted-array model of keyed-dataset
//! behaviour and a random operation driver that checks a real dataset
//! against it step by step.
#![allow(dead_code)]

use std::fmt;

use mfmig::ksds::{Cursor, KeyedDataset, KsdsError, StartMode, Status};
use rand::rngs::StdRng;
use rand::Rng;

/// Synthetic records: 8-digit key, 3-digit layout code, 20-byte body.
pub const KEY_LEN: usize = 8;
pub const RECORD_LEN: usize = 31;
const TYPE_END: usize = 11;
const CURSOR_SLOTS: usize = 4;

pub type Outcome = Result<Vec<u8>, Status>;

/// Keyed file over a sorted vector. Cursors are plain gap indices, which is
/// sound because any successful mutation invalidates every cursor.
#[derive(Debug, Clone)]
pub struct Model {
    rows: Vec<(Vec<u8>, Vec<u8>)>,
    generation: u64,
    layouts: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ModelCursor {
    generation: u64,
    /// Gap between `rows[gap - 1]` and `rows[gap]`.
    gap: usize,
}

impl Model {
    pub fn new(layouts: usize) -> Model {
        Model { rows: Vec::new(), generation: 0, layouts }
    }

    pub fn records(&self) -> Vec<Vec<u8>> {
        self.rows.iter().map(|(_, r)| r.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    fn find(&self, key: &[u8]) -> Result<usize, usize> {
        self.rows.binary_search_by(|(k, _)| k.as_slice().cmp(key))
    }

    fn check_record(&self, r: &[u8]) -> Result<(), Status> {
        if r.len() < KEY_LEN || r.len() > RECORD_LEN {
            return Err(Status::RecordLength);
        }
        if self.layouts > 1 {
            if r.len() < TYPE_END {
                return Err(Status::NoMatchingLayout);
            }
            let code: Option<usize> = std::str::from_utf8(&r[KEY_LEN..TYPE_END]).ok().and_then(|s| s.parse().ok());
            if !code.is_some_and(|c| (1..=self.layouts).contains(&c) && r[KEY_LEN..TYPE_END] == *format!("{c:03}").as_bytes()) {
                return Err(Status::NoMatchingLayout);
            }
        }
        if r.len() < RECORD_LEN {
            return Err(Status::RecordLength);
        }
        Ok(())
    }

    pub fn start(&self, prefix: &[u8], mode: StartMode) -> Result<ModelCursor, Status> {
        if prefix.len() > KEY_LEN || (mode == StartMode::Eq && prefix.len() != KEY_LEN) {
            return Err(Status::KeyLength);
        }
        let p = prefix.len();
        let gap = match mode {
            StartMode::Eq => self.find(prefix).map_err(|_| Status::NotFound)?,
            StartMode::Ge => self.rows.partition_point(|(k, _)| &k[..p] < prefix),
            StartMode::Gt => self.rows.partition_point(|(k, _)| &k[..p] <= prefix),
        };
        Ok(ModelCursor { generation: self.generation, gap })
    }

    pub fn first(&self) -> ModelCursor {
        ModelCursor { generation: self.generation, gap: 0 }
    }

    pub fn read_next(&self, c: &mut ModelCursor) -> Outcome {
        if c.generation != self.generation {
            return Err(Status::CursorInvalidated);
        }
        let row = self.rows.get(c.gap).ok_or(Status::EndOfFile)?;
        c.gap += 1;
        Ok(row.1.clone())
    }

    pub fn read_prev(&self, c: &mut ModelCursor) -> Outcome {
        if c.generation != self.generation {
            return Err(Status::CursorInvalidated);
        }
        if c.gap == 0 {
            return Err(Status::EndOfFile);
        }
        c.gap -= 1;
        Ok(self.rows[c.gap].1.clone())
    }

    pub fn read(&self, key: &[u8]) -> Outcome {
        if key.len() != KEY_LEN {
            return Err(Status::KeyLength);
        }
        self.find(key).map(|i| self.rows[i].1.clone()).map_err(|_| Status::NotFound)
    }

    pub fn write(&mut self, r: &[u8]) -> Result<(), Status> {
        self.check_record(r)?;
        let key = &r[..KEY_LEN];
        match self.find(key) {
            Ok(_) => Err(Status::DuplicateKey),
            Err(i) => {
                self.rows.insert(i, (key.to_vec(), r.to_vec()));
                self.generation += 1;
                Ok(())
            }
        }
    }

    pub fn rewrite(&mut self, r: &[u8]) -> Result<(), Status> {
        self.check_record(r)?;
        let i = self.find(&r[..KEY_LEN]).map_err(|_| Status::NotFound)?;
        self.rows[i].1 = r.to_vec();
        self.generation += 1;
        Ok(())
    }

    pub fn delete(&mut self, key: &[u8]) -> Result<(), Status> {
        if key.len() != KEY_LEN {
            return Err(Status::KeyLength);
        }
        let i = self.find(key).map_err(|_| Status::NotFound)?;
        self.rows.remove(i);
        self.generation += 1;
        Ok(())
    }
}

#[derive(Clone)]
pub enum Op {
    Start { slot: usize, prefix: Vec<u8>, mode: StartMode },
    Next(usize),
    Prev(usize),
    Read(Vec<u8>),
    Write(Vec<u8>),
    Rewrite(Vec<u8>),
    Delete(Vec<u8>),
}

impl Op {
    pub fn is_mutation(&self) -> bool {
        matches!(self, Op::Write(_) | Op::Rewrite(_) | Op::Delete(_))
    }
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = |b: &[u8]| String::from_utf8_lossy(b).into_owned();
        match self {
            Op::Start { slot, prefix, mode } => write!(f, "start[{slot}]({mode:?} {:?})", s(prefix)),
            Op::Next(i) => write!(f, "next[{i}]"),
            Op::Prev(i) => write!(f, "prev[{i}]"),
            Op::Read(k) => write!(f, "read({:?})", s(k)),
            Op::Write(r) => write!(f, "write({:?})", s(r)),
            Op::Rewrite(r) => write!(f, "rewrite({:?})", s(r)),
            Op::Delete(k) => write!(f, "delete({:?})", s(k)),
        }
    }
}

fn key(rng: &mut StdRng, space: u32) -> Vec<u8> {
    format!("{:08}", rng.gen_range(0..space)).into_bytes()
}

/// A record for `k`, usually valid for a `layouts`-layout synthetic schema.
pub fn record(rng: &mut StdRng, k: &[u8], layouts: usize) -> Vec<u8> {
    let mut r = k.to_vec();
    let code = match rng.gen_range(0..40) {
        0 => 999,
        1 => layouts + 1,
        _ => rng.gen_range(1..=layouts),
    };
    r.extend(format!("{code:03}").bytes());
    r.extend((0..20).map(|_| rng.gen_range(b'a'..=b'z')));
    match rng.gen_range(0..40) {
        0 => r.truncate(20),
        1 => r.push(b'!'),
        2 => r.truncate(9),
        _ => {}
    }
    r
}

/// Random op sequence over a small key space so hits and collisions are common.
pub fn random_ops(rng: &mut StdRng, layouts: usize, count: usize) -> Vec<Op> {
    let space = rng.gen_range(8..200);
    (0..count)
        .map(|_| match rng.gen_range(0..100) {
            0..=9 => {
                let mut prefix = key(rng, space);
                match rng.gen_range(0..10) {
                    0 => prefix.push(b'0'),
                    1..=4 => prefix.truncate(rng.gen_range(0..KEY_LEN)),
                    _ => {}
                }
                let mode = [StartMode::Eq, StartMode::Ge, StartMode::Gt][rng.gen_range(0..3)];
                Op::Start { slot: rng.gen_range(0..CURSOR_SLOTS), prefix, mode }
            }
            10..=34 => Op::Next(rng.gen_range(0..CURSOR_SLOTS)),
            35..=44 => Op::Prev(rng.gen_range(0..CURSOR_SLOTS)),
            45..=54 => {
                let mut k = key(rng, space);
                if rng.gen_range(0..30) == 0 {
                    k.pop();
                }
                Op::Read(k)
            }
            55..=79 => {
                let k = key(rng, space);
                Op::Write(record(rng, &k, layouts))
            }
            80..=89 => {
                let k = key(rng, space);
                Op::Rewrite(record(rng, &k, layouts))
            }
            _ => {
                let mut k = key(rng, space);
                if rng.gen_range(0..30) == 0 {
                    k.push(b'9');
                }
                Op::Delete(k)
            }
        })
        .collect()
}

fn status<T>(r: Result<T, KsdsError>) -> Result<T, Status> {
    r.map_err(|e| e.status())
}

/// Applies `ops` to both `ds` and a fresh model, comparing every observable
/// result, then the full contents. `ds` must start empty.
pub fn check_against_model(ds: &mut dyn KeyedDataset, layouts: usize, ops: &[Op]) -> Result<(), String> {
    let mut model = Model::new(layouts);
    let mut m_cur: Vec<Option<ModelCursor>> = vec![None; CURSOR_SLOTS];
    let mut s_cur: Vec<Option<Cursor>> = vec![None; CURSOR_SLOTS];
    for (i, op) in ops.iter().enumerate() {
        let (expected, got): (Outcome, Outcome) = match op {
            Op::Start { slot, prefix, mode } => {
                let m = model.start(prefix, *mode);
                let s = status(ds.start(prefix, *mode));
                let pair = (m.as_ref().map(|_| vec![]).map_err(|e| *e), s.as_ref().map(|_| vec![]).map_err(|e| *e));
                if let (Ok(mc), Ok(sc)) = (m, s) {
                    m_cur[*slot] = Some(mc);
                    s_cur[*slot] = Some(sc);
                }
                pair
            }
            Op::Next(slot) | Op::Prev(slot) => {
                let (Some(mc), Some(sc)) = (m_cur[*slot].as_mut(), s_cur[*slot].as_mut()) else { continue };
                if matches!(op, Op::Next(_)) {
                    (model.read_next(mc), status(ds.read_next(sc)))
                } else {
                    (model.read_prev(mc), status(ds.read_prev(sc)))
                }
            }
            Op::Read(k) => (model.read(k), status(ds.read(k))),
            Op::Write(r) => (model.write(r).map(|_| vec![]), status(ds.write(r)).map(|_| vec![])),
            Op::Rewrite(r) => (model.rewrite(r).map(|_| vec![]), status(ds.rewrite(r)).map(|_| vec![])),
            Op::Delete(k) => (model.delete(k).map(|_| vec![]), status(ds.delete(k)).map(|_| vec![])),
        };
        if expected != got {
            return Err(format!("op #{i} {op:?}: model {expected:?}, dataset {got:?}"));
        }
    }
    let mut scan = Vec::new();
    let mut c = ds.first();
    loop {
        match ds.read_next(&mut c) {
            Ok(r) => scan.push(r),
            Err(KsdsError::EndOfFile) => break,
            Err(e) => return Err(format!("final scan: {e}")),
        }
    }
    if scan != model.records() {
        return Err(format!("final scan holds {} records, model {}", scan.len(), model.len()));
    }
    if ds.records() != model.records() || ds.len() != model.len() {
        return Err("records()/len() disagree with the model".into());
    }
    let keys: Vec<&[u8]> = scan.iter().map(|r| &r[..KEY_LEN]).collect();
    if !keys.windows(2).all(|w| w[0] < w[1]) {
        return Err("scan is not strictly increasing".into());
    }
    Ok(())
}

/// Applies the mutations in `ops` to `ds`, ignoring their (expected) errors.
pub fn apply_mutations(ds: &mut dyn KeyedDataset, ops: &[Op]) {
    for op in ops {
        let _ = match op {
            Op::Write(r) => ds.write(r),
            Op::Rewrite(r) => ds.rewrite(r),
            Op::Delete(k) => ds.delete(k),
            _ => Ok(()),
        };
    }
}
