//! Tournament-tree k-way merge across per-table sub-cursors.
//!
//! Each sub-cursor behaves like a result set opened on its table: it seeks
//! once per batch of [`FETCH_SIZE`] rows and hands them out one at a time.
//!
//! Cost model, recorded in [`OpStats`]: every row taken from a sub-cursor is
//! one advance and every match played in the tree is one comparison. Building
//! the tree fetches all N heads and plays P-1 matches (P = N rounded up to a
//! power of two); each later read steps only the previous winner (one
//! advance) and replays its path to the root (log2 P matches). The step is
//! taken lazily at the start of the following read, so a scan returning R
//! records costs N + R - 1 advances.

use std::collections::{BTreeMap, VecDeque};
use std::ops::Bound;

use super::{Dir, Gap, OpStats};

pub(crate) type Map = BTreeMap<Vec<u8>, Vec<u8>>;
type Row = (Vec<u8>, Vec<u8>);

/// Rows buffered per seek.
pub(crate) const FETCH_SIZE: usize = 64;

/// Up to `limit` rows of `map` in direction `dir` from gap `from`.
fn seek(map: &Map, dir: Dir, from: &Gap, limit: usize) -> VecDeque<Row> {
    let range = match (dir, from) {
        (Dir::Next, Gap::Before(k)) => map.range::<[u8], _>((Bound::Included(&k[..]), Bound::Unbounded)),
        (Dir::Next, Gap::After(k)) => map.range::<[u8], _>((Bound::Excluded(&k[..]), Bound::Unbounded)),
        (Dir::Prev, Gap::Before(k)) => map.range::<[u8], _>((Bound::Unbounded, Bound::Excluded(&k[..]))),
        (Dir::Prev, Gap::After(k)) => map.range::<[u8], _>((Bound::Unbounded, Bound::Included(&k[..]))),
    };
    let rows = |(k, r): (&Vec<u8>, &Vec<u8>)| (k.clone(), r.clone());
    match dir {
        Dir::Next => range.take(limit).map(rows).collect(),
        Dir::Prev => range.rev().take(limit).map(rows).collect(),
    }
}

/// One table's open cursor: buffered rows plus where the next seek resumes.
#[derive(Debug, Clone)]
struct SubCursor {
    buffer: VecDeque<Row>,
    resume: Gap,
    exhausted: bool,
}

impl SubCursor {
    fn open(from: &Gap) -> SubCursor {
        SubCursor { buffer: VecDeque::new(), resume: from.clone(), exhausted: false }
    }

    fn fetch(&mut self, map: &Map, dir: Dir, stats: &mut OpStats) -> Option<Row> {
        stats.sub_cursor_advances += 1;
        if self.buffer.is_empty() && !self.exhausted {
            self.buffer = seek(map, dir, &self.resume, FETCH_SIZE);
            self.exhausted = self.buffer.len() < FETCH_SIZE;
            if let Some((last, _)) = self.buffer.back() {
                self.resume = match dir {
                    Dir::Next => Gap::After(last.clone()),
                    Dir::Prev => Gap::Before(last.clone()),
                };
            }
        }
        self.buffer.pop_front()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Merge {
    pub(crate) dir: Dir,
    size: usize,
    subs: Vec<SubCursor>,
    heads: Vec<Option<Row>>,
    /// Winner leaf of each node; node 1 is the root, leaves sit at `size..2*size`.
    tree: Vec<usize>,
    pending: Option<usize>,
}

impl Merge {
    pub(crate) fn build(maps: &[Map], dir: Dir, from: &Gap, stats: &mut OpStats) -> Merge {
        let size = maps.len().max(1).next_power_of_two();
        let mut subs: Vec<SubCursor> = maps.iter().map(|_| SubCursor::open(from)).collect();
        let mut heads = vec![None; size];
        for (i, (sub, map)) in subs.iter_mut().zip(maps).enumerate() {
            heads[i] = sub.fetch(map, dir, stats);
        }
        let mut tree = vec![0; 2 * size];
        for (leaf, slot) in tree[size..].iter_mut().enumerate() {
            *slot = leaf;
        }
        let mut m = Merge { dir, size, subs, heads, tree, pending: None };
        for node in (1..size).rev() {
            m.tree[node] = m.play(m.tree[2 * node], m.tree[2 * node + 1], stats);
        }
        m
    }

    fn play(&self, a: usize, b: usize, stats: &mut OpStats) -> usize {
        stats.comparisons += 1;
        let a_wins = match (&self.heads[a], &self.heads[b]) {
            (Some((x, _)), Some((y, _))) => match self.dir {
                Dir::Next => x <= y,
                Dir::Prev => x >= y,
            },
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => true,
        };
        if a_wins {
            a
        } else {
            b
        }
    }

    fn replay(&mut self, leaf: usize, stats: &mut OpStats) {
        let mut node = (self.size + leaf) / 2;
        while node >= 1 {
            self.tree[node] = self.play(self.tree[2 * node], self.tree[2 * node + 1], stats);
            node /= 2;
        }
    }

    /// The next row in merge order and the table holding it. `maps` must be
    /// unchanged since [`Merge::build`]; callers guarantee this by
    /// invalidating cursors on every mutation.
    pub(crate) fn next(&mut self, maps: &[Map], stats: &mut OpStats) -> Option<(usize, Vec<u8>, Vec<u8>)> {
        if let Some(leaf) = self.pending.take() {
            self.heads[leaf] = self.subs[leaf].fetch(&maps[leaf], self.dir, stats);
            self.replay(leaf, stats);
        }
        // The winner's slot is refilled before it plays again, so its row
        // can move out instead of being copied.
        let winner = self.tree[1];
        let (key, record) = self.heads[winner].take()?;
        self.pending = Some(winner);
        Some((winner, key, record))
    }
}
