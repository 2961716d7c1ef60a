use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{read_records, KeySpec, RecioError, RecordFileSpec};
use crate::codec::decode_field;
use crate::copybook::{FieldSpec, RecordLayout};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchBy {
    #[default]
    Order,
    Key,
}

impl FromStr for MatchBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "order" => Ok(MatchBy::Order),
            "key" => Ok(MatchBy::Key),
            other => Err(format!("unknown match mode `{other}` (expected order or key)")),
        }
    }
}

/// Bytes excluded from comparison: a named field (in whichever layout each
/// record uses) or an absolute byte range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IgnoreMask {
    Field(String),
    Range { offset: usize, length: usize },
}

impl FromStr for IgnoreMask {
    type Err = String;

    /// `OFFSET,LENGTH` for a byte range, anything else is a field name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some((o, l)) = s.split_once(',') {
            if let (Ok(offset), Ok(length)) = (o.trim().parse(), l.trim().parse()) {
                return Ok(IgnoreMask::Range { offset, length });
            }
            return Err(format!("bad byte range `{s}` (expected OFFSET,LENGTH)"));
        }
        if s.is_empty() {
            return Err("empty ignore mask".into());
        }
        Ok(IgnoreMask::Field(s.to_ascii_uppercase()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub match_by: MatchBy,
    pub ignore: Vec<IgnoreMask>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MismatchKind {
    FieldMismatch,
    OnlyInA,
    OnlyInB,
}

/// One differing extent. Pseudo-fields: `<length>` when record lengths differ,
/// `<slack>` for bytes past the layout, `<bytes>` for raw ranges when the two
/// records do not share a layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDiff {
    pub field: String,
    pub offset: usize,
    pub length: usize,
    pub a_hex: String,
    pub b_hex: String,
    pub a_value: Option<String>,
    pub b_value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub kind: MismatchKind,
    /// 1-based record ordinals in each file.
    pub ordinal_a: Option<usize>,
    pub ordinal_b: Option<usize>,
    /// Key bytes, hex, when matching by key.
    pub key: Option<String>,
    pub layout_a: Option<String>,
    pub layout_b: Option<String>,
    pub fields: Vec<FieldDiff>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompareReport {
    pub records_a: usize,
    pub records_b: usize,
    pub equal: usize,
    pub mismatches: Vec<Mismatch>,
}

impl CompareReport {
    pub fn is_equal(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn field_mismatch_count(&self) -> usize {
        self.mismatches.iter().map(|m| m.fields.len().max(1)).sum()
    }
}

/// Compares two record files under one spec.
pub fn compare_files(a: &Path, b: &Path, spec: &RecordFileSpec, options: &CompareOptions) -> Result<CompareReport, RecioError> {
    let ra = read_records(a, spec)?;
    let rb = read_records(b, spec)?;
    compare_records(&ra, &rb, spec, options).map_err(|(side, e)| e.in_file(if side == Side::A { a } else { b }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

/// Compares in-memory record lists. Errors name the side they came from.
pub fn compare_records(
    a: &[Vec<u8>],
    b: &[Vec<u8>],
    spec: &RecordFileSpec,
    options: &CompareOptions,
) -> Result<CompareReport, (Side, RecioError)> {
    let mut report = CompareReport { records_a: a.len(), records_b: b.len(), ..Default::default() };
    let ctx = Ctx { spec, options };
    match options.match_by {
        MatchBy::Order => {
            for i in 0..a.len().max(b.len()) {
                ctx.pair(&mut report, a.get(i).map(|r| (i + 1, r)), b.get(i).map(|r| (i + 1, r)), None);
            }
        }
        MatchBy::Key => {
            let key = spec.key.ok_or((Side::A, RecioError::KeyRequired))?;
            let ga = group_by_key(a, key).map_err(|e| (Side::A, e))?;
            let mut gb = group_by_key(b, key).map_err(|e| (Side::B, e))?;
            let mut keys: Vec<&[u8]> = ga.keys().copied().collect();
            keys.extend(gb.keys().copied().filter(|k| !ga.contains_key(k)));
            keys.sort_unstable();
            let mut ga = ga;
            for k in keys {
                let mut qa = ga.remove(k).unwrap_or_default();
                let mut qb = gb.remove(k).unwrap_or_default();
                while !qa.is_empty() || !qb.is_empty() {
                    let ia = qa.pop_front();
                    let ib = qb.pop_front();
                    ctx.pair(
                        &mut report,
                        ia.map(|i| (i + 1, &a[i])),
                        ib.map(|i| (i + 1, &b[i])),
                        Some(hex::encode_upper(k)),
                    );
                }
            }
        }
    }
    Ok(report)
}

fn group_by_key(records: &[Vec<u8>], key: KeySpec) -> Result<BTreeMap<&[u8], VecDeque<usize>>, RecioError> {
    let mut groups: BTreeMap<&[u8], VecDeque<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let k = key.extract(r).ok_or(RecioError::KeyOutOfRange { ordinal: i + 1, length: r.len(), key })?;
        groups.entry(k).or_default().push_back(i);
    }
    Ok(groups)
}

struct Ctx<'a> {
    spec: &'a RecordFileSpec,
    options: &'a CompareOptions,
}

impl Ctx<'_> {
    fn layout(&self, record: &[u8]) -> Option<&RecordLayout> {
        self.spec.schema.as_ref()?.select_layout(record, self.spec.encoding).ok()
    }

    fn pair(&self, report: &mut CompareReport, a: Option<(usize, &Vec<u8>)>, b: Option<(usize, &Vec<u8>)>, key: Option<String>) {
        let (kind, fields) = match (a, b) {
            (Some((_, ra)), Some((_, rb))) => {
                let fields = self.diff(ra, rb);
                if fields.is_empty() {
                    report.equal += 1;
                    return;
                }
                (MismatchKind::FieldMismatch, fields)
            }
            (Some(_), None) => (MismatchKind::OnlyInA, Vec::new()),
            (None, Some(_)) => (MismatchKind::OnlyInB, Vec::new()),
            (None, None) => return,
        };
        report.mismatches.push(Mismatch {
            kind,
            ordinal_a: a.map(|(i, _)| i),
            ordinal_b: b.map(|(i, _)| i),
            key,
            layout_a: a.and_then(|(_, r)| self.layout(r)).map(|l| l.name.clone()),
            layout_b: b.and_then(|(_, r)| self.layout(r)).map(|l| l.name.clone()),
            fields,
        });
    }

    fn ignored(&self, record: &[u8], layout: Option<&RecordLayout>, mask: &mut [bool]) {
        for m in &self.options.ignore {
            match m {
                IgnoreMask::Range { offset, length } => {
                    let end = (offset + length).min(mask.len());
                    for x in mask.iter_mut().take(end).skip(*offset) {
                        *x = true;
                    }
                }
                IgnoreMask::Field(name) => {
                    let Some(layout) = layout else { continue };
                    for f in layout.fields.iter().filter(|f| field_matches(&f.name, name)) {
                        let end = f.end().min(mask.len()).min(record.len().max(f.offset));
                        for x in mask.iter_mut().take(end).skip(f.offset) {
                            *x = true;
                        }
                    }
                }
            }
        }
    }

    /// Differences between two records, empty iff every non-ignored byte and
    /// the lengths agree.
    fn diff(&self, a: &[u8], b: &[u8]) -> Vec<FieldDiff> {
        let la = self.layout(a);
        let lb = self.layout(b);
        let width = a.len().max(b.len());
        let mut mask = vec![false; width];
        self.ignored(a, la, &mut mask);
        self.ignored(b, lb, &mut mask);

        let differs = |i: usize| !mask[i] && a.get(i) != b.get(i);
        let mut out = Vec::new();
        if a.len() != b.len() {
            out.push(FieldDiff {
                field: "<length>".into(),
                offset: a.len().min(b.len()),
                length: width - a.len().min(b.len()),
                a_hex: String::new(),
                b_hex: String::new(),
                a_value: Some(a.len().to_string()),
                b_value: Some(b.len().to_string()),
            });
        }
        let common = a.len().min(b.len());
        if !(0..common).any(differs) {
            return out;
        }

        match (la, lb) {
            (Some(la), Some(lb)) if la.name == lb.name => {
                let mut covered = vec![false; common];
                for f in &la.fields {
                    let end = f.end().min(common);
                    for c in covered.iter_mut().take(end).skip(f.offset) {
                        *c = true;
                    }
                    if (f.offset..end).any(differs) {
                        out.push(FieldDiff {
                            field: f.name.clone(),
                            offset: f.offset,
                            length: f.length,
                            a_hex: hex_slice(a, f.offset, f.end()),
                            b_hex: hex_slice(b, f.offset, f.end()),
                            a_value: Some(render(a, f, self.spec)),
                            b_value: Some(render(b, f, self.spec)),
                        });
                    }
                }
                for (start, end) in runs(common, |i| !covered[i] && differs(i)) {
                    out.push(raw_diff("<slack>", a, b, start, end));
                }
            }
            _ => {
                for (start, end) in runs(common, differs) {
                    out.push(raw_diff("<bytes>", a, b, start, end));
                }
            }
        }
        out
    }
}

fn field_matches(field: &str, mask: &str) -> bool {
    // A bare name covers every occurrence of a subscripted field.
    field == mask || field.strip_prefix(mask).is_some_and(|rest| rest.starts_with('('))
}

fn render(record: &[u8], f: &FieldSpec, spec: &RecordFileSpec) -> String {
    match decode_field(record, f, spec.encoding) {
        Ok(v) => v.display(),
        Err(e) => format!("!{}", e.name()),
    }
}

fn hex_slice(r: &[u8], start: usize, end: usize) -> String {
    hex::encode_upper(&r[start.min(r.len())..end.min(r.len())])
}

fn raw_diff(name: &str, a: &[u8], b: &[u8], start: usize, end: usize) -> FieldDiff {
    FieldDiff {
        field: name.into(),
        offset: start,
        length: end - start,
        a_hex: hex_slice(a, start, end),
        b_hex: hex_slice(b, start, end),
        a_value: None,
        b_value: None,
    }
}

/// Maximal runs of indices in `0..n` satisfying `pred`.
fn runs(n: usize, pred: impl Fn(usize) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for i in 0..=n {
        let hit = i < n && pred(i);
        match (hit, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    out
}
