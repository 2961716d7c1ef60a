//! Fixed- and variable-format record files.

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Encoding;
use crate::copybook::CopybookSchema;

mod compare;
mod inspect;

pub use compare::{compare_files, compare_records, CompareOptions, CompareReport, FieldDiff, IgnoreMask, MatchBy, Mismatch, MismatchKind, Side};
pub use inspect::{inspect, inspect_to, INSPECT_HEADER};

/// Largest payload a 2-byte RDW can describe.
pub const MAX_VARIABLE_LRECL: usize = u16::MAX as usize - 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    Fixed,
    Variable,
}

impl RecordFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordFormat::Fixed => "fixed",
            RecordFormat::Variable => "variable",
        }
    }
}

impl fmt::Display for RecordFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecordFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fixed" | "fb" | "f" => Ok(RecordFormat::Fixed),
            "variable" | "vb" | "v" => Ok(RecordFormat::Variable),
            other => Err(format!("unknown record format `{other}` (expected fixed or variable)")),
        }
    }
}

/// Primary key extent within a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeySpec {
    pub offset: usize,
    pub length: usize,
}

impl KeySpec {
    pub fn new(offset: usize, length: usize) -> KeySpec {
        KeySpec { offset, length }
    }

    pub fn end(&self) -> usize {
        self.offset + self.length
    }

    pub fn extract<'a>(&self, record: &'a [u8]) -> Option<&'a [u8]> {
        record.get(self.offset..self.end())
    }

    /// Checks the key lies inside every layout of `schema`.
    pub fn check(&self, schema: &CopybookSchema) -> Result<(), String> {
        if self.length == 0 {
            return Err("key length must be positive".into());
        }
        for layout in schema.layouts() {
            if self.end() > layout.length {
                return Err(format!(
                    "key {}..{} extends past layout `{}` ({} bytes)",
                    self.offset,
                    self.end(),
                    layout.name,
                    layout.length
                ));
            }
        }
        Ok(())
    }
}

impl fmt::Display for KeySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.offset, self.length)
    }
}

impl FromStr for KeySpec {
    type Err = String;

    /// `offset,length`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (o, l) = s.split_once(',').ok_or_else(|| format!("expected OFFSET,LENGTH, got `{s}`"))?;
        let offset = o.trim().parse().map_err(|_| format!("bad key offset `{o}`"))?;
        let length: usize = l.trim().parse().map_err(|_| format!("bad key length `{l}`"))?;
        if length == 0 {
            return Err("key length must be positive".into());
        }
        Ok(KeySpec { offset, length })
    }
}

#[derive(Debug, Clone)]
pub struct RecordFileSpec {
    pub format: RecordFormat,
    /// FIXED: exact record length. VARIABLE: maximum payload length.
    pub lrecl: usize,
    pub encoding: Encoding,
    pub schema: Option<CopybookSchema>,
    pub key: Option<KeySpec>,
}

impl RecordFileSpec {
    pub fn new(format: RecordFormat, lrecl: usize, encoding: Encoding) -> RecordFileSpec {
        RecordFileSpec { format, lrecl, encoding, schema: None, key: None }
    }

    pub fn fixed(lrecl: usize, encoding: Encoding) -> RecordFileSpec {
        RecordFileSpec::new(RecordFormat::Fixed, lrecl, encoding)
    }

    pub fn variable(lrecl: usize, encoding: Encoding) -> RecordFileSpec {
        RecordFileSpec::new(RecordFormat::Variable, lrecl, encoding)
    }

    pub fn with_schema(mut self, schema: CopybookSchema) -> RecordFileSpec {
        self.schema = Some(schema);
        self
    }

    pub fn with_key(mut self, key: KeySpec) -> RecordFileSpec {
        self.key = Some(key);
        self
    }

    pub fn validate(&self) -> Result<(), RecioError> {
        if self.lrecl == 0 {
            return Err(RecioError::InvalidSpec("lrecl must be positive".into()));
        }
        if self.format == RecordFormat::Variable && self.lrecl > MAX_VARIABLE_LRECL {
            return Err(RecioError::InvalidSpec(format!(
                "variable lrecl {} exceeds {MAX_VARIABLE_LRECL}",
                self.lrecl
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RecioError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: Box<RecioError> },
    #[error("invalid file spec: {0}")]
    InvalidSpec(String),
    #[error("{trailing} trailing bytes at offset {offset} (file size is not a multiple of lrecl {lrecl})")]
    TrailingBytes { offset: u64, trailing: usize, lrecl: usize },
    #[error("malformed RDW at offset {offset}: {reason}")]
    MalformedRdw { offset: u64, reason: String },
    #[error("offset {offset} looks like a block descriptor word; blocked files are not supported, deblock to RDW records first")]
    BdwNotSupported { offset: u64 },
    #[error("record {ordinal} has length {length}; {format} lrecl is {lrecl}")]
    RecordLengthViolation { ordinal: usize, length: usize, lrecl: usize, format: RecordFormat },
    #[error("record {ordinal} ({length} bytes) does not contain key {key}")]
    KeyOutOfRange { ordinal: usize, length: usize, key: KeySpec },
    #[error("key matching requires a key spec")]
    KeyRequired,
}

impl RecioError {
    pub fn in_file(self, path: &Path) -> RecioError {
        match self {
            e @ RecioError::File { .. } => e,
            e => RecioError::File { path: path.to_path_buf(), source: Box::new(e) },
        }
    }

    /// The error without any file context.
    pub fn root(&self) -> &RecioError {
        match self {
            RecioError::File { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for framing/format problems, as opposed to I/O failures.
    pub fn is_format(&self) -> bool {
        !matches!(self.root(), RecioError::Io(_))
    }
}

/// Streaming reader over framed records.
pub struct RecordReader<R> {
    inner: R,
    format: RecordFormat,
    lrecl: usize,
    offset: u64,
    last_offset: u64,
    done: bool,
}

impl<R: Read> RecordReader<R> {
    pub fn new(inner: R, spec: &RecordFileSpec) -> Result<Self, RecioError> {
        spec.validate()?;
        Ok(RecordReader { inner, format: spec.format, lrecl: spec.lrecl, offset: 0, last_offset: 0, done: false })
    }

    /// Byte offset of the frame of the record most recently returned.
    pub fn record_offset(&self) -> u64 {
        self.last_offset
    }

    pub fn next_record(&mut self) -> Result<Option<Vec<u8>>, RecioError> {
        if self.done {
            return Ok(None);
        }
        let result = match self.format {
            RecordFormat::Fixed => self.next_fixed(),
            RecordFormat::Variable => self.next_variable(),
        };
        if !matches!(result, Ok(Some(_))) {
            self.done = true;
        }
        result
    }

    fn next_fixed(&mut self) -> Result<Option<Vec<u8>>, RecioError> {
        let mut buf = vec![0u8; self.lrecl];
        let got = read_full(&mut self.inner, &mut buf)?;
        if got == 0 {
            return Ok(None);
        }
        if got < self.lrecl {
            return Err(RecioError::TrailingBytes { offset: self.offset, trailing: got, lrecl: self.lrecl });
        }
        self.last_offset = self.offset;
        self.offset += self.lrecl as u64;
        Ok(Some(buf))
    }

    fn next_variable(&mut self) -> Result<Option<Vec<u8>>, RecioError> {
        let at = self.offset;
        let malformed = |reason: String| RecioError::MalformedRdw { offset: at, reason };
        let mut rdw = [0u8; 4];
        let got = read_full(&mut self.inner, &mut rdw)?;
        if got == 0 {
            return Ok(None);
        }
        if got < 4 {
            return Err(malformed(format!("truncated descriptor ({got} of 4 bytes)")));
        }
        if rdw[2] != 0 || rdw[3] != 0 {
            return Err(malformed(format!("reserved bytes are {:02X}{:02X}, expected 0000", rdw[2], rdw[3])));
        }
        let length = u16::from_be_bytes([rdw[0], rdw[1]]) as usize;
        if length < 4 {
            return Err(malformed(format!("length {length} is less than 4")));
        }
        let payload_len = length - 4;
        let mut payload = vec![0u8; payload_len];
        let got = read_full(&mut self.inner, &mut payload)?;
        if payload_len > self.lrecl {
            // A block descriptor has the same shape as an RDW but frames a
            // whole block; the tell is a well-formed RDW right behind it.
            if at == 0 && got >= 4 {
                let inner = u16::from_be_bytes([payload[0], payload[1]]) as usize;
                if payload[2] == 0 && payload[3] == 0 && (4..=self.lrecl + 4).contains(&inner) && inner <= payload_len {
                    return Err(RecioError::BdwNotSupported { offset: at });
                }
            }
            return Err(malformed(format!("length {length} exceeds lrecl {} + 4", self.lrecl)));
        }
        if got < payload_len {
            return Err(malformed(format!("length {length} overruns end of file ({} payload bytes present)", got)));
        }
        self.last_offset = at;
        self.offset += length as u64;
        Ok(Some(payload))
    }
}

impl<R: Read> Iterator for RecordReader<R> {
    type Item = Result<Vec<u8>, RecioError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Writer that frames records and enforces lrecl.
pub struct RecordWriter<W: Write> {
    inner: W,
    format: RecordFormat,
    lrecl: usize,
    count: usize,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(inner: W, spec: &RecordFileSpec) -> Result<Self, RecioError> {
        spec.validate()?;
        Ok(RecordWriter { inner, format: spec.format, lrecl: spec.lrecl, count: 0 })
    }

    pub fn write_record(&mut self, record: &[u8]) -> Result<(), RecioError> {
        let ok = match self.format {
            RecordFormat::Fixed => record.len() == self.lrecl,
            RecordFormat::Variable => record.len() <= self.lrecl,
        };
        if !ok {
            return Err(RecioError::RecordLengthViolation {
                ordinal: self.count + 1,
                length: record.len(),
                lrecl: self.lrecl,
                format: self.format,
            });
        }
        if self.format == RecordFormat::Variable {
            let len = (record.len() + 4) as u16;
            let [hi, lo] = len.to_be_bytes();
            self.inner.write_all(&[hi, lo, 0, 0])?;
        }
        self.inner.write_all(record)?;
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(mut self) -> Result<W, RecioError> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn open_records(path: &Path, spec: &RecordFileSpec) -> Result<RecordReader<BufReader<File>>, RecioError> {
    let file = File::open(path).map_err(|e| RecioError::from(e).in_file(path))?;
    RecordReader::new(BufReader::new(file), spec)
}

/// Reads every record payload in file order.
pub fn read_records(path: &Path, spec: &RecordFileSpec) -> Result<Vec<Vec<u8>>, RecioError> {
    open_records(path, spec)?.collect::<Result<_, _>>().map_err(|e| e.in_file(path))
}

/// Decodes framed records from an in-memory buffer.
pub fn parse_records(bytes: &[u8], spec: &RecordFileSpec) -> Result<Vec<Vec<u8>>, RecioError> {
    RecordReader::new(bytes, spec)?.collect()
}

/// Frames records into an in-memory buffer.
pub fn frame_records<I, B>(records: I, spec: &RecordFileSpec) -> Result<Vec<u8>, RecioError>
where
    I: IntoIterator<Item = B>,
    B: AsRef<[u8]>,
{
    let mut w = RecordWriter::new(Vec::new(), spec)?;
    for r in records {
        w.write_record(r.as_ref())?;
    }
    w.finish()
}

/// Writes `records` to `path`, replacing it. Returns the record count.
pub fn write_records<I, B>(path: &Path, spec: &RecordFileSpec, records: I) -> Result<usize, RecioError>
where
    I: IntoIterator<Item = B>,
    B: AsRef<[u8]>,
{
    let run = || -> Result<usize, RecioError> {
        let mut w = RecordWriter::new(BufWriter::new(File::create(path)?), spec)?;
        for r in records {
            w.write_record(r.as_ref())?;
        }
        let count = w.count();
        w.finish()?;
        Ok(count)
    };
    run().map_err(|e| e.in_file(path))
}
