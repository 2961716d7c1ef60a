use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use super::{RecioError, RecordFileSpec, RecordReader};
use crate::codec::decode_field;

pub const INSPECT_HEADER: &str = "mfmig-inspect v1";

/// Writes the dump of every record read from `input`. Field decode errors are
/// reported inline; framing errors stop the dump and are returned.
pub fn inspect_to<R: Read, W: Write>(input: R, spec: &RecordFileSpec, out: &mut W) -> Result<usize, RecioError> {
    let mut reader = RecordReader::new(input, spec)?;
    writeln!(out, "{INSPECT_HEADER}")?;
    writeln!(
        out,
        "format={} lrecl={} encoding={} schema={}",
        spec.format,
        spec.lrecl,
        spec.encoding,
        spec.schema.as_ref().map(|s| s.name()).unwrap_or("none")
    )?;
    let mut count = 0;
    while let Some(record) = reader.next_record()? {
        count += 1;
        write!(out, "record {count} offset={} length={}", reader.record_offset(), record.len())?;
        let Some(schema) = &spec.schema else {
            writeln!(out)?;
            writeln!(out, "  hex={}", hex::encode_upper(&record))?;
            continue;
        };
        let layout = match schema.select_layout(&record, spec.encoding) {
            Ok(layout) => layout,
            Err(e) => {
                writeln!(out, " layout!{}", e.name())?;
                writeln!(out, "  hex={}", hex::encode_upper(&record))?;
                continue;
            }
        };
        writeln!(out, " layout={}", layout.name)?;
        for f in &layout.fields {
            match decode_field(&record, f, spec.encoding) {
                Ok(v) => writeln!(out, "  {}={}", f.name, v.display())?,
                Err(e) => {
                    let end = f.end().min(record.len());
                    let raw = record.get(f.offset..end).unwrap_or(&[]);
                    writeln!(out, "  {}!{} hex={}", f.name, e.name(), hex::encode_upper(raw))?;
                }
            }
        }
        if record.len() > layout.length {
            writeln!(out, "  <slack> hex={}", hex::encode_upper(&record[layout.length..]))?;
        }
    }
    writeln!(out, "{count} records")?;
    Ok(count)
}

/// Dumps the file at `path` as text.
pub fn inspect(path: &Path, spec: &RecordFileSpec) -> Result<String, RecioError> {
    let file = File::open(path).map_err(|e| RecioError::from(e).in_file(path))?;
    let mut out = Vec::new();
    inspect_to(BufReader::new(file), spec, &mut out).map_err(|e| e.in_file(path))?;
    Ok(String::from_utf8(out).expect("dump is ASCII"))
}
