//! Field and record codecs.
//!
//! Display data (alphanumeric text and zoned decimal) is character data and
//! changes representation between EBCDIC and ASCII. Computational data
//! (COMP binary and COMP-3 packed decimal) is binary and must survive a
//! character-set conversion byte for byte; [`transcode_record`] enforces
//! that split per field.
//!
//! Numbers are carried as exact [`Decimal`]s; there is no floating point on
//! any path.

pub mod cp037;
mod decimal;

use std::fmt;
use std::str::FromStr;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::copybook::{Category, CopybookSchema, FieldSpec, LayoutError};
use cp037::{ZoneSign, EBCDIC_TO_LATIN1, LATIN1_TO_EBCDIC};

pub use decimal::{Decimal, ParseDecimalError, MAX_SCALE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Ebcdic,
    Ascii,
}

impl Encoding {
    pub fn space(self) -> u8 {
        match self {
            Encoding::Ebcdic => cp037::EBCDIC_SPACE,
            Encoding::Ascii => cp037::ASCII_SPACE,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Encoding::Ebcdic => "ebcdic",
            Encoding::Ascii => "ascii",
        }
    }
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Encoding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ebcdic" | "cp037" => Ok(Encoding::Ebcdic),
            "ascii" | "latin1" => Ok(Encoding::Ascii),
            other => Err(format!("unknown encoding `{other}` (expected ebcdic or ascii)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    EbcdicToAscii,
    AsciiToEbcdic,
}

impl Direction {
    pub fn new(from: Encoding, to: Encoding) -> Option<Direction> {
        match (from, to) {
            (Encoding::Ebcdic, Encoding::Ascii) => Some(Direction::EbcdicToAscii),
            (Encoding::Ascii, Encoding::Ebcdic) => Some(Direction::AsciiToEbcdic),
            _ => None,
        }
    }

    pub fn source(self) -> Encoding {
        match self {
            Direction::EbcdicToAscii => Encoding::Ebcdic,
            Direction::AsciiToEbcdic => Encoding::Ascii,
        }
    }

    pub fn reverse(self) -> Direction {
        match self {
            Direction::EbcdicToAscii => Direction::AsciiToEbcdic,
            Direction::AsciiToEbcdic => Direction::EbcdicToAscii,
        }
    }
}

/// What happens when a value does not fit its field.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverflowPolicy {
    /// Keep the low-order digits (and drop excess fraction digits, and the
    /// sign on unsigned fields), as a COBOL MOVE does.
    #[default]
    LegacyTruncate,
    /// Refuse to lose any digit or sign.
    Strict,
}

impl FromStr for OverflowPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "legacy-truncate" | "truncate" | "legacy" => Ok(OverflowPolicy::LegacyTruncate),
            "strict" => Ok(OverflowPolicy::Strict),
            other => Err(format!("unknown overflow policy `{other}` (expected truncate or strict)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldValue {
    Text(String),
    Number(Decimal),
}

impl FieldValue {
    /// Normalised form used for discriminator lookups and predicates: text
    /// without trailing spaces, numbers without trailing fractional zeros.
    pub fn canonical_key(&self) -> String {
        match self {
            FieldValue::Text(s) => s.trim_end_matches(' ').to_string(),
            FieldValue::Number(d) => d.normalized().to_string(),
        }
    }

    /// Single-line rendering for dumps: trailing spaces trimmed, control and
    /// non-ASCII characters escaped as `\xNN`.
    pub fn display(&self) -> String {
        match self {
            FieldValue::Number(d) => d.to_string(),
            FieldValue::Text(s) => {
                let mut out = String::with_capacity(s.len());
                for c in s.trim_end_matches(' ').chars() {
                    if (' '..='~').contains(&c) && c != '\\' {
                        out.push(c);
                    } else {
                        out.push_str(&format!("\\x{:02X}", c as u32));
                    }
                }
                out
            }
        }
    }
}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldValue::Text(s) => f.write_str(s),
            FieldValue::Number(d) => d.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("record of {have} bytes is too short (needs {need})")]
    RecordTooShort { need: usize, have: usize },
    #[error("invalid packed digit nibble in byte 0x{byte:02X} at offset {offset}")]
    InvalidNibble { offset: usize, byte: u8 },
    #[error("invalid packed sign nibble 0x{nibble:X} at offset {offset}")]
    InvalidSignNibble { offset: usize, nibble: u8 },
    #[error("invalid zoned decimal byte 0x{byte:02X} at offset {offset}")]
    InvalidZonedByte { offset: usize, byte: u8 },
    #[error("value {value} does not fit in {digits} digits")]
    Overflow { value: String, digits: u8 },
    #[error("value {value} has more than {scale} decimal places")]
    PrecisionLoss { value: String, scale: u8 },
    #[error("negative value {value} for unsigned field")]
    SignLoss { value: String },
    #[error("text of {length} characters does not fit in {max} bytes")]
    TextTooLong { length: usize, max: usize },
    #[error("{found} value for {expected} field")]
    TypeMismatch { expected: Category, found: &'static str },
    #[error("character {ch:?} has no single-byte representation")]
    UnmappableChar { ch: char },
}

impl CodecError {
    /// Short stable name used in dumps and reports.
    pub fn name(&self) -> &'static str {
        match self {
            CodecError::RecordTooShort { .. } => "RecordTooShort",
            CodecError::InvalidNibble { .. } => "InvalidNibble",
            CodecError::InvalidSignNibble { .. } => "InvalidSignNibble",
            CodecError::InvalidZonedByte { .. } => "InvalidZonedByte",
            CodecError::Overflow { .. } => "OverflowError",
            CodecError::PrecisionLoss { .. } => "PrecisionLoss",
            CodecError::SignLoss { .. } => "SignLoss",
            CodecError::TextTooLong { .. } => "TextTooLong",
            CodecError::TypeMismatch { .. } => "TypeMismatch",
            CodecError::UnmappableChar { .. } => "UnmappableChar",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("record of {have} bytes does not match layout `{layout}` ({need} bytes)")]
    RecordLengthMismatch { layout: String, need: usize, have: usize },
    #[error("field {field} at offset {offset}: {source}")]
    Field { field: String, offset: usize, source: CodecError },
    #[error("byte 0x{byte:02X} at offset {offset} has no counterpart in the target code page")]
    UnmappableByte { offset: usize, byte: u8 },
}

pub fn decode_field(record: &[u8], spec: &FieldSpec, encoding: Encoding) -> Result<FieldValue, CodecError> {
    let end = spec.end();
    if record.len() < end {
        return Err(CodecError::RecordTooShort { need: end, have: record.len() });
    }
    let bytes = &record[spec.offset..end];
    let coefficient = match spec.category {
        Category::Alphanumeric => {
            let text = match encoding {
                Encoding::Ebcdic => bytes.iter().map(|&b| EBCDIC_TO_LATIN1[b as usize] as char).collect(),
                Encoding::Ascii => bytes.iter().map(|&b| b as char).collect(),
            };
            return Ok(FieldValue::Text(text));
        }
        Category::ZonedNumeric => decode_zoned(bytes, spec.offset, encoding)?,
        Category::PackedNumeric => decode_packed(bytes, spec.offset)?,
        Category::BinaryNumeric => decode_binary(bytes, spec.signed),
    };
    Ok(FieldValue::Number(Decimal::new(coefficient, spec.scale)))
}

fn decode_zoned(bytes: &[u8], offset: usize, encoding: Encoding) -> Result<i128, CodecError> {
    let mut value: i128 = 0;
    let mut negative = false;
    let last = bytes.len().saturating_sub(1);
    for (i, &b) in bytes.iter().enumerate() {
        let bad = || CodecError::InvalidZonedByte { offset: offset + i, byte: b };
        let digit = if i == last {
            let (d, sign) = match encoding {
                Encoding::Ebcdic => cp037::ebcdic_zone(b),
                Encoding::Ascii => cp037::ascii_zone(b),
            }
            .ok_or_else(bad)?;
            negative = sign == ZoneSign::Negative;
            d
        } else {
            match encoding {
                Encoding::Ebcdic if (0xF0..=0xF9).contains(&b) => b & 0x0F,
                Encoding::Ascii if b.is_ascii_digit() => b - b'0',
                _ => return Err(bad()),
            }
        };
        value = value * 10 + digit as i128;
    }
    Ok(if negative { -value } else { value })
}

fn decode_packed(bytes: &[u8], offset: usize) -> Result<i128, CodecError> {
    let mut value: i128 = 0;
    let last = bytes.len().saturating_sub(1);
    for (i, &b) in bytes.iter().enumerate() {
        let hi = b >> 4;
        let lo = b & 0x0F;
        if hi > 9 || (i != last && lo > 9) {
            return Err(CodecError::InvalidNibble { offset: offset + i, byte: b });
        }
        value = value * 10 + hi as i128;
        if i != last {
            value = value * 10 + lo as i128;
        } else {
            return match lo {
                0xC | 0xF => Ok(value),
                0xD => Ok(-value),
                nibble => Err(CodecError::InvalidSignNibble { offset: offset + i, nibble }),
            };
        }
    }
    Ok(value)
}

fn decode_binary(bytes: &[u8], signed: bool) -> i128 {
    let mut raw: u128 = 0;
    for &b in bytes {
        raw = (raw << 8) | b as u128;
    }
    let bits = bytes.len() * 8;
    if signed && bits > 0 && bits < 128 && raw >> (bits - 1) & 1 == 1 {
        raw as i128 - (1i128 << bits)
    } else {
        raw as i128
    }
}

pub fn encode_field(
    value: &FieldValue,
    spec: &FieldSpec,
    encoding: Encoding,
    policy: OverflowPolicy,
) -> Result<Vec<u8>, CodecError> {
    match (value, spec.category) {
        (FieldValue::Text(text), Category::Alphanumeric) => encode_text(text, spec.length, encoding, policy),
        (FieldValue::Number(n), c) if c.is_numeric() => encode_number(*n, spec, encoding, policy),
        (FieldValue::Text(_), expected) => Err(CodecError::TypeMismatch { expected, found: "text" }),
        (FieldValue::Number(_), expected) => Err(CodecError::TypeMismatch { expected, found: "number" }),
    }
}

fn encode_text(text: &str, length: usize, encoding: Encoding, policy: OverflowPolicy) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(length);
    for ch in text.chars() {
        let code = ch as u32;
        if code > 0xFF {
            return Err(CodecError::UnmappableChar { ch });
        }
        if out.len() == length {
            if policy == OverflowPolicy::Strict {
                return Err(CodecError::TextTooLong { length: text.chars().count(), max: length });
            }
            break;
        }
        out.push(match encoding {
            Encoding::Ebcdic => LATIN1_TO_EBCDIC[code as usize],
            Encoding::Ascii => code as u8,
        });
    }
    out.resize(length, encoding.space());
    Ok(out)
}

/// Reduces `value` to a magnitude below `10^digits` at the field's scale.
/// Returns the magnitude and whether the stored value is negative.
fn fit_number(value: Decimal, spec: &FieldSpec, policy: OverflowPolicy) -> Result<(u64, bool), CodecError> {
    let strict = policy == OverflowPolicy::Strict;
    let digits = spec.digits as u32;
    let modulus = 10u128.pow(digits);
    let magnitude = value.coefficient().unsigned_abs();
    let negative = value.is_negative();

    let fitted = if spec.scale >= value.scale() {
        let widen = (spec.scale - value.scale()) as u32;
        if widen > digits {
            if magnitude != 0 && strict {
                return Err(CodecError::Overflow { value: value.to_string(), digits: spec.digits });
            }
            0
        } else {
            let room = 10u128.pow(digits - widen);
            if magnitude >= room && strict {
                return Err(CodecError::Overflow { value: value.to_string(), digits: spec.digits });
            }
            (magnitude % room) * 10u128.pow(widen)
        }
    } else {
        let drop = (value.scale() - spec.scale) as u32;
        let factor = 10u128.pow(drop);
        if !magnitude.is_multiple_of(factor) && strict {
            return Err(CodecError::PrecisionLoss { value: value.to_string(), scale: spec.scale });
        }
        let truncated = magnitude / factor;
        if truncated >= modulus && strict {
            return Err(CodecError::Overflow { value: value.to_string(), digits: spec.digits });
        }
        truncated % modulus
    };

    if negative && !spec.signed && fitted != 0 {
        if strict {
            return Err(CodecError::SignLoss { value: value.to_string() });
        }
        return Ok((fitted as u64, false));
    }
    Ok((fitted as u64, negative && fitted != 0))
}

fn encode_number(value: Decimal, spec: &FieldSpec, encoding: Encoding, policy: OverflowPolicy) -> Result<Vec<u8>, CodecError> {
    let (magnitude, negative) = fit_number(value, spec, policy)?;
    let digits = spec.digits as usize;
    Ok(match spec.category {
        Category::ZonedNumeric => {
            let text = format!("{magnitude:0>digits$}");
            let sign = match (spec.signed, negative) {
                (false, _) => ZoneSign::Unsigned,
                (true, false) => ZoneSign::Positive,
                (true, true) => ZoneSign::Negative,
            };
            let last = digits - 1;
            text.bytes()
                .enumerate()
                .map(|(i, b)| {
                    let d = b - b'0';
                    let s = if i == last { sign } else { ZoneSign::Unsigned };
                    match encoding {
                        Encoding::Ebcdic => cp037::ebcdic_zoned_byte(d, s),
                        Encoding::Ascii => cp037::ascii_zoned_byte(d, s),
                    }
                })
                .collect()
        }
        Category::PackedNumeric => {
            let len = spec.length;
            let nibbles = len * 2 - 1;
            let text = format!("{magnitude:0>nibbles$}");
            let mut nib: Vec<u8> = text.bytes().map(|b| b - b'0').collect();
            nib.push(match (spec.signed, negative) {
                (false, _) => 0xF,
                (true, false) => 0xC,
                (true, true) => 0xD,
            });
            nib.chunks(2).map(|p| (p[0] << 4) | p[1]).collect()
        }
        Category::BinaryNumeric => {
            let v: i128 = if negative { -(magnitude as i128) } else { magnitude as i128 };
            let be = v.to_be_bytes();
            be[16 - spec.length..].to_vec()
        }
        Category::Alphanumeric => unreachable!("checked by encode_field"),
    })
}

/// Decoded record: the selected layout and every field value in layout order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedRecord {
    pub layout: String,
    pub fields: Vec<(String, FieldValue)>,
}

impl DecodedRecord {
    pub fn get(&self, name: &str) -> Option<&FieldValue> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }
}

impl Serialize for DecodedRecord {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        struct Fields<'a>(&'a [(String, FieldValue)]);
        impl Serialize for Fields<'_> {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                let mut map = serializer.serialize_map(Some(self.0.len()))?;
                for (k, v) in self.0 {
                    map.serialize_entry(k, v)?;
                }
                map.end()
            }
        }
        let mut map = serializer.serialize_map(Some(2))?;
        map.serialize_entry("layout", &self.layout)?;
        map.serialize_entry("fields", &Fields(&self.fields))?;
        map.end()
    }
}

pub fn decode_record(record: &[u8], schema: &CopybookSchema, encoding: Encoding) -> Result<DecodedRecord, RecordError> {
    let layout = schema.select_layout(record, encoding)?;
    if record.len() < layout.length {
        return Err(RecordError::RecordLengthMismatch {
            layout: layout.name.clone(),
            need: layout.length,
            have: record.len(),
        });
    }
    let mut fields = Vec::with_capacity(layout.fields.len());
    for f in &layout.fields {
        let value = decode_field(record, f, encoding).map_err(|source| RecordError::Field {
            field: f.name.clone(),
            offset: f.offset,
            source,
        })?;
        fields.push((f.name.clone(), value));
    }
    Ok(DecodedRecord { layout: layout.name.clone(), fields })
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum ByteClass {
    Character,
    Overpunch,
    Computational,
}

/// Converts display bytes between code pages while copying COMP and COMP-3
/// bytes verbatim. Bytes past the layout's end are treated as character data.
pub fn transcode_record(record: &[u8], schema: &CopybookSchema, direction: Direction) -> Result<Vec<u8>, RecordError> {
    let layout = schema.select_layout(record, direction.source())?;
    if record.len() < layout.length {
        return Err(RecordError::RecordLengthMismatch {
            layout: layout.name.clone(),
            need: layout.length,
            have: record.len(),
        });
    }
    let mut classes = vec![ByteClass::Character; record.len()];
    for f in &layout.fields {
        let class = match f.category {
            c if c.is_computational() => ByteClass::Computational,
            Category::ZonedNumeric if f.signed && f.length > 0 => {
                let at = f.end() - 1;
                classes[at] = classes[at].max(ByteClass::Overpunch);
                continue;
            }
            _ => continue,
        };
        for c in &mut classes[f.offset..f.end()] {
            *c = class;
        }
    }

    type SignMap = fn(u8) -> Option<u8>;
    let (table, overpunch): (&[u8; 256], SignMap) = match direction {
        Direction::EbcdicToAscii => (&EBCDIC_TO_LATIN1, cp037::overpunch_to_ascii),
        Direction::AsciiToEbcdic => (&LATIN1_TO_EBCDIC, cp037::overpunch_to_ebcdic),
    };
    record
        .iter()
        .zip(&classes)
        .enumerate()
        .map(|(offset, (&byte, class))| match class {
            ByteClass::Character => Ok(table[byte as usize]),
            ByteClass::Computational => Ok(byte),
            ByteClass::Overpunch => overpunch(byte).ok_or(RecordError::UnmappableByte { offset, byte }),
        })
        .collect()
}

#[cfg(test)]
mod tests;
