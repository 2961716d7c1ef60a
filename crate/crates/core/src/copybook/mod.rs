//! Copybook parsing and record layout resolution.
//!
//! A copybook is parsed into a tree of [`DataItem`]s and then flattened into
//! one or more [`RecordLayout`]s with every elementary field's byte offset and
//! storage length resolved. Each 01-level record contributes one layout, or
//! one layout per alternative when it contains group-level `REDEFINES`.
//! Elementary `REDEFINES` overlay fields inside the same layout.
//!
//! Multi-layout schemas select a layout per record through a
//! [`DiscriminatorRule`], which is supplied from configuration rather than
//! copybook text.

mod layout;
mod lexer;
mod parser;
mod printer;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{self, Encoding, FieldValue};

pub use layout::{binary_length, packed_length, zoned_length, MAX_LAYOUTS};
pub use printer::print_items;

/// Version of the accepted copybook grammar subset.
pub const GRAMMAR_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcePos {
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for SourcePos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CopybookError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: SourcePos, message: String },
    #[error("unsupported feature at {pos}: {feature}; the copybook needs manual pre-editing")]
    Unsupported { pos: SourcePos, feature: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("schema has {0} layouts but no discriminator rule")]
    MissingDiscriminator(usize),
    #[error("no layout for discriminator value {value:?}")]
    NoMatchingLayout { value: String },
    #[error("record of {have} bytes is too short for the discriminator field (needs {need})")]
    RecordTooShort { need: usize, have: usize },
    #[error("cannot decode discriminator field: {0}")]
    Discriminator(#[from] codec::CodecError),
    #[error("invalid discriminator rule: {0}")]
    InvalidRule(String),
}

impl LayoutError {
    pub fn name(&self) -> &'static str {
        match self {
            LayoutError::MissingDiscriminator(_) => "MissingDiscriminator",
            LayoutError::NoMatchingLayout { .. } => "NoMatchingLayout",
            LayoutError::RecordTooShort { .. } => "RecordTooShort",
            LayoutError::Discriminator(e) => e.name(),
            LayoutError::InvalidRule(_) => "InvalidRule",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Usage {
    Display,
    Binary,
    Packed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Picture {
    Alphanumeric { length: u32 },
    Numeric { signed: bool, integer_digits: u8, fraction_digits: u8 },
}

/// One data description entry and its subordinates, as written in the source.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataItem {
    pub level: u8,
    pub name: String,
    pub redefines: Option<String>,
    pub picture: Option<Picture>,
    pub usage: Option<Usage>,
    pub occurs: Option<u32>,
    pub children: Vec<DataItem>,
    #[serde(skip)]
    pub pos: SourcePos,
}

// Source positions are diagnostics only and do not take part in equality.
impl PartialEq for DataItem {
    fn eq(&self, other: &Self) -> bool {
        self.level == other.level
            && self.name == other.name
            && self.redefines == other.redefines
            && self.picture == other.picture
            && self.usage == other.usage
            && self.occurs == other.occurs
            && self.children == other.children
    }
}

impl Eq for DataItem {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Alphanumeric,
    ZonedNumeric,
    PackedNumeric,
    BinaryNumeric,
}

impl Category {
    pub fn is_numeric(self) -> bool {
        self != Category::Alphanumeric
    }

    /// COMP and COMP-3 storage, which must never be transcoded.
    pub fn is_computational(self) -> bool {
        matches!(self, Category::PackedNumeric | Category::BinaryNumeric)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Alphanumeric => "alphanumeric",
            Category::ZonedNumeric => "zoned-numeric",
            Category::PackedNumeric => "packed-numeric",
            Category::BinaryNumeric => "binary-numeric",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One elementary field with resolved storage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub level: u8,
    pub offset: usize,
    pub length: usize,
    pub category: Category,
    /// Total decimal digits; zero for alphanumeric fields.
    pub digits: u8,
    /// Implied decimal places.
    pub scale: u8,
    pub signed: bool,
    /// OCCURS element ordinals (1-based), outermost first.
    pub subscripts: Vec<u32>,
}

impl FieldSpec {
    pub fn usage(&self) -> Usage {
        match self.category {
            Category::Alphanumeric | Category::ZonedNumeric => Usage::Display,
            Category::PackedNumeric => Usage::Packed,
            Category::BinaryNumeric => Usage::Binary,
        }
    }

    pub fn end(&self) -> usize {
        self.offset + self.length
    }

    /// Builds a standalone spec at offset 0, mostly useful for codec calls.
    pub fn numeric(category: Category, digits: u8, scale: u8, signed: bool) -> FieldSpec {
        let length = match category {
            Category::Alphanumeric => panic!("use FieldSpec::text for alphanumeric fields"),
            Category::ZonedNumeric => zoned_length(digits),
            Category::PackedNumeric => packed_length(digits),
            Category::BinaryNumeric => binary_length(digits),
        };
        FieldSpec {
            name: "VALUE".into(),
            level: 5,
            offset: 0,
            length,
            category,
            digits,
            scale,
            signed,
            subscripts: Vec::new(),
        }
    }

    pub fn text(length: usize) -> FieldSpec {
        FieldSpec {
            name: "VALUE".into(),
            level: 5,
            offset: 0,
            length,
            category: Category::Alphanumeric,
            digits: 0,
            scale: 0,
            signed: false,
            subscripts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordLayout {
    pub name: String,
    pub fields: Vec<FieldSpec>,
    pub length: usize,
}

impl RecordLayout {
    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }
}

/// Maps decoded values of one field onto layout names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorRule {
    pub field: String,
    pub values: BTreeMap<String, String>,
    #[serde(default)]
    pub default: Option<String>,
}

impl DiscriminatorRule {
    pub fn from_toml(text: &str) -> Result<Self, LayoutError> {
        toml::from_str(text).map_err(|e| LayoutError::InvalidRule(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ResolvedDiscriminator {
    rule: DiscriminatorRule,
    field: FieldSpec,
    index: BTreeMap<String, usize>,
    default: Option<usize>,
}

/// Failure to load a schema from its files.
#[derive(Debug, Error)]
pub enum SchemaFileError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Copybook { path: PathBuf, source: CopybookError },
    #[error("{path}: {source}")]
    Rule { path: PathBuf, source: LayoutError },
}

/// Parses a copybook file and attaches the discriminator rule (TOML) if one
/// is given.
pub fn load_schema(copybook: &Path, rule: Option<&Path>) -> Result<CopybookSchema, SchemaFileError> {
    let read = |path: &Path| {
        std::fs::read_to_string(path).map_err(|source| SchemaFileError::Io { path: path.to_path_buf(), source })
    };
    let schema = parse_copybook(&read(copybook)?)
        .map_err(|source| SchemaFileError::Copybook { path: copybook.to_path_buf(), source })?;
    match rule {
        None => Ok(schema),
        Some(path) => {
            let rule_err = |source| SchemaFileError::Rule { path: path.to_path_buf(), source };
            let rule = DiscriminatorRule::from_toml(&read(path)?).map_err(rule_err)?;
            schema.with_discriminator(rule).map_err(rule_err)
        }
    }
}

/// A parsed copybook: layouts, their common maximum length and the optional
/// discriminator used to choose between layouts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CopybookSchema {
    name: String,
    items: Vec<DataItem>,
    layouts: Vec<RecordLayout>,
    total_length: usize,
    discriminator: Option<ResolvedDiscriminator>,
}

pub fn parse_copybook(text: &str) -> Result<CopybookSchema, CopybookError> {
    let items = parser::parse_items(text)?;
    CopybookSchema::from_items(items)
}

impl CopybookSchema {
    pub fn from_items(items: Vec<DataItem>) -> Result<Self, CopybookError> {
        let Some(first) = items.first() else {
            return Err(CopybookError::Syntax {
                pos: SourcePos::default(),
                message: "copybook contains no record description".into(),
            });
        };
        let name = first.name.clone();
        let layouts = layout::resolve_layouts(&items)?;
        let total_length = layouts.iter().map(|l| l.length).max().unwrap_or(0);
        Ok(CopybookSchema { name, items, layouts, total_length, discriminator: None })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn items(&self) -> &[DataItem] {
        &self.items
    }

    pub fn layouts(&self) -> &[RecordLayout] {
        &self.layouts
    }

    pub fn total_length(&self) -> usize {
        self.total_length
    }

    pub fn layout(&self, name: &str) -> Option<&RecordLayout> {
        self.layouts.iter().find(|l| l.name == name)
    }

    pub fn layout_index(&self, name: &str) -> Option<usize> {
        self.layouts.iter().position(|l| l.name == name)
    }

    pub fn discriminator(&self) -> Option<&DiscriminatorRule> {
        self.discriminator.as_ref().map(|d| &d.rule)
    }

    /// Whether every record can be assigned a layout.
    pub fn can_select(&self) -> bool {
        self.layouts.len() == 1 || self.discriminator.is_some()
    }

    /// Renders the schema's source items in the supported grammar.
    pub fn to_copybook(&self) -> String {
        print_items(&self.items)
    }

    /// Attaches a discriminator after checking that its field sits at the
    /// same place in every layout and that every target layout exists.
    pub fn with_discriminator(mut self, rule: DiscriminatorRule) -> Result<Self, LayoutError> {
        let invalid = |msg: String| LayoutError::InvalidRule(msg);
        let mut field: Option<&FieldSpec> = None;
        for layout in &self.layouts {
            let f = layout.field(&rule.field).ok_or_else(|| {
                invalid(format!("field `{}` missing from layout `{}`", rule.field, layout.name))
            })?;
            match field {
                None => field = Some(f),
                Some(first) => {
                    let same = first.offset == f.offset
                        && first.length == f.length
                        && first.category == f.category
                        && first.digits == f.digits
                        && first.scale == f.scale
                        && first.signed == f.signed;
                    if !same {
                        return Err(invalid(format!(
                            "field `{}` differs in layout `{}`",
                            rule.field, layout.name
                        )));
                    }
                }
            }
        }
        let field = field
            .ok_or_else(|| invalid("schema has no layouts".into()))?
            .clone();

        let mut index = BTreeMap::new();
        for (value, layout_name) in &rule.values {
            let key = canonical_rule_value(value, &field).map_err(invalid)?;
            let target = self
                .layout_index(layout_name)
                .ok_or_else(|| invalid(format!("unknown layout `{layout_name}`")))?;
            if index.insert(key.clone(), target).is_some() {
                return Err(invalid(format!("discriminator value {key:?} mapped twice")));
            }
        }
        let default = match &rule.default {
            Some(name) => Some(
                self.layout_index(name)
                    .ok_or_else(|| invalid(format!("unknown default layout `{name}`")))?,
            ),
            None => None,
        };
        self.discriminator = Some(ResolvedDiscriminator { rule, field, index, default });
        Ok(self)
    }

    /// Chooses the layout describing `record`.
    pub fn select_layout(&self, record: &[u8], encoding: Encoding) -> Result<&RecordLayout, LayoutError> {
        self.select_layout_index(record, encoding).map(|i| &self.layouts[i])
    }

    pub fn select_layout_index(&self, record: &[u8], encoding: Encoding) -> Result<usize, LayoutError> {
        if self.layouts.len() == 1 {
            return Ok(0);
        }
        let Some(disc) = &self.discriminator else {
            return Err(LayoutError::MissingDiscriminator(self.layouts.len()));
        };
        if record.len() < disc.field.end() {
            return Err(LayoutError::RecordTooShort { need: disc.field.end(), have: record.len() });
        }
        let value = codec::decode_field(record, &disc.field, encoding)?;
        let key = value.canonical_key();
        match disc.index.get(&key).copied().or(disc.default) {
            Some(i) => Ok(i),
            None => Err(LayoutError::NoMatchingLayout { value: key }),
        }
    }

    /// SHA-256 over the resolved layouts and discriminator, hex encoded.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct Canon<'a> {
            grammar: u32,
            name: &'a str,
            layouts: &'a [RecordLayout],
            total_length: usize,
            discriminator: Option<&'a DiscriminatorRule>,
        }
        let canon = Canon {
            grammar: GRAMMAR_VERSION,
            name: &self.name,
            layouts: &self.layouts,
            total_length: self.total_length,
            discriminator: self.discriminator(),
        };
        let bytes = serde_json::to_vec(&canon).expect("schema serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// The field table printed by `copybook parse`.
    pub fn field_table(&self) -> String {
        let mut out = String::from("NAME\tLEVEL\tOFFSET\tLENGTH\tCATEGORY\tDIGITS\tSCALE\tSIGNED\tLAYOUT\n");
        for layout in &self.layouts {
            for f in &layout.fields {
                out.push_str(&format!(
                    "{}\t{:02}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    f.name, f.level, f.offset, f.length, f.category, f.digits, f.scale, f.signed, layout.name
                ));
            }
        }
        out.push_str(&format!(
            "# layouts={} total_length={}\n",
            self.layouts.len(),
            self.total_length
        ));
        out
    }
}

fn canonical_rule_value(value: &str, field: &FieldSpec) -> Result<String, String> {
    if field.category.is_numeric() {
        let d: codec::Decimal = value
            .trim()
            .parse()
            .map_err(|_| format!("discriminator value {value:?} is not numeric"))?;
        Ok(FieldValue::Number(d).canonical_key())
    } else {
        Ok(FieldValue::Text(value.to_string()).canonical_key())
    }
}
