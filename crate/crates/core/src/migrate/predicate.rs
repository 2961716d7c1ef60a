//! Retention predicates: conjunctions of `FIELD op VALUE` terms.
//!
//! Operators are `=`, `!=` (also `<>`), `<`, `>` and `^=` (prefix). Terms are
//! joined with `AND` or `&&`; a value may be double-quoted to keep spaces.
//! Numeric fields compare as decimals. Alphanumeric fields compare their raw
//! bytes against the value encoded the same way, space padded, so ordering
//! follows the dataset's own collating sequence.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::codec::{decode_field, encode_field, CodecError, Decimal, Encoding, FieldValue, OverflowPolicy};
use crate::copybook::{Category, CopybookSchema, FieldSpec, LayoutError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Eq,
    Ne,
    Lt,
    Gt,
    Prefix,
}

impl Op {
    fn as_str(self) -> &'static str {
        match self {
            Op::Eq => "=",
            Op::Ne => "!=",
            Op::Lt => "<",
            Op::Gt => ">",
            Op::Prefix => "^=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub field: String,
    pub op: Op,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predicate {
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredicateError {
    #[error("cannot parse predicate term `{term}`: {reason}")]
    Syntax { term: String, reason: String },
    #[error("field {field} is not defined in the schema")]
    UnknownField { field: String },
    #[error("value `{value}` for numeric field {field} is not a number")]
    BadNumber { field: String, value: String },
    #[error("value `{value}` for field {field} cannot be encoded: {source}")]
    BadText { field: String, value: String, source: CodecError },
    #[error("field {field}: {source}")]
    Decode { field: String, source: CodecError },
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" AND ")?;
            }
            write!(f, "{}{}\"{}\"", t.field, t.op.as_str(), t.value)?;
        }
        Ok(())
    }
}

/// Splits on top-level `&&` / `AND`, leaving quoted text alone.
fn split_terms(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '"' {
            quoted = !quoted;
        } else if !quoted {
            if c == '&' && chars.get(i + 1) == Some(&'&') {
                out.push(std::mem::take(&mut cur));
                i += 2;
                continue;
            }
            let is_and = c.is_whitespace()
                && chars.len() > i + 4
                && chars[i + 1..i + 4].iter().collect::<String>().eq_ignore_ascii_case("and")
                && chars[i + 4].is_whitespace();
            if is_and {
                out.push(std::mem::take(&mut cur));
                i += 5;
                continue;
            }
        }
        cur.push(c);
        i += 1;
    }
    out.push(cur);
    out
}

fn parse_term(raw: &str) -> Result<Term, PredicateError> {
    let term = raw.trim();
    let err = |reason: &str| PredicateError::Syntax { term: term.to_string(), reason: reason.to_string() };
    let at = term.find(['=', '!', '<', '>', '^', '≠']).ok_or_else(|| err("no operator"))?;
    let field = term[..at].trim().to_ascii_uppercase();
    if field.is_empty() || !field.chars().all(|c| c.is_ascii_alphanumeric() || "-_(),".contains(c)) {
        return Err(err("bad field name"));
    }
    let rest = &term[at..];
    let (op, len) = if rest.starts_with("!=") || rest.starts_with("<>") {
        (Op::Ne, 2)
    } else if rest.starts_with("^=") {
        (Op::Prefix, 2)
    } else if rest.starts_with("<=") || rest.starts_with(">=") {
        return Err(err("only =, !=, <, > and ^= are supported"));
    } else if rest.starts_with('≠') {
        (Op::Ne, '≠'.len_utf8())
    } else if rest.starts_with('=') {
        (Op::Eq, 1)
    } else if rest.starts_with('<') {
        (Op::Lt, 1)
    } else if rest.starts_with('>') {
        (Op::Gt, 1)
    } else {
        return Err(err("unknown operator"));
    };
    let value = rest[len..].trim();
    let value = match value.strip_prefix('"') {
        Some(inner) => inner.strip_suffix('"').ok_or_else(|| err("unterminated quote"))?.to_string(),
        None if value.contains('"') => return Err(err("stray quote")),
        None => value.to_string(),
    };
    Ok(Term { field, op, value })
}

impl FromStr for Predicate {
    type Err = PredicateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let terms = split_terms(s).iter().map(|t| parse_term(t)).collect::<Result<Vec<_>, _>>()?;
        Ok(Predicate { terms })
    }
}

#[derive(Debug, Clone)]
enum Operand {
    Number(Decimal),
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone)]
struct BoundTerm {
    field: FieldSpec,
    op: Op,
    operand: Operand,
}

/// A predicate resolved against one schema and encoding. Each term is bound
/// per layout; a record whose layout lacks a term's field does not match.
#[derive(Debug, Clone)]
pub struct BoundPredicate {
    schema: CopybookSchema,
    encoding: Encoding,
    // [layout][term]
    terms: Vec<Vec<Option<BoundTerm>>>,
}

impl Predicate {
    /// Checks field names and converts every value before any record is
    /// looked at.
    pub fn bind(&self, schema: &CopybookSchema, encoding: Encoding) -> Result<BoundPredicate, PredicateError> {
        for t in &self.terms {
            if !schema.layouts().iter().any(|l| l.field(&t.field).is_some()) {
                return Err(PredicateError::UnknownField { field: t.field.clone() });
            }
        }
        let mut terms = Vec::with_capacity(schema.layouts().len());
        for layout in schema.layouts() {
            let mut row = Vec::with_capacity(self.terms.len());
            for t in &self.terms {
                row.push(match layout.field(&t.field) {
                    None => None,
                    Some(f) => Some(BoundTerm { field: f.clone(), op: t.op, operand: operand(t, f, encoding)? }),
                });
            }
            terms.push(row);
        }
        Ok(BoundPredicate { schema: schema.clone(), encoding, terms })
    }
}

fn operand(t: &Term, f: &FieldSpec, encoding: Encoding) -> Result<Operand, PredicateError> {
    if f.category == Category::Alphanumeric || t.op == Op::Prefix {
        // Prefix on a number compares its canonical text.
        if f.category != Category::Alphanumeric {
            return Ok(Operand::Bytes(t.value.clone().into_bytes()));
        }
        let spec = FieldSpec::text(t.value.chars().count());
        let bytes = encode_field(&FieldValue::Text(t.value.clone()), &spec, encoding, OverflowPolicy::Strict)
            .map_err(|source| PredicateError::BadText { field: t.field.clone(), value: t.value.clone(), source })?;
        return Ok(Operand::Bytes(bytes));
    }
    t.value
        .parse::<Decimal>()
        .map(Operand::Number)
        .map_err(|_| PredicateError::BadNumber { field: t.field.clone(), value: t.value.clone() })
}

fn padded_cmp(a: &[u8], b: &[u8], pad: u8) -> Ordering {
    let n = a.len().max(b.len());
    let at = |s: &[u8], i: usize| s.get(i).copied().unwrap_or(pad);
    (0..n).map(|i| at(a, i).cmp(&at(b, i))).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

impl BoundPredicate {
    fn layout_of(&self, record: &[u8]) -> Result<Option<usize>, PredicateError> {
        if self.schema.can_select() {
            return Ok(Some(self.schema.select_layout_index(record, self.encoding)?));
        }
        Ok(None)
    }

    pub fn matches(&self, record: &[u8]) -> Result<bool, PredicateError> {
        let layout = self.layout_of(record)?;
        for i in 0..self.terms.first().map_or(0, Vec::len) {
            // Without a discriminator the first layout defining the field wins.
            let bound = match layout {
                Some(l) => self.terms[l][i].as_ref(),
                None => self.terms.iter().find_map(|row| row[i].as_ref()),
            };
            let Some(t) = bound else { return Ok(false) };
            if !self.eval(t, record)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn eval(&self, t: &BoundTerm, record: &[u8]) -> Result<bool, PredicateError> {
        let decode_err = |source| PredicateError::Decode { field: t.field.name.clone(), source };
        if record.len() < t.field.end() {
            return Err(decode_err(CodecError::RecordTooShort { need: t.field.end(), have: record.len() }));
        }
        let ord = match (&t.operand, t.field.category) {
            (Operand::Bytes(v), Category::Alphanumeric) => {
                let raw = &record[t.field.offset..t.field.end()];
                if t.op == Op::Prefix {
                    return Ok(raw.starts_with(v));
                }
                padded_cmp(raw, v, self.encoding.space())
            }
            (Operand::Bytes(v), _) => {
                let value = decode_field(record, &t.field, self.encoding).map_err(decode_err)?;
                return Ok(value.canonical_key().as_bytes().starts_with(v));
            }
            (Operand::Number(n), _) => match decode_field(record, &t.field, self.encoding).map_err(decode_err)? {
                FieldValue::Number(d) => d.cmp(n),
                FieldValue::Text(_) => unreachable!("numeric field decodes to a number"),
            },
        };
        Ok(match t.op {
            Op::Eq => ord.is_eq(),
            Op::Ne => ord.is_ne(),
            Op::Lt => ord.is_lt(),
            Op::Gt => ord.is_gt(),
            Op::Prefix => unreachable!("handled above"),
        })
    }
}
