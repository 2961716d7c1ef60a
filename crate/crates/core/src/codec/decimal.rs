use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest supported number of implied decimal places.
pub const MAX_SCALE: u8 = 30;

/// Exact scaled decimal: `coefficient / 10^scale`.
///
/// Equality and ordering are numeric, so `1.50 == 1.5`.
#[derive(Debug, Clone, Copy)]
pub struct Decimal {
    coefficient: i128,
    scale: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid decimal literal {0:?}")]
pub struct ParseDecimalError(pub String);

pub(crate) fn pow10(exp: u32) -> i128 {
    10i128.pow(exp)
}

impl Decimal {
    pub const ZERO: Decimal = Decimal { coefficient: 0, scale: 0 };

    pub fn new(coefficient: i128, scale: u8) -> Decimal {
        assert!(scale <= MAX_SCALE, "decimal scale {scale} exceeds {MAX_SCALE}");
        Decimal { coefficient, scale }
    }

    pub fn from_int(value: i64) -> Decimal {
        Decimal { coefficient: value as i128, scale: 0 }
    }

    pub fn coefficient(&self) -> i128 {
        self.coefficient
    }

    pub fn scale(&self) -> u8 {
        self.scale
    }

    pub fn is_negative(&self) -> bool {
        self.coefficient < 0
    }

    /// Converts to `scale`, truncating toward zero. The flag reports whether
    /// nonzero digits were dropped. `None` if the widened coefficient overflows.
    pub fn rescale(&self, scale: u8) -> Option<(Decimal, bool)> {
        assert!(scale <= MAX_SCALE);
        match scale.cmp(&self.scale) {
            Ordering::Equal => Some((*self, false)),
            Ordering::Greater => {
                let factor = pow10((scale - self.scale) as u32);
                self.coefficient
                    .checked_mul(factor)
                    .map(|c| (Decimal { coefficient: c, scale }, false))
            }
            Ordering::Less => {
                let factor = pow10((self.scale - scale) as u32);
                let c = self.coefficient / factor;
                let lost = self.coefficient % factor != 0;
                Some((Decimal { coefficient: c, scale }, lost))
            }
        }
    }

    /// Removes trailing fractional zeros.
    pub fn normalized(&self) -> Decimal {
        let mut d = *self;
        while d.scale > 0 && d.coefficient % 10 == 0 {
            d.coefficient /= 10;
            d.scale -= 1;
        }
        d
    }

    fn split(&self) -> (i128, i128) {
        let factor = pow10(self.scale as u32);
        let int = self.coefficient / factor;
        let frac = (self.coefficient % factor) * pow10((MAX_SCALE - self.scale) as u32);
        (int, frac)
    }
}

impl PartialEq for Decimal {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Decimal {}

impl PartialOrd for Decimal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Decimal {
    fn cmp(&self, other: &Self) -> Ordering {
        self.split().cmp(&other.split())
    }
}

impl From<i64> for Decimal {
    fn from(v: i64) -> Self {
        Decimal::from_int(v)
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = self.coefficient.unsigned_abs().to_string();
        let sign = if self.coefficient < 0 { "-" } else { "" };
        let scale = self.scale as usize;
        if scale == 0 {
            return write!(f, "{sign}{digits}");
        }
        let padded = format!("{digits:0>width$}", width = scale + 1);
        let (int, frac) = padded.split_at(padded.len() - scale);
        write!(f, "{sign}{int}.{frac}")
    }
}

impl FromStr for Decimal {
    type Err = ParseDecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseDecimalError(s.to_string());
        let (negative, body) = match s.as_bytes().first() {
            Some(b'-') => (true, &s[1..]),
            Some(b'+') => (false, &s[1..]),
            _ => (false, s),
        };
        let (int, frac) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int.is_empty() && frac.is_empty() {
            return Err(err());
        }
        if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        if frac.len() > MAX_SCALE as usize || int.len() + frac.len() > 38 {
            return Err(err());
        }
        let mut coefficient: i128 = 0;
        for b in int.bytes().chain(frac.bytes()) {
            coefficient = coefficient * 10 + (b - b'0') as i128;
        }
        if negative {
            coefficient = -coefficient;
        }
        Ok(Decimal { coefficient, scale: frac.len() as u8 })
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
