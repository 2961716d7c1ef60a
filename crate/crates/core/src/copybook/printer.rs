use std::fmt::Write;

use super::{DataItem, Picture, Usage};

/// Renders items back to copybook text in the supported subset.
pub fn print_items(items: &[DataItem]) -> String {
    let mut out = String::new();
    for item in items {
        print_item(item, 0, &mut out);
    }
    out
}

fn print_item(item: &DataItem, depth: usize, out: &mut String) {
    let _ = write!(out, "{:indent$}{:02} {}", "", item.level, item.name, indent = depth * 4);
    if let Some(target) = &item.redefines {
        let _ = write!(out, " REDEFINES {target}");
    }
    if let Some(picture) = &item.picture {
        let _ = write!(out, " PIC {picture}");
    }
    if let Some(usage) = item.usage {
        out.push_str(match usage {
            Usage::Display => " DISPLAY",
            Usage::Binary => " COMP",
            Usage::Packed => " COMP-3",
        });
    }
    if let Some(n) = item.occurs {
        let _ = write!(out, " OCCURS {n} TIMES");
    }
    out.push_str(".\n");
    for child in &item.children {
        print_item(child, depth + 1, out);
    }
}

impl std::fmt::Display for Picture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Picture::Alphanumeric { length } => write!(f, "X({length})"),
            Picture::Numeric { signed, integer_digits, fraction_digits } => {
                if signed {
                    f.write_str("S")?;
                }
                if integer_digits > 0 {
                    write!(f, "9({integer_digits})")?;
                }
                if fraction_digits > 0 {
                    write!(f, "V9({fraction_digits})")?;
                }
                Ok(())
            }
        }
    }
}
