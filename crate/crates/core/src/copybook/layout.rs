use std::collections::HashSet;

use super::{Category, CopybookError, DataItem, FieldSpec, Picture, RecordLayout, SourcePos, Usage};

/// Upper bound on layouts produced by one record through group REDEFINES
/// combinations.
pub const MAX_LAYOUTS: usize = 4096;

struct Variant {
    names: Vec<String>,
    fields: Vec<(FieldSpec, SourcePos)>,
}

impl Variant {
    fn empty() -> Self {
        Variant { names: Vec::new(), fields: Vec::new() }
    }
}

pub(crate) fn resolve_layouts(roots: &[DataItem]) -> Result<Vec<RecordLayout>, CopybookError> {
    let mut layouts = Vec::new();
    let mut seen_records: Vec<&str> = Vec::new();
    let mut layout_names = HashSet::new();

    for root in roots {
        if let Some(target) = &root.redefines {
            if !seen_records.contains(&target.as_str()) {
                return Err(CopybookError::Syntax {
                    pos: root.pos,
                    message: format!("REDEFINES target `{target}` is not a preceding record"),
                });
            }
        }
        seen_records.push(&root.name);

        let (variants, _) = lay_item(root, 0, None, &[])?;
        for variant in variants {
            let name = if variant.names.is_empty() {
                root.name.clone()
            } else {
                variant.names.join("+")
            };
            if !layout_names.insert(name.clone()) {
                return Err(CopybookError::Syntax {
                    pos: root.pos,
                    message: format!("duplicate layout name `{name}`"),
                });
            }
            layouts.push(finish_layout(name, variant.fields)?);
        }
        if layouts.len() > MAX_LAYOUTS {
            return Err(CopybookError::Unsupported {
                pos: root.pos,
                feature: format!("more than {MAX_LAYOUTS} layouts"),
            });
        }
    }
    Ok(layouts)
}

fn finish_layout(
    name: String,
    fields: Vec<(FieldSpec, SourcePos)>,
) -> Result<RecordLayout, CopybookError> {
    let mut filler = 0;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(fields.len());
    for (mut field, pos) in fields {
        if field.name == "FILLER" {
            filler += 1;
            field.name = format!("FILLER-{filler}");
        } else if !field.subscripts.is_empty() {
            let subs: Vec<String> = field.subscripts.iter().map(u32::to_string).collect();
            field.name = format!("{}({})", field.name, subs.join(","));
        }
        if !seen.insert(field.name.clone()) {
            return Err(CopybookError::Syntax {
                pos,
                message: format!("field name `{}` is ambiguous within layout `{name}`", field.name),
            });
        }
        out.push(field);
    }
    let length = out.iter().map(|f| f.offset + f.length).max().unwrap_or(0);
    Ok(RecordLayout { name, fields: out, length })
}

/// Lays out one item at `offset`. Returns the item's layout variants and its
/// storage size (maximum over variants).
fn lay_item(
    item: &DataItem,
    offset: usize,
    inherited: Option<Usage>,
    subs: &[u32],
) -> Result<(Vec<Variant>, usize), CopybookError> {
    let usage = item.usage.or(inherited);
    let times = item.occurs.unwrap_or(1) as usize;

    if let Some(picture) = &item.picture {
        if !item.children.is_empty() {
            return Err(CopybookError::Syntax {
                pos: item.pos,
                message: format!("`{}` has both PICTURE and subordinate items", item.name),
            });
        }
        let template = elementary(item, picture, usage.unwrap_or(Usage::Display))?;
        let mut fields = Vec::with_capacity(times);
        for k in 0..times {
            let mut f = template.clone();
            f.offset = offset + k * template.length;
            f.subscripts = subs.to_vec();
            if item.occurs.is_some() {
                f.subscripts.push(k as u32 + 1);
            }
            fields.push((f, item.pos));
        }
        let size = template.length * times;
        return Ok((vec![Variant { names: Vec::new(), fields }], size));
    }

    if item.children.is_empty() && item.level != 1 {
        return Err(CopybookError::Syntax {
            pos: item.pos,
            message: format!("`{}` has neither PICTURE nor subordinate items", item.name),
        });
    }

    match item.occurs {
        None => lay_children(&item.children, offset, usage, subs),
        Some(n) => {
            let mut fields = Vec::new();
            let mut element_size = 0;
            for k in 0..n as usize {
                let mut element_subs = subs.to_vec();
                element_subs.push(k as u32 + 1);
                let (variants, size) =
                    lay_children(&item.children, offset + k * element_size, usage, &element_subs)?;
                if variants.len() != 1 {
                    return Err(CopybookError::Unsupported {
                        pos: item.pos,
                        feature: "group REDEFINES inside an OCCURS group".into(),
                    });
                }
                element_size = size;
                fields.extend(variants.into_iter().next().unwrap().fields);
            }
            Ok((vec![Variant { names: Vec::new(), fields }], element_size * n as usize))
        }
    }
}

fn lay_children(
    children: &[DataItem],
    offset: usize,
    usage: Option<Usage>,
    subs: &[u32],
) -> Result<(Vec<Variant>, usize), CopybookError> {
    let mut variants = vec![Variant::empty()];
    let mut cursor = offset;
    let mut i = 0;
    while i < children.len() {
        let base = &children[i];
        if let Some(target) = &base.redefines {
            return Err(CopybookError::Syntax {
                pos: base.pos,
                message: format!(
                    "REDEFINES target `{target}` must be the preceding item at the same level"
                ),
            });
        }
        let mut j = i + 1;
        while j < children.len() && children[j].redefines.as_deref() == Some(base.name.as_str()) {
            j += 1;
        }
        let members = &children[i..j];
        if base.name == "FILLER" && members.len() > 1 {
            return Err(CopybookError::Syntax {
                pos: members[1].pos,
                message: "cannot REDEFINES a FILLER".into(),
            });
        }

        let (slot, size) = if members.len() == 1 {
            lay_item(base, cursor, usage, subs)?
        } else if members.iter().all(|m| m.picture.is_some()) {
            // Elementary overlays share the layout.
            let mut fields = Vec::new();
            let mut size = 0;
            for m in members {
                let (vs, s) = lay_item(m, cursor, usage, subs)?;
                size = size.max(s);
                fields.extend(vs.into_iter().flat_map(|v| v.fields));
            }
            (vec![Variant { names: Vec::new(), fields }], size)
        } else {
            let mut alternatives = Vec::new();
            let mut size = 0;
            for m in members {
                let (vs, s) = lay_item(m, cursor, usage, subs)?;
                size = size.max(s);
                for mut v in vs {
                    v.names.insert(0, m.name.clone());
                    alternatives.push(v);
                }
            }
            (alternatives, size)
        };

        if variants.len() * slot.len() > MAX_LAYOUTS {
            return Err(CopybookError::Unsupported {
                pos: base.pos,
                feature: format!("more than {MAX_LAYOUTS} REDEFINES combinations"),
            });
        }
        variants = product(variants, slot);
        cursor += size;
        i = j;
    }
    Ok((variants, cursor - offset))
}

fn product(left: Vec<Variant>, right: Vec<Variant>) -> Vec<Variant> {
    if right.len() == 1 {
        let r = right.into_iter().next().unwrap();
        let mut out = left;
        if out.len() == 1 {
            let only = &mut out[0];
            only.names.extend(r.names);
            only.fields.extend(r.fields);
            return out;
        }
        for v in &mut out {
            v.names.extend(r.names.iter().cloned());
            v.fields.extend(r.fields.iter().cloned());
        }
        return out;
    }
    let mut out = Vec::with_capacity(left.len() * right.len());
    for l in &left {
        for r in &right {
            let mut names = l.names.clone();
            names.extend(r.names.iter().cloned());
            let mut fields = l.fields.clone();
            fields.extend(r.fields.iter().cloned());
            out.push(Variant { names, fields });
        }
    }
    out
}

fn elementary(item: &DataItem, picture: &Picture, usage: Usage) -> Result<FieldSpec, CopybookError> {
    let (category, length, digits, scale, signed) = match *picture {
        Picture::Alphanumeric { length } => {
            if usage != Usage::Display {
                return Err(CopybookError::Syntax {
                    pos: item.pos,
                    message: format!("alphanumeric item `{}` must have USAGE DISPLAY", item.name),
                });
            }
            (Category::Alphanumeric, length as usize, 0, 0, false)
        }
        Picture::Numeric { signed, integer_digits, fraction_digits } => {
            let digits = integer_digits + fraction_digits;
            let (category, length) = match usage {
                Usage::Display => (Category::ZonedNumeric, zoned_length(digits)),
                Usage::Packed => (Category::PackedNumeric, packed_length(digits)),
                Usage::Binary => (Category::BinaryNumeric, binary_length(digits)),
            };
            (category, length, digits, fraction_digits, signed)
        }
    };
    Ok(FieldSpec {
        name: item.name.clone(),
        level: item.level,
        offset: 0,
        length,
        category,
        digits,
        scale,
        signed,
        subscripts: Vec::new(),
    })
}

pub fn zoned_length(digits: u8) -> usize {
    digits as usize
}

pub fn packed_length(digits: u8) -> usize {
    digits as usize / 2 + 1
}

pub fn binary_length(digits: u8) -> usize {
    match digits {
        0..=4 => 2,
        5..=9 => 4,
        _ => 8,
    }
}
