use super::lexer::{tokenize, Tok, Token};
use super::{CopybookError, DataItem, Picture, SourcePos, Usage};

const MAX_NUMERIC_DIGITS: u32 = 18;

/// Parses copybook text into a forest of 01-level items.
pub(crate) fn parse_items(text: &str) -> Result<Vec<DataItem>, CopybookError> {
    let tokens = tokenize(text)?;
    let mut cursor = Cursor { tokens: &tokens, at: 0 };
    let mut entries = Vec::new();
    while !cursor.done() {
        entries.push(parse_entry(&mut cursor)?);
    }
    build_tree(entries)
}

struct Cursor<'a> {
    tokens: &'a [Token],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn done(&self) -> bool {
        self.at >= self.tokens.len()
    }

    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.at)
    }

    fn peek_word(&self) -> Option<&'a str> {
        match self.peek() {
            Some(Token { tok: Tok::Word(w), .. }) => Some(w.as_str()),
            _ => None,
        }
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.at);
        self.at += 1;
        t
    }

    fn last_pos(&self) -> SourcePos {
        self.tokens.last().map(|t| t.pos).unwrap_or_default()
    }

    fn expect_word(&mut self, what: &str) -> Result<(&'a str, SourcePos), CopybookError> {
        match self.next() {
            Some(Token { tok: Tok::Word(w), pos }) => Ok((w.as_str(), *pos)),
            Some(t) => Err(syntax(t.pos, format!("expected {what}"))),
            None => Err(syntax(self.last_pos(), format!("expected {what}, found end of input"))),
        }
    }

    fn skip_optional(&mut self, word: &str) {
        if self.peek_word() == Some(word) {
            self.at += 1;
        }
    }
}

fn syntax(pos: SourcePos, message: impl Into<String>) -> CopybookError {
    CopybookError::Syntax { pos, message: message.into() }
}

fn unsupported(pos: SourcePos, feature: impl Into<String>) -> CopybookError {
    CopybookError::Unsupported { pos, feature: feature.into() }
}

fn parse_entry(cur: &mut Cursor<'_>) -> Result<DataItem, CopybookError> {
    let (level_word, pos) = cur.expect_word("level number")?;
    if !level_word.bytes().all(|b| b.is_ascii_digit()) || level_word.len() > 2 {
        return Err(syntax(pos, format!("expected level number, found `{level_word}`")));
    }
    let level: u8 = level_word.parse().expect("two ascii digits");
    match level {
        66 => return Err(unsupported(pos, "level 66 (RENAMES)")),
        77 => return Err(unsupported(pos, "level 77 (independent item)")),
        88 => return Err(unsupported(pos, "level 88 (condition name)")),
        1..=49 => {}
        _ => return Err(syntax(pos, format!("level number {level} outside 01-49"))),
    }

    let mut item = DataItem {
        level,
        name: "FILLER".to_string(),
        redefines: None,
        picture: None,
        usage: None,
        occurs: None,
        children: Vec::new(),
        pos,
    };

    if let Some(word) = cur.peek_word() {
        if !is_clause_keyword(word) {
            if !is_data_name(word) {
                let p = cur.peek().map(|t| t.pos).unwrap_or(pos);
                return Err(syntax(p, format!("invalid data name `{word}`")));
            }
            item.name = word.to_string();
            cur.at += 1;
        }
    }

    loop {
        let Some(tok) = cur.next() else {
            return Err(syntax(cur.last_pos(), "missing period terminating entry"));
        };
        let word = match &tok.tok {
            Tok::Period => break,
            Tok::Literal(_) => return Err(syntax(tok.pos, "unexpected literal")),
            Tok::Word(w) => w.as_str(),
        };
        match word {
            "REDEFINES" => {
                if item.redefines.is_some() {
                    return Err(syntax(tok.pos, "duplicate REDEFINES clause"));
                }
                let (target, _) = cur.expect_word("REDEFINES target")?;
                item.redefines = Some(target.to_string());
            }
            "PIC" | "PICTURE" => {
                if item.picture.is_some() {
                    return Err(syntax(tok.pos, "duplicate PICTURE clause"));
                }
                cur.skip_optional("IS");
                let (pic, pic_pos) = cur.expect_word("picture string")?;
                item.picture = Some(parse_picture(pic, pic_pos)?);
            }
            "USAGE" => {
                cur.skip_optional("IS");
                let (u, upos) = cur.expect_word("usage")?;
                set_usage(&mut item, u, upos)?;
            }
            "OCCURS" => {
                if item.occurs.is_some() {
                    return Err(syntax(tok.pos, "duplicate OCCURS clause"));
                }
                if level == 1 {
                    return Err(syntax(tok.pos, "OCCURS not allowed at level 01"));
                }
                let (n, npos) = cur.expect_word("OCCURS count")?;
                let count: u32 = n
                    .parse()
                    .ok()
                    .filter(|c| *c > 0)
                    .ok_or_else(|| syntax(npos, format!("invalid OCCURS count `{n}`")))?;
                if let Some(w) = cur.peek_word() {
                    if w == "TO" || w == "DEPENDING" {
                        return Err(unsupported(npos, "OCCURS DEPENDING ON"));
                    }
                }
                cur.skip_optional("TIMES");
                if let Some(w) = cur.peek_word() {
                    if matches!(w, "DEPENDING" | "ASCENDING" | "DESCENDING" | "INDEXED") {
                        return Err(unsupported(npos, format!("OCCURS ... {w}")));
                    }
                }
                item.occurs = Some(count);
            }
            "VALUE" | "VALUES" => {
                cur.skip_optional("IS");
                cur.skip_optional("ARE");
                cur.skip_optional("ALL");
                match cur.next() {
                    Some(Token { tok: Tok::Literal(_), .. }) | Some(Token { tok: Tok::Word(_), .. }) => {}
                    _ => return Err(syntax(tok.pos, "VALUE clause without literal")),
                }
            }
            "SIGN" | "LEADING" | "TRAILING" | "SEPARATE" => {
                return Err(unsupported(tok.pos, "SIGN clause"));
            }
            "SYNC" | "SYNCHRONIZED" => return Err(unsupported(tok.pos, "SYNC alignment")),
            "JUST" | "JUSTIFIED" | "BLANK" => return Err(unsupported(tok.pos, word.to_string())),
            other if is_usage_word(other) => set_usage(&mut item, other, tok.pos)?,
            other => return Err(syntax(tok.pos, format!("unexpected `{other}`"))),
        }
    }
    Ok(item)
}

fn is_clause_keyword(word: &str) -> bool {
    matches!(
        word,
        "REDEFINES"
            | "PIC"
            | "PICTURE"
            | "USAGE"
            | "OCCURS"
            | "VALUE"
            | "VALUES"
            | "SIGN"
            | "SYNC"
            | "SYNCHRONIZED"
            | "JUST"
            | "JUSTIFIED"
            | "BLANK"
    ) || is_usage_word(word)
}

fn is_usage_word(word: &str) -> bool {
    matches!(
        word,
        "DISPLAY"
            | "COMP"
            | "COMPUTATIONAL"
            | "COMP-4"
            | "COMPUTATIONAL-4"
            | "BINARY"
            | "COMP-3"
            | "COMPUTATIONAL-3"
            | "PACKED-DECIMAL"
            | "COMP-1"
            | "COMP-2"
            | "COMP-5"
            | "COMPUTATIONAL-1"
            | "COMPUTATIONAL-2"
            | "COMPUTATIONAL-5"
            | "NATIONAL"
            | "DISPLAY-1"
            | "INDEX"
            | "POINTER"
    )
}

fn is_data_name(word: &str) -> bool {
    let b = word.as_bytes();
    !b.is_empty()
        && b.len() <= 30
        && b.iter().all(|c| c.is_ascii_alphanumeric() || *c == b'-')
        && b.iter().any(|c| c.is_ascii_alphabetic())
        && b[0] != b'-'
        && b[b.len() - 1] != b'-'
}

fn set_usage(item: &mut DataItem, word: &str, pos: SourcePos) -> Result<(), CopybookError> {
    let usage = match word {
        "DISPLAY" => Usage::Display,
        "COMP" | "COMPUTATIONAL" | "COMP-4" | "COMPUTATIONAL-4" | "BINARY" => Usage::Binary,
        "COMP-3" | "COMPUTATIONAL-3" | "PACKED-DECIMAL" => Usage::Packed,
        "NATIONAL" | "DISPLAY-1" => return Err(unsupported(pos, "national/DBCS data")),
        other if is_usage_word(other) => return Err(unsupported(pos, format!("USAGE {other}"))),
        other => return Err(syntax(pos, format!("unknown usage `{other}`"))),
    };
    if item.usage.is_some() {
        return Err(syntax(pos, "duplicate USAGE clause"));
    }
    item.usage = Some(usage);
    Ok(())
}

/// Parses the supported picture subset: `X(n)`, `XXX`, `A(n)`, `S9(n)V9(m)`
/// and repetitions thereof.
pub(crate) fn parse_picture(pic: &str, pos: SourcePos) -> Result<Picture, CopybookError> {
    let bytes = pic.as_bytes();
    let mut i = 0;
    let mut signed = false;
    let mut seen_v = false;
    let mut int_digits: u32 = 0;
    let mut frac_digits: u32 = 0;
    let mut alnum: u32 = 0;
    let mut numeric_symbols = false;

    if bytes.first() == Some(&b'S') {
        signed = true;
        i = 1;
    }
    while i < bytes.len() {
        let sym = bytes[i];
        i += 1;
        let mut count = 1u32;
        if bytes.get(i) == Some(&b'(') {
            let close = bytes[i..]
                .iter()
                .position(|&b| b == b')')
                .ok_or_else(|| syntax(pos, format!("unbalanced parenthesis in PIC {pic}")))?;
            let inner = &pic[i + 1..i + close];
            count = inner
                .parse()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| syntax(pos, format!("invalid repeat count `{inner}` in PIC {pic}")))?;
            i += close + 1;
        }
        match sym {
            b'9' => {
                numeric_symbols = true;
                if seen_v {
                    frac_digits = frac_digits.saturating_add(count);
                } else {
                    int_digits = int_digits.saturating_add(count);
                }
            }
            b'X' | b'A' => alnum = alnum.saturating_add(count),
            b'V' => {
                if seen_v || count != 1 {
                    return Err(syntax(pos, format!("more than one V in PIC {pic}")));
                }
                seen_v = true;
            }
            b'S' => return Err(syntax(pos, format!("S must lead PIC {pic}"))),
            b'P' => return Err(unsupported(pos, format!("scaling position P in PIC {pic}"))),
            b'N' | b'G' => return Err(unsupported(pos, format!("national/DBCS PIC {pic}"))),
            b'Z' | b'*' | b'+' | b'-' | b',' | b'.' | b'$' | b'B' | b'0' | b'/' | b'C' | b'D'
            | b'E' => {
                return Err(unsupported(pos, format!("editing picture {pic}")));
            }
            _ => return Err(syntax(pos, format!("invalid picture string {pic}"))),
        }
    }

    if alnum > 0 {
        if signed || seen_v {
            return Err(syntax(pos, format!("S or V in alphanumeric PIC {pic}")));
        }
        return Ok(Picture::Alphanumeric { length: alnum + int_digits });
    }
    if !numeric_symbols {
        return Err(syntax(pos, format!("picture {pic} has no digit positions")));
    }
    let total = int_digits + frac_digits;
    if total > MAX_NUMERIC_DIGITS {
        return Err(unsupported(pos, format!("{total} digits in PIC {pic} (maximum 18)")));
    }
    Ok(Picture::Numeric {
        signed,
        integer_digits: int_digits as u8,
        fraction_digits: frac_digits as u8,
    })
}

fn build_tree(entries: Vec<DataItem>) -> Result<Vec<DataItem>, CopybookError> {
    let mut roots: Vec<DataItem> = Vec::new();
    // Open ancestors; each element is a partially built item.
    let mut stack: Vec<DataItem> = Vec::new();

    for entry in entries {
        if stack.is_empty() && entry.level != 1 {
            return Err(syntax(
                entry.pos,
                format!("record must start at level 01, found level {:02}", entry.level),
            ));
        }
        while stack.last().is_some_and(|top| top.level >= entry.level) {
            close_top(&mut stack, &mut roots);
        }
        if let Some(parent) = stack.last() {
            if parent.picture.is_some() {
                return Err(syntax(
                    entry.pos,
                    format!("`{}` has a PICTURE and cannot contain subordinate items", parent.name),
                ));
            }
        }
        stack.push(entry);
    }
    while !stack.is_empty() {
        close_top(&mut stack, &mut roots);
    }
    Ok(roots)
}

fn close_top(stack: &mut Vec<DataItem>, roots: &mut Vec<DataItem>) {
    let item = stack.pop().expect("non-empty stack");
    match stack.last_mut() {
        Some(parent) => parent.children.push(item),
        None => roots.push(item),
    }
}
