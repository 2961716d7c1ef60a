use super::{CopybookError, SourcePos};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Word(String),
    Literal(String),
    Period,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub pos: SourcePos,
}

/// Splits free-format copybook text into words, quoted literals and
/// entry-terminating periods. Words are upper-cased.
pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, CopybookError> {
    let mut out = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx as u32 + 1;
        let trimmed = raw_line.trim_start();
        if trimmed.starts_with('*') || trimmed.starts_with('/') {
            continue;
        }
        let content = match raw_line.find("*>") {
            Some(cut) => &raw_line[..cut],
            None => raw_line,
        };
        if !content.is_ascii() {
            let column = content.find(|c: char| !c.is_ascii()).unwrap_or(0) as u32 + 1;
            return Err(CopybookError::Syntax {
                pos: SourcePos { line, column },
                message: "non-ASCII character in copybook source".into(),
            });
        }
        let bytes = content.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            let pos = SourcePos { line, column: i as u32 + 1 };
            if c.is_ascii_whitespace() || c == b',' || c == b';' {
                i += 1;
                continue;
            }
            if c == b'\'' || c == b'"' {
                let end = bytes[i + 1..].iter().position(|&b| b == c).ok_or_else(|| {
                    CopybookError::Syntax { pos, message: "unterminated literal".into() }
                })?;
                out.push(Token {
                    tok: Tok::Literal(content[i + 1..i + 1 + end].to_string()),
                    pos,
                });
                i += end + 2;
                continue;
            }
            if c == b'.' && is_break(bytes, i + 1) {
                out.push(Token { tok: Tok::Period, pos });
                i += 1;
                continue;
            }
            let start = i;
            while i < bytes.len() {
                let b = bytes[i];
                if b.is_ascii_whitespace() || b == b',' || b == b';' || b == b'\'' || b == b'"' {
                    break;
                }
                if b == b'.' && is_break(bytes, i + 1) {
                    break;
                }
                i += 1;
            }
            out.push(Token {
                tok: Tok::Word(content[start..i].to_ascii_uppercase()),
                pos,
            });
        }
    }
    Ok(out)
}

fn is_break(bytes: &[u8], at: usize) -> bool {
    at >= bytes.len() || bytes[at].is_ascii_whitespace()
}
