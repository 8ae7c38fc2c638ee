//! A small Rust lexer.
//!
//! Only enough structure is recovered to find `unsafe` keywords, match
//! brackets and collect identifiers. Comments are dropped and literals are
//! kept opaque, so keywords inside strings or comments never count.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Lifetime,
    Literal,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn text<'s>(&self, source: &'s str) -> &'s str {
        &source[self.start..self.end]
    }

    pub fn is_ident(&self, source: &str, word: &str) -> bool {
        self.kind == TokenKind::Ident && self.text(source) == word
    }

    pub fn is_punct(&self, source: &str, ch: char) -> bool {
        self.kind == TokenKind::Punct && self.text(source).starts_with(ch)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexError {
    #[error("unterminated block comment starting at byte {0}")]
    UnterminatedComment(usize),
    #[error("unterminated string literal starting at byte {0}")]
    UnterminatedString(usize),
    #[error("unterminated character literal starting at byte {0}")]
    UnterminatedChar(usize),
}

pub const KEYWORDS: &[&str] = &[
    "as", "async", "await", "break", "const", "continue", "crate", "dyn", "else", "enum",
    "extern", "false", "fn", "for", "if", "impl", "in", "let", "loop", "match", "mod", "move",
    "mut", "pub", "ref", "return", "self", "Self", "static", "struct", "super", "trait", "true",
    "type", "union", "unsafe", "use", "where", "while", "safe",
];

pub const PRIMITIVES: &[&str] = &[
    "bool", "char", "str", "u8", "u16", "u32", "u64", "u128", "usize", "i8", "i16", "i32", "i64",
    "i128", "isize", "f32", "f64",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

/// True for identifiers that carry program-specific meaning (not keywords or primitive types).
pub fn is_plain_ident(word: &str) -> bool {
    !is_keyword(word) && !PRIMITIVES.contains(&word) && word != "_"
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    Lexer { src: source, bytes: source.as_bytes(), pos: 0 }.run()
}

struct Lexer<'s> {
    src: &'s str,
    bytes: &'s [u8],
    pos: usize,
}

impl<'s> Lexer<'s> {
    fn peek(&self, offset: usize) -> Option<u8> {
        self.bytes.get(self.pos + offset).copied()
    }

    fn run(mut self) -> Result<Vec<Token>, LexError> {
        let mut tokens = Vec::new();
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            let start = self.pos;
            if b.is_ascii_whitespace() {
                self.pos += 1;
                continue;
            }
            if b == b'/' && self.peek(1) == Some(b'/') {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            if b == b'/' && self.peek(1) == Some(b'*') {
                self.block_comment()?;
                continue;
            }
            if let Some(kind) = self.string_like()? {
                tokens.push(Token { kind, start, end: self.pos });
                continue;
            }
            if b == b'\'' {
                let kind = self.quote()?;
                tokens.push(Token { kind, start, end: self.pos });
                continue;
            }
            if b.is_ascii_digit() {
                self.number();
                tokens.push(Token { kind: TokenKind::Literal, start, end: self.pos });
                continue;
            }
            let ch = self.src[self.pos..].chars().next().unwrap_or('\0');
            if ch == '_' || ch.is_alphabetic() {
                if b == b'r' && self.peek(1) == Some(b'#') {
                    self.pos += 2;
                }
                self.ident_tail();
                tokens.push(Token { kind: TokenKind::Ident, start, end: self.pos });
                continue;
            }
            self.pos += ch.len_utf8();
            tokens.push(Token { kind: TokenKind::Punct, start, end: self.pos });
        }
        Ok(tokens)
    }

    fn ident_tail(&mut self) {
        while let Some(ch) = self.src[self.pos..].chars().next() {
            if ch == '_' || ch.is_alphanumeric() {
                self.pos += ch.len_utf8();
            } else {
                break;
            }
        }
    }

    fn block_comment(&mut self) -> Result<(), LexError> {
        let start = self.pos;
        let mut depth = 0usize;
        while self.pos < self.bytes.len() {
            if self.bytes[self.pos] == b'/' && self.peek(1) == Some(b'*') {
                depth += 1;
                self.pos += 2;
            } else if self.bytes[self.pos] == b'*' && self.peek(1) == Some(b'/') {
                depth -= 1;
                self.pos += 2;
                if depth == 0 {
                    return Ok(());
                }
            } else {
                self.pos += 1;
            }
        }
        Err(LexError::UnterminatedComment(start))
    }

    /// Handles `"..."`, `b"..."`, `c"..."`, `r#"..."#` and `br"..."`.
    fn string_like(&mut self) -> Result<Option<TokenKind>, LexError> {
        let start = self.pos;
        let mut i = self.pos;
        if matches!(self.bytes[i], b'b' | b'c') {
            i += 1;
        }
        let raw = self.bytes.get(i) == Some(&b'r');
        if raw {
            i += 1;
        }
        let mut hashes = 0;
        if raw {
            while self.bytes.get(i) == Some(&b'#') {
                hashes += 1;
                i += 1;
            }
        }
        if self.bytes.get(i) != Some(&b'"') {
            if self.bytes[start] == b'b' && self.bytes.get(start + 1) == Some(&b'\'') {
                self.pos = start + 1;
                self.quote()?;
                return Ok(Some(TokenKind::Literal));
            }
            return Ok(None);
        }
        i += 1;
        loop {
            match self.bytes.get(i) {
                None => return Err(LexError::UnterminatedString(start)),
                Some(b'\\') if !raw => i += 2,
                Some(b'"') => {
                    let close = i;
                    let mut j = close + 1;
                    let mut seen = 0;
                    while seen < hashes && self.bytes.get(j) == Some(&b'#') {
                        seen += 1;
                        j += 1;
                    }
                    if seen == hashes {
                        self.pos = j;
                        return Ok(Some(TokenKind::Literal));
                    }
                    i = close + 1;
                }
                Some(_) => i += 1,
            }
        }
    }

    /// A quote starts either a char literal or a lifetime.
    fn quote(&mut self) -> Result<TokenKind, LexError> {
        let start = self.pos;
        self.pos += 1;
        let rest = &self.src[self.pos..];
        let mut chars = rest.chars();
        match chars.next() {
            Some('\\') => {
                // Escaped char literal: scan to the closing quote.
                let mut i = self.pos + 1;
                while i < self.bytes.len() {
                    if self.bytes[i] == b'\\' {
                        i += 2;
                        continue;
                    }
                    if self.bytes[i] == b'\'' {
                        self.pos = i + 1;
                        return Ok(TokenKind::Literal);
                    }
                    if self.bytes[i] == b'\n' {
                        break;
                    }
                    i += 1;
                }
                Err(LexError::UnterminatedChar(start))
            }
            Some(c) => {
                if chars.next() == Some('\'') {
                    self.pos += c.len_utf8() + 1;
                    Ok(TokenKind::Literal)
                } else if c == '_' || c.is_alphabetic() {
                    self.ident_tail();
                    Ok(TokenKind::Lifetime)
                } else {
                    Err(LexError::UnterminatedChar(start))
                }
            }
            None => Err(LexError::UnterminatedChar(start)),
        }
    }

    fn number(&mut self) {
        // A number right after `.` is a tuple index and takes no fraction.
        let mut seen_dot = self.src[..self.pos].ends_with('.');
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_alphanumeric() || b == b'_' {
                self.pos += 1;
            } else if b == b'.' && !seen_dot && self.peek(1).is_some_and(|n| n.is_ascii_digit()) {
                seen_dot = true;
                self.pos += 1;
            } else {
                break;
            }
        }
    }
}

/// For every opening bracket token, the index of its closing partner.
pub fn match_brackets(source: &str, tokens: &[Token]) -> Vec<Option<usize>> {
    let mut partner = vec![None; tokens.len()];
    let mut stack: Vec<(char, usize)> = Vec::new();
    for (i, tok) in tokens.iter().enumerate() {
        if tok.kind != TokenKind::Punct {
            continue;
        }
        match tok.text(source) {
            "{" => stack.push(('}', i)),
            "(" => stack.push((')', i)),
            "[" => stack.push((']', i)),
            t @ ("}" | ")" | "]") => {
                let close = t.chars().next().unwrap_or(' ');
                // Tolerate mismatches: pop until the expected opener is found.
                if let Some(pos) = stack.iter().rposition(|(c, _)| *c == close) {
                    let (_, open) = stack[pos];
                    stack.truncate(pos);
                    partner[open] = Some(i);
                }
            }
            _ => {}
        }
    }
    partner
}

/// 1-based line number of a byte offset.
pub fn line_of(source: &str, offset: usize) -> usize {
    source.as_bytes()[..offset.min(source.len())].iter().filter(|&&b| b == b'\n').count() + 1
}

/// Byte range `[start, end)` covering a 1-based line, without its newline.
pub fn line_range(source: &str, line: usize) -> Option<(usize, usize)> {
    if line == 0 {
        return None;
    }
    let mut start = 0;
    for (idx, text) in source.split('\n').enumerate() {
        if idx + 1 == line {
            return Some((start, start + text.len()));
        }
        start += text.len() + 1;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(src: &str) -> Vec<&str> {
        tokenize(src).unwrap().iter().map(|t| t.text(src)).collect()
    }

    #[test]
    fn skips_comments_and_strings() {
        let src = r#"// unsafe here
/* unsafe /* nested */ */ let s = "unsafe { }"; unsafe { x }"#;
        let toks = texts(src);
        assert_eq!(toks.iter().filter(|t| **t == "unsafe").count(), 1);
        assert!(toks.contains(&"\"unsafe { }\""));
    }

    #[test]
    fn raw_strings_and_byte_strings() {
        let src = r####"let a = r#"a "quoted" unsafe"#; let b = b"x\"y"; let c = br"z";"####;
        let toks = texts(src);
        assert!(!toks.contains(&"unsafe"));
        assert_eq!(toks.iter().filter(|t| **t == ";").count(), 3);
    }

    #[test]
    fn lifetimes_versus_chars() {
        let src = "fn f<'a>(x: &'a u8) -> char { let c = 'x'; let n = '\\n'; c }";
        let toks = tokenize(src).unwrap();
        let lifetimes: Vec<_> =
            toks.iter().filter(|t| t.kind == TokenKind::Lifetime).map(|t| t.text(src)).collect();
        assert_eq!(lifetimes, vec!["'a", "'a"]);
        let literals: Vec<_> =
            toks.iter().filter(|t| t.kind == TokenKind::Literal).map(|t| t.text(src)).collect();
        assert_eq!(literals, vec!["'x'", "'\\n'"]);
    }

    #[test]
    fn numbers_and_ranges() {
        assert_eq!(texts("0..10"), vec!["0", ".", ".", "10"]);
        assert_eq!(texts("1.5f32 + 0x_ff"), vec!["1.5f32", "+", "0x_ff"]);
        assert_eq!(texts("t.0.1"), vec!["t", ".", "0", ".", "1"]);
    }

    #[test]
    fn unterminated_inputs_fail() {
        assert!(matches!(tokenize("/* open"), Err(LexError::UnterminatedComment(0))));
        assert!(matches!(tokenize("let s = \"abc"), Err(LexError::UnterminatedString(8))));
    }

    #[test]
    fn bracket_matching() {
        let src = "fn a() { if x { [1, 2] } }";
        let toks = tokenize(src).unwrap();
        let partner = match_brackets(src, &toks);
        let open = toks.iter().position(|t| t.text(src) == "{").unwrap();
        let close = partner[open].unwrap();
        assert_eq!(close, toks.len() - 1);
    }

    #[test]
    fn line_helpers() {
        let src = "a\nbc\nd";
        assert_eq!(line_of(src, 0), 1);
        assert_eq!(line_of(src, 2), 2);
        assert_eq!(line_range(src, 2), Some((2, 4)));
        assert_eq!(line_range(src, 4), None);
    }
}
