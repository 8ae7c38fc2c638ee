//! Simplified syntax trees: a deterministic bracket-tree parser and the
//! line-indented text form exchanged with the provider.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::KbError;
use crate::lexer::{is_plain_ident, line_of, match_brackets, tokenize, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    pub id: usize,
    pub kind: String,
    pub span: Range<usize>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub is_unsafe: bool,
}

/// A tree over `source`; node 0 is the root and ids follow pre-order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ast {
    pub source: String,
    pub nodes: Vec<AstNode>,
    tokens: Vec<Token>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AstMode {
    Provider,
    LocalParser,
}

impl Ast {
    pub fn root(&self) -> &AstNode {
        &self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Short content hash identifying the source the tree was built from.
    pub fn id(&self) -> String {
        hex::encode(&Sha256::digest(self.source.as_bytes())[..8])
    }

    /// Plain identifiers whose tokens start inside node `id`.
    pub fn idents(&self, id: usize) -> BTreeSet<&str> {
        let span = &self.nodes[id].span;
        self.tokens
            .iter()
            .filter(|t| t.kind == TokenKind::Ident && span.contains(&t.start))
            .map(|t| t.text(&self.source))
            .filter(|w| is_plain_ident(w))
            .collect()
    }

    /// 1-based first and last line covered by node `id`.
    pub fn lines(&self, id: usize) -> (usize, usize) {
        let span = &self.nodes[id].span;
        let last = if span.end > span.start { span.end - 1 } else { span.start };
        (line_of(&self.source, span.start), line_of(&self.source, last))
    }

    /// Node `id` and all of its descendants, in pre-order.
    pub fn subtree(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[n].children.iter().rev());
        }
        out
    }

    pub fn ancestors(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.nodes[id].parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.nodes[p].parent;
        }
        out
    }

    pub fn unsafe_nodes(&self) -> Vec<usize> {
        self.nodes.iter().filter(|n| n.is_unsafe).map(|n| n.id).collect()
    }

    fn tokens_in(&self, span: &Range<usize>) -> impl Iterator<Item = &Token> {
        let (lo, hi) = (span.start, span.end);
        self.tokens.iter().filter(move |t| t.start >= lo && t.end <= hi)
    }

    /// True when the node's leading tokens, after visibility and qualifier
    /// keywords, begin with `unsafe`.
    fn head_is_unsafe(&self, span: &Range<usize>) -> bool {
        let mut toks = self.tokens_in(span).peekable();
        while let Some(t) = toks.next() {
            let text = t.text(&self.source);
            match (t.kind, text) {
                (TokenKind::Ident, "unsafe") => return true,
                (TokenKind::Ident, "pub" | "const" | "async" | "default" | "extern") => {
                    if text == "pub" && toks.peek().is_some_and(|n| n.is_punct(&self.source, '(')) {
                        for t in toks.by_ref() {
                            if t.is_punct(&self.source, ')') {
                                break;
                            }
                        }
                    }
                }
                (TokenKind::Literal, _) => {}
                _ => return false,
            }
        }
        false
    }
}

const DIRECT_BODY: &[&str] = &["fn", "impl", "trait", "mod", "unsafe", "loop", "extern", "struct", "enum", "union", "match"];
const BLOCKY: &[&str] = &[
    "fn", "impl", "trait", "mod", "unsafe", "loop", "extern", "struct", "enum", "union", "match", "if", "block",
    "macro_rules",
];

struct Builder<'a> {
    src: &'a str,
    toks: &'a [Token],
    partner: Vec<Option<usize>>,
    nodes: Vec<AstNode>,
}

impl Builder<'_> {
    fn text(&self, i: usize) -> &str {
        self.toks[i].text(self.src)
    }

    fn punct(&self, i: usize, s: &str) -> bool {
        i < self.toks.len() && self.toks[i].kind == TokenKind::Punct && self.text(i) == s
    }

    fn word(&self, i: usize, s: &str) -> bool {
        i < self.toks.len() && self.toks[i].kind == TokenKind::Ident && self.text(i) == s
    }

    fn close(&self, i: usize, hi: usize) -> usize {
        self.partner[i].filter(|&c| c < hi).unwrap_or(hi - 1)
    }

    fn push(&mut self, kind: &str, span: Range<usize>, parent: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(AstNode { id, kind: kind.into(), span, parent: Some(parent), children: Vec::new(), is_unsafe: false });
        self.nodes[parent].children.push(id);
        id
    }

    fn skip_qualifiers(&self, mut i: usize, hi: usize) -> usize {
        while i < hi {
            if self.word(i, "pub") {
                i += 1;
                if self.punct(i, "(") {
                    i = self.close(i, hi) + 1;
                }
            } else if ["const", "async", "default"].iter().any(|w| self.word(i, w))
                && i + 1 < hi
                && self.toks[i + 1].kind == TokenKind::Ident
                && ["fn", "unsafe", "extern", "async", "const"].contains(&self.text(i + 1))
            {
                i += 1;
            } else if self.word(i, "extern") && i + 1 < hi && self.toks[i + 1].kind == TokenKind::Literal {
                if self.punct(i + 2, "{") {
                    return i;
                }
                i += 2;
            } else {
                return i;
            }
        }
        i
    }

    fn kind_of(&self, lo: usize, hi: usize) -> &'static str {
        let i = self.skip_qualifiers(lo, hi);
        if i >= hi {
            return "expr";
        }
        if self.punct(i, "{") {
            return "block";
        }
        if self.toks[i].kind != TokenKind::Ident {
            return "expr";
        }
        match self.text(i) {
            "unsafe" => {
                let next = self.skip_qualifiers(i + 1, hi);
                if self.punct(i + 1, "{") {
                    "unsafe"
                } else if next < hi && self.toks[next].kind == TokenKind::Ident {
                    match self.text(next) {
                        "fn" => "fn",
                        "impl" => "impl",
                        "trait" => "trait",
                        "extern" => "extern",
                        _ => "expr",
                    }
                } else {
                    "expr"
                }
            }
            "fn" => "fn",
            "impl" => "impl",
            "trait" => "trait",
            "struct" => "struct",
            "enum" => "enum",
            "union" if i + 1 < hi && self.toks[i + 1].kind == TokenKind::Ident => "union",
            "mod" => "mod",
            "use" => "use",
            "static" => "static",
            "const" => "const",
            "type" => "type",
            "extern" => "extern",
            "let" => "let",
            "if" => "if",
            "match" => "match",
            "for" | "while" | "loop" => "loop",
            "return" => "return",
            "macro_rules" => "macro_rules",
            _ if self.punct(i + 1, "!") => "macro",
            _ => "expr",
        }
    }

    /// Splits tokens `[lo, hi)` into statements under `parent`.
    fn sequence(&mut self, mut lo: usize, hi: usize, parent: usize) {
        while lo < hi {
            if self.punct(lo, "#") {
                let mut j = lo + 1;
                if self.punct(j, "!") {
                    j += 1;
                }
                if self.punct(j, "[") {
                    lo = self.close(j, hi) + 1;
                    continue;
                }
            }
            if self.punct(lo, ";") || self.punct(lo, ",") {
                lo += 1;
                continue;
            }
            let kind = self.kind_of(lo, hi);
            let blocky = BLOCKY.contains(&kind);
            let mut j = lo;
            let mut end = hi;
            let mut first_brace = None;
            while j < hi {
                if self.punct(j, ";") || self.punct(j, ",") {
                    end = j + 1;
                    break;
                }
                if self.punct(j, "(") || self.punct(j, "[") {
                    j = self.close(j, hi) + 1;
                    continue;
                }
                if self.punct(j, "{") {
                    first_brace.get_or_insert(j);
                    let c = self.close(j, hi);
                    j = c + 1;
                    let continues = j < hi
                        && (self.word(j, "else")
                            || self.punct(j, ".")
                            || self.punct(j, "?")
                            || self.word(j, "as")
                            || self.punct(j, ";"));
                    if blocky && !continues {
                        end = j;
                        break;
                    }
                    continue;
                }
                j += 1;
            }
            if j >= hi {
                end = hi;
            }
            let span_end = if self.punct(end - 1, ";") || self.punct(end - 1, ",") { end - 1 } else { end };
            let span_end = span_end.max(lo + 1);
            let span = self.toks[lo].start..self.toks[span_end - 1].end;
            let id = self.push(kind, span, parent);
            let direct = if DIRECT_BODY.contains(&kind) { first_brace } else { None };
            self.groups(lo, span_end, id, direct);
            lo = end;
        }
    }

    /// Creates child nodes for the brace groups in `[lo, hi)` that are not
    /// nested in another brace group. `direct` names a group whose contents
    /// belong straight to `parent`.
    fn groups(&mut self, lo: usize, hi: usize, parent: usize, direct: Option<usize>) {
        let mut j = lo;
        while j < hi {
            if self.punct(j, "{") {
                let c = self.close(j, hi + 1).min(hi.saturating_sub(1)).max(j);
                if Some(j) == direct {
                    self.sequence(j + 1, c, parent);
                } else {
                    let (kind, start) = if j > lo && self.word(j - 1, "unsafe") {
                        ("unsafe", j - 1)
                    } else {
                        ("block", j)
                    };
                    let span = self.toks[start].start..self.toks[c].end;
                    let id = self.push(kind, span, parent);
                    self.sequence(j + 1, c, id);
                }
                j = c + 1;
            } else {
                j += 1;
            }
        }
    }
}

fn finish(source: &str, tokens: Vec<Token>, mut nodes: Vec<AstNode>) -> Ast {
    let mut ast = Ast { source: source.to_string(), nodes: Vec::new(), tokens };
    for n in nodes.iter_mut() {
        n.is_unsafe = n.parent.is_some() && ast.head_is_unsafe(&n.span);
    }
    ast.nodes = nodes;
    ast
}

/// Deterministic bracket-tree parse of `source`.
pub fn extract_local(source: &str) -> Result<Ast, KbError> {
    if source.trim().is_empty() {
        return Err(KbError::AstParseFailure("empty source".into()));
    }
    let tokens = tokenize(source).map_err(|e| KbError::AstParseFailure(e.to_string()))?;
    let partner = match_brackets(source, &tokens);
    let root = AstNode { id: 0, kind: "file".into(), span: 0..source.len(), parent: None, children: Vec::new(), is_unsafe: false };
    let mut b = Builder { src: source, toks: &tokens, partner, nodes: vec![root] };
    b.sequence(0, tokens.len(), 0);
    let nodes = b.nodes;
    Ok(finish(source, tokens, nodes))
}

/// One line per node: two spaces per depth, then `<kind> <start>..<end>`.
pub fn render_indented(ast: &Ast) -> String {
    let mut out = String::new();
    let mut stack = vec![(0usize, 0usize)];
    while let Some((id, depth)) = stack.pop() {
        let n = &ast.nodes[id];
        out.push_str(&format!("{}{} {}..{}\n", "  ".repeat(depth), n.kind, n.span.start, n.span.end));
        stack.extend(n.children.iter().rev().map(|&c| (c, depth + 1)));
    }
    out
}

/// Parses the line-indented form back into a tree over `source`.
pub fn parse_indented(text: &str, source: &str) -> Result<Ast, KbError> {
    let fail = |line: usize, why: &str| KbError::AstParseFailure(format!("line {line}: {why}"));
    let tokens = tokenize(source).map_err(|e| KbError::AstParseFailure(e.to_string()))?;
    let mut nodes: Vec<AstNode> = Vec::new();
    let mut path: Vec<usize> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let n = idx + 1;
        if line.trim().is_empty() || line.trim_start().starts_with("```") {
            continue;
        }
        let indent = line.len() - line.trim_start_matches(' ').len();
        if indent % 2 != 0 {
            return Err(fail(n, "odd indentation"));
        }
        let depth = indent / 2;
        let (kind, span) = line.trim().split_once(' ').ok_or_else(|| fail(n, "expected `<kind> <start>..<end>`"))?;
        if kind.is_empty() || !kind.bytes().all(|b| b.is_ascii_lowercase() || b == b'_') {
            return Err(fail(n, "bad node kind"));
        }
        let (s, e) = span.trim().split_once("..").ok_or_else(|| fail(n, "bad span"))?;
        let (s, e): (usize, usize) = (s.parse().map_err(|_| fail(n, "bad span"))?, e.parse().map_err(|_| fail(n, "bad span"))?);
        if s > e || e > source.len() || !source.is_char_boundary(s) || !source.is_char_boundary(e) {
            return Err(fail(n, "span outside source"));
        }
        if nodes.is_empty() {
            if depth != 0 {
                return Err(fail(n, "first node must be the root"));
            }
        } else if depth == 0 || depth > path.len() {
            return Err(fail(n, "inconsistent depth"));
        }
        path.truncate(depth);
        let parent = path.last().copied();
        if let Some(p) = parent {
            let ps = &nodes[p].span;
            if s < ps.start || e > ps.end {
                return Err(fail(n, "child span escapes its parent"));
            }
        }
        let id = nodes.len();
        nodes.push(AstNode { id, kind: kind.to_string(), span: s..e, parent, children: Vec::new(), is_unsafe: false });
        if let Some(p) = parent {
            nodes[p].children.push(id);
        }
        path.push(id);
    }
    if nodes.is_empty() {
        return Err(KbError::AstParseFailure("no nodes".into()));
    }
    Ok(finish(source, tokens, nodes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_main_is_one_function() {
        let ast = extract_local("fn main() {}\n").unwrap();
        assert_eq!(ast.root().children.len(), 1);
        assert_eq!(ast.nodes[1].kind, "fn");
        assert!(ast.unsafe_nodes().is_empty());
    }

    #[test]
    fn one_unsafe_block_is_one_unsafe_node() {
        let src = "fn main() {\n    let p = &1 as *const i32;\n    let v = unsafe { *p };\n    println!(\"{v}\");\n}\n";
        let ast = extract_local(src).unwrap();
        let unsafe_nodes = ast.unsafe_nodes();
        assert_eq!(unsafe_nodes.len(), 1);
        let u = &ast.nodes[unsafe_nodes[0]];
        assert_eq!(&src[u.span.clone()], "unsafe { *p }");
        assert_eq!(ast.nodes[u.parent.unwrap()].kind, "let");
    }

    #[test]
    fn unsafe_items_and_statements() {
        let src = "pub unsafe fn f(p: *const u8) -> u8 { *p }\nunsafe impl Send for S {}\nfn g() { unsafe { f(0 as _); } if x { y } else { z } }\n";
        let ast = extract_local(src).unwrap();
        let kinds: Vec<&str> = ast.unsafe_nodes().iter().map(|&i| ast.nodes[i].kind.as_str()).collect();
        assert_eq!(kinds, ["fn", "impl", "unsafe"]);
        let g = &ast.nodes[ast.root().children[2]];
        assert_eq!(g.kind, "fn");
        assert_eq!(g.children.len(), 2);
    }

    #[test]
    fn indented_round_trip() {
        let src = "fn main() { let a = unsafe { f() }; }";
        let ast = extract_local(src).unwrap();
        let text = render_indented(&ast);
        assert_eq!(parse_indented(&text, src).unwrap(), ast);
        assert!(parse_indented("file 0..3\n   fn 0..1\n", src).is_err());
        assert!(parse_indented("file 0..999\n", src).is_err());
    }
}
