//! Lexical location of `unsafe` regions and the items around them.

use std::collections::BTreeSet;
use std::path::Path;

use crate::lexer::{self, match_brackets, tokenize, LexError, Token, TokenKind};

use super::UnsafeRegion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RegionKind {
    Block,
    Function,
    Impl,
    Trait,
    ExternBlock,
    /// Fallback covering a file with no overlapping unsafe region.
    WholeFile,
}

/// A function item and its body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FnItem {
    pub name: String,
    /// From the start of the line holding the `fn` keyword to the closing brace.
    pub span: (usize, usize),
    pub body: (usize, usize),
}

/// Names declared in a file that make an expression unsafe to evaluate.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScopeFacts {
    pub unsafe_fns: BTreeSet<String>,
    pub static_muts: BTreeSet<String>,
    pub union_fields: BTreeSet<String>,
}

pub(crate) struct Lexed<'s> {
    pub src: &'s str,
    pub toks: Vec<Token>,
    pub partner: Vec<Option<usize>>,
}

impl<'s> Lexed<'s> {
    pub fn new(src: &'s str) -> Result<Self, LexError> {
        let toks = tokenize(src)?;
        let partner = match_brackets(src, &toks);
        Ok(Self { src, toks, partner })
    }

    pub fn text(&self, i: usize) -> &'s str {
        self.toks[i].text(self.src)
    }

    pub fn is(&self, i: usize, s: &str) -> bool {
        i < self.toks.len() && self.text(i) == s && self.toks[i].kind != TokenKind::Literal
    }

    /// Index of the `{` that opens an item body starting after token `from`,
    /// or `Err(end)` when the item ends in `;` first.
    fn body_open(&self, from: usize) -> Option<Result<usize, usize>> {
        let mut j = from;
        while j < self.toks.len() {
            match self.text(j) {
                "{" if self.toks[j].kind == TokenKind::Punct => return Some(Ok(j)),
                ";" if self.toks[j].kind == TokenKind::Punct => return Some(Err(j)),
                "(" | "[" if self.toks[j].kind == TokenKind::Punct => j = self.partner[j]? + 1,
                _ => j += 1,
            }
        }
        None
    }

    fn line_start(&self, offset: usize) -> usize {
        self.src[..offset].rfind('\n').map_or(0, |p| p + 1)
    }
}

/// Every `unsafe` block, function, impl, trait and extern block, keeping
/// only top-level regions; nested ones are counted on their parent.
pub fn locate_unsafe_regions(source: &str, file: &Path) -> Result<Vec<UnsafeRegion>, LexError> {
    let lx = Lexed::new(source)?;
    let fns = fn_items_in(&lx);
    let mut raw: Vec<(usize, usize, RegionKind)> = Vec::new();
    for i in 0..lx.toks.len() {
        if lx.toks[i].kind != TokenKind::Ident || lx.text(i) != "unsafe" {
            continue;
        }
        if let Some((end, kind)) = region_end(&lx, i) {
            raw.push((lx.toks[i].start, end, kind));
        }
    }
    raw.sort_by_key(|&(s, e, _)| (s, std::cmp::Reverse(e)));

    let mut regions: Vec<UnsafeRegion> = Vec::new();
    for (start, end, kind) in raw {
        if let Some(parent) = regions.last_mut() {
            if start < parent.byte_span.1 {
                parent.nested.push((start, end));
                continue;
            }
        }
        let enclosing = fns
            .iter()
            .filter(|f| f.span.0 <= start && end <= f.span.1)
            .min_by_key(|f| f.span.1 - f.span.0);
        let (context_span, enclosing_fn) = match enclosing {
            Some(f) => (f.span, Some(f.name.clone())),
            None => ((lx.line_start(start), end), None),
        };
        regions.push(UnsafeRegion {
            file: file.to_path_buf(),
            byte_span: (start, end),
            snippet: source[start..end].to_string(),
            enclosing_context: source[context_span.0..context_span.1].to_string(),
            context_span,
            enclosing_fn,
            kind,
            nested: Vec::new(),
            lines: (lexer::line_of(source, start), lexer::line_of(source, end.saturating_sub(1).max(start))),
        });
    }
    Ok(regions)
}

/// End offset and kind of the region opened by the `unsafe` token at `i`.
fn region_end(lx: &Lexed<'_>, i: usize) -> Option<(usize, RegionKind)> {
    let mut j = i + 1;
    let next = lx.toks.get(j)?;
    let item_end = |from: usize| -> Option<usize> {
        match lx.body_open(from)? {
            Ok(open) => lx.partner[open].map(|close| lx.toks[close].end),
            Err(semi) => Some(lx.toks[semi].end),
        }
    };
    if next.kind == TokenKind::Punct {
        if lx.text(j) != "{" {
            // `unsafe(...)` attribute arguments and the like.
            return None;
        }
        return lx.partner[j].map(|close| (lx.toks[close].end, RegionKind::Block));
    }
    let mut kind = None;
    if lx.is(j, "extern") {
        j += 1;
        if lx.toks.get(j).is_some_and(|t| t.kind == TokenKind::Literal) {
            j += 1;
        }
        if lx.is(j, "{") {
            return lx.partner[j].map(|close| (lx.toks[close].end, RegionKind::ExternBlock));
        }
    }
    if lx.is(j, "fn") {
        // `unsafe fn(...)` is a pointer type, not an item.
        if lx.is(j + 1, "(") {
            return None;
        }
        kind = Some(RegionKind::Function);
    } else if lx.is(j, "impl") {
        kind = Some(RegionKind::Impl);
    } else if lx.is(j, "trait") || (lx.is(j, "auto") && lx.is(j + 1, "trait")) {
        kind = Some(RegionKind::Trait);
    }
    let kind = kind?;
    item_end(j + 1).map(|end| (end, kind))
}

pub(crate) fn fn_items_in(lx: &Lexed<'_>) -> Vec<FnItem> {
    let mut out = Vec::new();
    for i in 0..lx.toks.len() {
        if !lx.is(i, "fn") || lx.toks[i].kind != TokenKind::Ident {
            continue;
        }
        let Some(name_tok) = lx.toks.get(i + 1) else { continue };
        if name_tok.kind != TokenKind::Ident {
            continue;
        }
        let Some(Ok(open)) = lx.body_open(i + 2) else { continue };
        let Some(close) = lx.partner[open] else { continue };
        out.push(FnItem {
            name: lx.text(i + 1).to_string(),
            span: (lx.line_start(lx.toks[i].start), lx.toks[close].end),
            body: (lx.toks[open].start, lx.toks[close].end),
        });
    }
    out
}

/// All function items with bodies, in source order.
pub fn fn_items(source: &str) -> Result<Vec<FnItem>, LexError> {
    Ok(fn_items_in(&Lexed::new(source)?))
}

/// Collects unsafe functions (including foreign ones), `static mut` names and union fields.
pub fn scope_facts(source: &str) -> Result<ScopeFacts, LexError> {
    let lx = Lexed::new(source)?;
    let mut facts = ScopeFacts::default();
    let mut extern_blocks: Vec<(usize, usize)> = Vec::new();
    for i in 0..lx.toks.len() {
        if lx.toks[i].kind != TokenKind::Ident {
            continue;
        }
        match lx.text(i) {
            "unsafe" if lx.is(i + 1, "fn") && lx.toks.get(i + 2).is_some_and(|t| t.kind == TokenKind::Ident) => {
                facts.unsafe_fns.insert(lx.text(i + 2).to_string());
            }
            "extern" => {
                let mut j = i + 1;
                if lx.toks.get(j).is_some_and(|t| t.kind == TokenKind::Literal) {
                    j += 1;
                }
                if lx.is(j, "{") {
                    if let Some(close) = lx.partner[j] {
                        extern_blocks.push((j, close));
                    }
                }
            }
            "static" if lx.is(i + 1, "mut") => {
                if let Some(t) = lx.toks.get(i + 2).filter(|t| t.kind == TokenKind::Ident) {
                    facts.static_muts.insert(t.text(source).to_string());
                }
            }
            "union" if lx.toks.get(i + 1).is_some_and(|t| t.kind == TokenKind::Ident) => {
                let Some(Ok(open)) = lx.body_open(i + 2) else { continue };
                let Some(close) = lx.partner[open] else { continue };
                let mut j = open + 1;
                let mut expect_field = true;
                while j < close {
                    if let Some(c) = lx.partner[j] {
                        j = c + 1;
                        continue;
                    }
                    if expect_field && lx.toks[j].kind == TokenKind::Ident && lx.is(j + 1, ":") {
                        if lexer::is_plain_ident(lx.text(j)) {
                            facts.union_fields.insert(lx.text(j).to_string());
                            expect_field = false;
                        }
                    } else if lx.is(j, ",") {
                        expect_field = true;
                    }
                    j += 1;
                }
            }
            _ => {}
        }
    }
    for (open, close) in extern_blocks {
        for j in open + 1..close {
            if lx.is(j, "fn")
                && !(j > 0 && lx.is(j - 1, "safe"))
                && lx.toks.get(j + 1).is_some_and(|t| t.kind == TokenKind::Ident)
            {
                facts.unsafe_fns.insert(lx.text(j + 1).to_string());
            }
        }
    }
    Ok(facts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn regions(src: &str) -> Vec<UnsafeRegion> {
        locate_unsafe_regions(src, Path::new("src/main.rs")).unwrap()
    }

    #[test]
    fn no_unsafe_no_regions() {
        assert!(regions("fn main() { let s = \"unsafe { }\"; } // unsafe {").is_empty());
    }

    #[test]
    fn block_region_starts_at_keyword() {
        let src = "fn main() {\n    let v = unsafe { *p };\n}\n";
        let r = regions(src);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].snippet, "unsafe { *p }");
        assert_eq!(r[0].kind, RegionKind::Block);
        assert_eq!(r[0].enclosing_fn.as_deref(), Some("main"));
        assert_eq!(r[0].enclosing_context, src.trim_end());
        assert_eq!(r[0].lines, (2, 2));
    }

    #[test]
    fn nested_block_is_folded_into_unsafe_fn() {
        let src = "unsafe fn f(p: *const u8) -> u8 {\n    unsafe { *p }\n}\nfn main() {}\n";
        let r = regions(src);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].kind, RegionKind::Function);
        assert_eq!(r[0].nested.len(), 1);
        assert_eq!(&src[r[0].nested[0].0..r[0].nested[0].1], "unsafe { *p }");
    }

    #[test]
    fn pointer_types_and_attributes_are_not_regions() {
        let src = "#[unsafe(no_mangle)]\npub extern \"C\" fn f(cb: unsafe fn(u8), g: unsafe extern \"C\" fn()) {}\n";
        assert!(regions(src).is_empty());
    }

    #[test]
    fn impls_traits_and_extern_blocks() {
        let src = "unsafe trait T {}\nunsafe impl Send for W {}\nunsafe extern \"C\" { fn abs(x: i32) -> i32; }\n";
        let kinds: Vec<_> = regions(src).iter().map(|r| r.kind).collect();
        assert_eq!(kinds, vec![RegionKind::Trait, RegionKind::Impl, RegionKind::ExternBlock]);
    }

    #[test]
    fn facts_collect_unsafe_names() {
        let src = "static mut COUNTER: u32 = 0;\nunion U { a: u32, b: f32 }\nunsafe fn raw() {}\nextern \"C\" { fn abs(x: i32) -> i32; safe fn sqrt(x: f64) -> f64; }\n";
        let f = scope_facts(src).unwrap();
        assert_eq!(f.static_muts.iter().collect::<Vec<_>>(), vec!["COUNTER"]);
        assert_eq!(f.union_fields.iter().collect::<Vec<_>>(), vec!["a", "b"]);
        assert!(f.unsafe_fns.contains("raw") && f.unsafe_fns.contains("abs"));
        assert!(!f.unsafe_fns.contains("sqrt"));
    }
}
