//! Syntactic classification of the operations inside an unsafe region.

use std::collections::BTreeSet;

use crate::lexer::{is_keyword, TokenKind};

use super::regions::{Lexed, RegionKind, ScopeFacts};
use super::{ClassifyError, UnsafeOpKind, UnsafeRegion};

/// Standard-library functions and methods whose call requires `unsafe`.
pub const UNSAFE_APIS: &[&str] = &[
    "transmute", "transmute_copy", "read", "read_unaligned", "read_volatile", "write",
    "write_unaligned", "write_volatile", "write_bytes", "offset", "add", "sub", "byte_add",
    "byte_sub", "byte_offset", "offset_from", "get_unchecked", "get_unchecked_mut",
    "from_raw_parts", "from_raw_parts_mut", "from_raw", "from_utf8_unchecked",
    "from_utf8_unchecked_mut", "unreachable_unchecked", "assume_init", "assume_init_read",
    "assume_init_ref", "assume_init_mut", "assume_init_drop", "zeroed", "uninitialized", "alloc",
    "alloc_zeroed", "dealloc", "realloc", "set_len", "unwrap_unchecked", "copy",
    "copy_nonoverlapping", "swap_nonoverlapping", "drop_in_place", "new_unchecked",
    "from_u32_unchecked", "unchecked_add", "unchecked_sub", "unchecked_mul", "assume",
    "from_utf16_unchecked",
];

/// The operation kinds present in `region`.
pub fn classify_ops(
    region: &UnsafeRegion,
    facts: &ScopeFacts,
) -> Result<BTreeSet<UnsafeOpKind>, ClassifyError> {
    let mut ops = BTreeSet::new();
    match region.kind {
        RegionKind::Impl | RegionKind::Trait => {
            ops.insert(UnsafeOpKind::UnsafeTraitImpl);
        }
        RegionKind::ExternBlock => {
            ops.insert(UnsafeOpKind::UnsafeFnCall);
        }
        RegionKind::Block | RegionKind::Function | RegionKind::WholeFile => {}
    }
    let lx = Lexed::new(&region.snippet).map_err(|e| ClassifyError::LexFailure(e.to_string()))?;
    let body_from = match region.kind {
        // Skip the signature so parameter types like `*const u8` are not mistaken for derefs.
        RegionKind::Function => (0..lx.toks.len()).find(|&i| lx.is(i, "{")).unwrap_or(lx.toks.len()),
        _ => 0,
    };
    for i in body_from..lx.toks.len() {
        let tok = &lx.toks[i];
        match tok.kind {
            TokenKind::Punct if lx.text(i) == "*" && is_unary(&lx, i) => {
                if !(lx.is(i + 1, "const") || lx.is(i + 1, "mut")) {
                    ops.insert(UnsafeOpKind::RawPointerDeref);
                }
            }
            TokenKind::Ident => {
                let word = lx.text(i);
                let preceded_by_dot = i > 0 && lx.is(i - 1, ".");
                if preceded_by_dot && facts.union_fields.contains(word) && !lx.is(i + 1, "(") {
                    ops.insert(UnsafeOpKind::UnionFieldAccess);
                }
                if facts.static_muts.contains(word) && !preceded_by_dot {
                    ops.insert(UnsafeOpKind::MutableStaticAccess);
                }
                if is_call(&lx, i) && (facts.unsafe_fns.contains(word) || UNSAFE_APIS.contains(&word)) {
                    ops.insert(UnsafeOpKind::UnsafeFnCall);
                }
            }
            _ => {}
        }
    }
    if ops.is_empty() {
        Err(ClassifyError::Unclassifiable)
    } else {
        Ok(ops)
    }
}

/// A `*` in prefix position (dereference or pointer type) rather than multiplication.
fn is_unary(lx: &Lexed<'_>, i: usize) -> bool {
    if i == 0 {
        return true;
    }
    let prev = &lx.toks[i - 1];
    let text = lx.text(i - 1);
    match prev.kind {
        TokenKind::Literal | TokenKind::Lifetime => false,
        TokenKind::Ident => is_keyword(text) && !matches!(text, "self" | "Self" | "true" | "false"),
        TokenKind::Punct => !matches!(text, ")" | "]" | "?"),
    }
}

/// Identifier followed by a call parenthesis, allowing a turbofish in between.
fn is_call(lx: &Lexed<'_>, i: usize) -> bool {
    if lx.is(i + 1, "(") {
        return true;
    }
    if lx.is(i + 1, ":") && lx.is(i + 2, ":") && lx.is(i + 3, "<") {
        let mut depth = 0usize;
        let mut j = i + 3;
        while j < lx.toks.len() {
            match lx.text(j) {
                "<" => depth += 1,
                ">" => {
                    depth = depth.saturating_sub(1);
                    if depth == 0 {
                        return lx.is(j + 1, "(");
                    }
                }
                "(" | "[" => {
                    if let Some(c) = lx.partner[j] {
                        j = c;
                    }
                }
                ";" | "{" | "}" => return false,
                _ => {}
            }
            j += 1;
        }
    }
    false
}
