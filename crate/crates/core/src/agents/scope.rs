//! Where an agent may edit, found again in the current text of a file.

use std::path::Path;

use crate::classifier::{
    classify_ops, fn_items, locate_unsafe_regions, scope_facts, ClassifyError, CodeFeature, RegionKind, UnsafeOpKind,
};

/// The span an agent rewrites and the unsafe code it is about.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditScope {
    pub span: (usize, usize),
    pub snippet: String,
    /// Where `snippet` sits in the file; `None` once no unsafe code is left.
    pub snippet_span: Option<(usize, usize)>,
}

/// The enclosing function of the feature's region in `source`, or the
/// whole file for file-level features, static mutables and regions outside
/// any function.
pub fn locate_scope(feature: &CodeFeature, source: &str) -> EditScope {
    let region = &feature.region;
    let whole = (0, source.len());
    let span = if region.is_whole_file() || feature.op_kinds.contains(&UnsafeOpKind::MutableStaticAccess) {
        whole
    } else {
        match &region.enclosing_fn {
            Some(name) => fn_items(source)
                .ok()
                .and_then(|items| {
                    items
                        .into_iter()
                        .filter(|f| &f.name == name)
                        .min_by_key(|f| f.span.0.abs_diff(region.context_span.0))
                        .map(|f| f.span)
                })
                .unwrap_or(whole),
            None => whole,
        }
    };
    let scope_text = &source[span.0..span.1];
    if let Some(at) = (!region.is_whole_file()).then(|| scope_text.find(&region.snippet)).flatten() {
        let start = span.0 + at;
        return EditScope { span, snippet: region.snippet.clone(), snippet_span: Some((start, start + region.snippet.len())) };
    }
    let current = locate_unsafe_regions(source, &region.file).unwrap_or_default();
    match current.into_iter().find(|r| r.byte_span.0 >= span.0 && r.byte_span.1 <= span.1) {
        Some(r) => EditScope { span, snippet: r.snippet, snippet_span: Some(r.byte_span) },
        None => EditScope { span, snippet: scope_text.to_string(), snippet_span: None },
    }
}

/// The statement holding a scope's unsafe code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    /// Offset of the statement's first character.
    pub start: usize,
    pub indent: String,
    /// From `start` to the end of the line holding the end of the unsafe code.
    pub text: String,
}

/// The statement containing the scope's snippet, when that statement begins
/// its own line inside a function body.
pub fn locate_statement(source: &str, scope: &EditScope) -> Option<Statement> {
    let (s, e) = scope.snippet_span?;
    let line_start = source[..s].rfind('\n').map_or(0, |p| p + 1);
    let indent: String = source[line_start..].chars().take_while(|c| *c == ' ' || *c == '\t').collect();
    let start = line_start + indent.len();
    let before = source[..line_start].trim_end();
    if !(before.is_empty() || before.ends_with([';', '{', '}'])) {
        return None;
    }
    let line_end = source[e.max(start)..].find('\n').map_or(source.len(), |p| e.max(start) + p);
    let text = source[start..line_end].trim_end().to_string();
    let head = text.trim_start_matches("pub ").trim_start_matches("const ").trim_start_matches("async ");
    if head.starts_with("fn ") || head.starts_with("unsafe fn ") || head.starts_with("unsafe impl") || head.starts_with("impl") {
        return None;
    }
    (!text.is_empty()).then_some(Statement { start, indent, text })
}

/// Removes `unsafe` blocks in `new_scope` that no longer perform any unsafe
/// operation once it replaces `span` of `source`. A one-line block becomes
/// its expression; a longer one becomes a plain block.
pub fn strip_redundant_unsafe(source: &str, span: (usize, usize), new_scope: &str) -> String {
    let full = format!("{}{}{}", &source[..span.0], new_scope, &source[span.1..]);
    let Ok(facts) = scope_facts(&full) else { return new_scope.to_string() };
    let Ok(regions) = locate_unsafe_regions(new_scope, Path::new("scope.rs")) else { return new_scope.to_string() };
    let mut out = new_scope.to_string();
    for r in regions.iter().rev() {
        if r.kind != RegionKind::Block || !matches!(classify_ops(r, &facts), Err(ClassifyError::Unclassifiable)) {
            continue;
        }
        let (a, b) = r.byte_span;
        let block = &new_scope[a..b];
        let Some(open) = block.find('{') else { continue };
        let inner = block[open + 1..block.len() - 1].trim();
        let replacement = if !inner.contains('\n') && !inner.contains(';') && !inner.is_empty() {
            inner.to_string()
        } else {
            block[open..].to_string()
        };
        out.replace_range(a..b, &replacement);
    }
    out
}
