//! Pruning a tree down to its unsafe nodes and the context relevant to them.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ast::Ast;
use crate::detector::{UbKind, UbReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrunedAst {
    /// Retained node ids, ascending.
    pub nodes: Vec<usize>,
    /// Id of the tree the nodes come from.
    pub provenance: String,
    pub ub_kinds: Vec<UbKind>,
}

impl PrunedAst {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }
}

/// Keeps every unsafe node. When there are errors, each unsafe node's
/// context (nodes that are neither inside it nor enclose it) is kept if it
/// shares a plain identifier with the unsafe node or covers an error line.
pub fn prune(ast: &Ast, errors: &[UbReport]) -> PrunedAst {
    let lines: Vec<usize> = errors.iter().filter_map(|r| r.line).collect();
    let mut kinds: Vec<UbKind> = errors.iter().map(|r| r.kind).collect();
    kinds.sort();
    kinds.dedup();
    let mut pruned = prune_lines(ast, &lines, !errors.is_empty());
    pruned.ub_kinds = kinds;
    pruned
}

/// [`prune`] over bare error lines; `has_errors` enables the context pass
/// even when no error carries a location.
pub fn prune_lines(ast: &Ast, error_lines: &[usize], has_errors: bool) -> PrunedAst {
    let unsafe_nodes = ast.unsafe_nodes();
    let mut kept: BTreeSet<usize> = unsafe_nodes.iter().copied().collect();
    if has_errors {
        for &u in &unsafe_nodes {
            let inside: BTreeSet<usize> = ast.subtree(u).into_iter().collect();
            let enclosing: BTreeSet<usize> = ast.ancestors(u).into_iter().collect();
            let names = ast.idents(u);
            for node in &ast.nodes {
                let c = node.id;
                if inside.contains(&c) || enclosing.contains(&c) || kept.contains(&c) {
                    continue;
                }
                let (first, last) = ast.lines(c);
                let shares = ast.idents(c).iter().any(|w| names.contains(w));
                let on_error = error_lines.iter().any(|l| (first..=last).contains(l));
                if shares || on_error {
                    kept.insert(c);
                }
            }
        }
    }
    PrunedAst { nodes: kept.into_iter().collect(), provenance: ast.id(), ub_kinds: Vec::new() }
}

#[cfg(test)]
mod tests {
    use std::path::PathBuf;

    use super::*;
    use crate::kb::extract_local;

    const SRC: &str = "fn helper(a: u32) -> u32 {\n    a + 1\n}\n\nfn main() {\n    let x = 5u32;\n    let p = &x as *const u32;\n    let y = 2;\n    let v = unsafe { *p };\n    println!(\"{v}\");\n}\n";

    fn report(line: usize) -> UbReport {
        UbReport {
            kind: UbKind::DanglingPointer,
            file: PathBuf::from("src/main.rs"),
            line: Some(line),
            message: "m".into(),
            raw: "r".into(),
        }
    }

    fn kept_text(ast: &Ast, p: &PrunedAst) -> Vec<String> {
        p.nodes.iter().map(|&i| ast.source[ast.nodes[i].span.clone()].to_string()).collect()
    }

    #[test]
    fn no_errors_keeps_only_unsafe_nodes() {
        let ast = extract_local(SRC).unwrap();
        let p = prune(&ast, &[]);
        assert_eq!(kept_text(&ast, &p), ["unsafe { *p }"]);
    }

    #[test]
    fn errors_add_identifier_sharing_context() {
        let ast = extract_local(SRC).unwrap();
        let p = prune(&ast, &[report(9)]);
        assert_eq!(kept_text(&ast, &p), ["let p = &x as *const u32", "unsafe { *p }"]);
        assert_eq!(p.ub_kinds, [UbKind::DanglingPointer]);
    }

    #[test]
    fn error_lines_keep_covering_nodes() {
        let ast = extract_local(SRC).unwrap();
        let p = prune(&ast, &[report(2)]);
        assert!(kept_text(&ast, &p).contains(&"a + 1".to_string()));
    }

    #[test]
    fn safe_code_prunes_to_nothing() {
        let ast = extract_local("fn main() { let a = 1; }").unwrap();
        assert!(prune(&ast, &[report(1)]).is_empty());
    }
}
