//! Knowledge lookup over pruned syntax trees.

mod ast;
mod prune;
mod store;
mod vector;

use std::collections::BTreeMap;

use thiserror::Error;

pub use ast::{extract_local, parse_indented, render_indented, Ast, AstMode, AstNode};
pub use prune::{prune, prune_lines, PrunedAst};
pub(crate) use store::append_line;
pub use store::{KnowledgeBase, KnowledgeEntry};
pub use vector::{terms, vectorize, vectorize_with, FeatureVector, DEFAULT_DIMS};

use crate::provider::{PromptRecord, PromptTask, Provider};

#[derive(Debug, Error)]
pub enum KbError {
    #[error("ast parse failed: {0}")]
    AstParseFailure(String),
    #[error("only repairs that pass detection can be stored")]
    Rejected,
    #[error("knowledge base storage failed: {0}")]
    Storage(String),
}

/// A tree plus whether the requested mode had to fall back to the local parser.
#[derive(Debug, Clone)]
pub struct AstExtraction {
    pub ast: Ast,
    pub fell_back: bool,
}

const AST_SYSTEM: &str = "You summarize Rust source as a simplified syntax tree.";

/// Builds a tree for `source`. Provider mode asks for the line-indented
/// form and falls back to the local parser when the answer does not parse.
pub fn extract_ast(source: &str, mode: AstMode, provider: Option<&Provider>) -> Result<AstExtraction, KbError> {
    if mode == AstMode::Provider {
        if let Some(p) = provider {
            let user = format!(
                "Give the syntax tree of the code below, one node per line as `<kind> <start>..<end>` \
                 with byte offsets, indenting children by two spaces.\n\n```rust\n{source}\n```"
            );
            let vars = BTreeMap::from([("source".to_string(), source.to_string())]);
            let prompt = PromptRecord::new(PromptTask::Ast, AST_SYSTEM, user, vars);
            match p.complete(&prompt) {
                Ok(c) => match parse_indented(&c.text, source) {
                    Ok(ast) => return Ok(AstExtraction { ast, fell_back: false }),
                    Err(e) => tracing::debug!(error = %e, "provider tree unusable"),
                },
                Err(e) => tracing::debug!(error = %e, "provider tree request failed"),
            }
        }
        return Ok(AstExtraction { ast: extract_local(source)?, fell_back: true });
    }
    Ok(AstExtraction { ast: extract_local(source)?, fell_back: false })
}
