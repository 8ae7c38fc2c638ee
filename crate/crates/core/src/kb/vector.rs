//! Feature hashing of pruned trees.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ast::Ast;
use super::prune::PrunedAst;

pub const DEFAULT_DIMS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector {
    pub dims: Vec<f64>,
}

impl FeatureVector {
    pub fn zeros(d: usize) -> Self {
        Self { dims: vec![0.0; d] }
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.dims.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Zero vectors cannot be searched for.
    pub fn is_zero(&self) -> bool {
        self.dims.iter().all(|&x| x == 0.0)
    }

    /// Cosine similarity; 0 when either side is zero or lengths differ.
    pub fn cosine(&self, other: &Self) -> f64 {
        if self.dims.len() != other.dims.len() {
            return 0.0;
        }
        let dot: f64 = self.dims.iter().zip(&other.dims).map(|(a, b)| a * b).sum();
        let aa: f64 = self.dims.iter().map(|x| x * x).sum();
        let bb: f64 = other.dims.iter().map(|x| x * x).sum();
        if aa == 0.0 || bb == 0.0 {
            return 0.0;
        }
        (dot / (aa * bb).sqrt()).clamp(-1.0, 1.0)
    }
}

fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// The hashed terms of a pruned tree: one `parent>child` kind bigram per
/// retained node and descendant (`^` above each retained subtree root),
/// plus one `ub:<kind>` term per detected kind.
pub fn terms(ast: &Ast, pruned: &PrunedAst) -> Vec<String> {
    let mut out = Vec::new();
    if pruned.is_empty() {
        return out;
    }
    let mut seen = BTreeSet::new();
    for &root in &pruned.nodes {
        for n in ast.subtree(root) {
            if !seen.insert(n) {
                continue;
            }
            let parent = match ast.nodes[n].parent {
                Some(p) if n != root => ast.nodes[p].kind.as_str(),
                _ => "^",
            };
            out.push(format!("{parent}>{}", ast.nodes[n].kind));
        }
    }
    out.extend(pruned.ub_kinds.iter().map(|k| format!("ub:{}", k.name())));
    out
}

/// Term-frequency vector of [`terms`] hashed into `d` buckets.
pub fn vectorize_with(ast: &Ast, pruned: &PrunedAst, d: usize) -> FeatureVector {
    let mut v = FeatureVector::zeros(d);
    for t in terms(ast, pruned) {
        v.dims[(fnv1a(&t) % d as u64) as usize] += 1.0;
    }
    v
}

pub fn vectorize(ast: &Ast, pruned: &PrunedAst) -> FeatureVector {
    vectorize_with(ast, pruned, DEFAULT_DIMS)
}
