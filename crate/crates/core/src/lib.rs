//! Detection-guided repair of undefined behavior in unsafe Rust.

pub mod agents;
pub mod classifier;
pub mod detector;
pub mod fast;
pub mod feedback;
pub mod kb;
pub mod lexer;
pub mod prompts;
pub mod provider;
pub mod rollback;
pub mod slow;
pub mod target;
