//! Front end of the repair pipeline: single-target repair and the
//! benchmark harness.

pub mod bench;
pub mod pipeline;
