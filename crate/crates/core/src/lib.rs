//! Dyadic skeleton activity data, a spatial-temporal graph embedding network,
//! a kinesic-function classifier head, and the correlation analysis that ties
//! the two stages together.

// Validation uses `!(x > 0.0)` on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod format;
pub mod graph;
pub mod harness;
pub mod head;
pub mod nn;
pub mod stats;
pub mod stgcn;
pub mod synth;
pub mod taxonomy;

pub use error::{Error, Result};
