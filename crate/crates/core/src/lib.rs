//! Label repair on large labeled bipartite graphs.
//!
//! The crate generates synthetic bipartite instances with three controlled
//! error types (wild right nodes, mislabeled right nodes, misattributed
//! edges), runs a family of repair algorithms over them, and scores every
//! run against the hidden ground truth with confusion-table metrics.
//!
//! Pipeline: [`gen`] produces `(BipartiteGraph, GroundTruth)` pairs, [`algo`]
//! turns a graph into per-right-node [`graph::Verdict`]s, and [`eval`] judges
//! verdicts against the truth. [`io`] provides the `.bpg` interchange format
//! and [`metrics`] the instance difficulty measures.

pub mod algo;
pub mod eval;
pub mod fixtures;
pub mod gen;
pub mod graph;
pub mod io;
pub mod metrics;

pub use graph::{BipartiteGraph, ColorId, GroundTruth, TrueColor, Verdict};
