//! Sequential learning of principal curves.
//!
//! Polygonal lines with vertices on a lattice are fitted to a data stream,
//! either by follow-the-perturbed-leader over an explicit candidate list
//! ([`exact`]) or by a locally greedy sleeping-experts learner ([`greedy`]).

pub mod cli;
pub mod data;
pub mod eval;
pub mod exact;
pub mod geometry;
pub mod greedy;
pub mod model;
pub mod pca;
