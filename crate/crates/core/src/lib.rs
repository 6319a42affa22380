//! Gender-from-iris experiments: eye-image corpora (real or synthetic),
//! rubber-sheet unwrapping, texture features, small neural classifiers and
//! a subject-disjoint evaluation protocol.
//!
//! The runnable programs in `examples/` walk through each stage.

pub mod cli;
pub mod corpus;
pub mod grid;
pub mod learn;
pub mod protocol;
pub mod texture;
pub mod unwrap;
