//! Document-level translation with group-tag constrained attention.
//!
//! Tokens of a document are tagged with the index of the sentence they
//! belong to; attention between differently tagged positions is masked so
//! that lower layers act sentence-locally, while the top layers mix local and
//! global attention through a learned gate.

pub mod attention;
pub mod cli;
pub mod corpus;
pub mod decoding;
pub mod diagnostics;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nnet;
pub mod tagging;
pub mod training;
pub mod vocab;

pub use error::{Error, Result};
