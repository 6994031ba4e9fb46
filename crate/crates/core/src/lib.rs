//! Relevance matching between short queries and long documents over keyword
//! graphs.
//!
//! A document is restructured into a weighted undirected graph of its TF-IDF
//! keywords, encoded by a lambda-parameterized graph convolutional stack, and
//! matched against the query with per-vertex attention. The per-layer cosine
//! matching scores of the top-ranked vertices, together with an
//! out-of-vocabulary overlap count, feed a small classifier that outputs the
//! relevance probability.
//!
//! The crate bundles the full pipeline: corpus handling, tokenization and
//! keyword extraction, graph construction, a minimal reverse-mode autodiff
//! engine, the model, an Adam trainer, evaluation metrics with a TF-IDF
//! cosine baseline, and the `mgan` command-line interface.

pub mod cli;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod keygraph;
pub mod mgan;
pub mod pipeline;
pub mod synth;
pub mod tensor;
pub mod textpipe;
pub mod trainer;

pub use error::{Error, Result};
