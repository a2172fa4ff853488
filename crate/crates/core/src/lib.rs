//! Learning multi-party turn-taking models from dialogue logs.
//!
//! Given who spoke (and optionally what was said) in the turns so far, every
//! model here predicts which agent speaks next. The crate covers corpus
//! handling, feature encodings, the Repeat-Last baseline, smoothed Markov
//! transition models, linear SVMs, CNN and LSTM text classifiers, and the
//! evaluation protocol that compares them.

pub mod cli;
pub mod content;
pub mod corpus;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod kv;
pub mod linear;
pub mod neural;
pub mod seed;
pub mod tabular;

pub use error::{Error, Result};
