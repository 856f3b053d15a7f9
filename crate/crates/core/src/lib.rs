//! Entity resolution over distributed tuple representations.
//!
//! Tuples are turned into vectors by composing pre-trained word embeddings
//! (averaging or an LSTM), pairs are classified from a similarity vector, and
//! candidate pairs are found with random-hyperplane LSH over the same vectors.

pub mod blocking;
pub mod classifier;
pub mod compose;
pub mod config;
pub mod csv;
pub mod data;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod retrofit;
pub mod similarity;
pub mod synth;

pub use error::{Error, Result};
