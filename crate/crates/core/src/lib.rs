//! Deep recurrent sequence-to-sequence translation.
//!
//! The crate implements an encoder-decoder translation model built from deep
//! LSTM stacks with a linear fast-forward path between layers, an interleaved
//! bi-directional encoder, two encoder-decoder interfaces (fixed vector and
//! attention), seeded training with split learning rates, beam-search
//! generation with ensembles, BLEU/error-rate evaluation, and a
//! gradient-propagation probe. Everything is deterministic given a seed.

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluator;
pub mod generator;
pub mod model;
pub mod numerics;
pub mod stack;
pub mod trainer;

pub use error::{Error, Result};
