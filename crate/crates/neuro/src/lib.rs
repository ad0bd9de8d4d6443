//! Trainable sequence-to-sequence model for graph-to-text and text-to-graph
//! conversion, with a small reverse-mode gradient engine.

pub mod checkpoint;
pub mod gradcheck;
pub mod model;
pub mod params;
pub mod real;
pub mod tape;
pub mod vocab;

pub use model::{DecodeResult, Dims, Emission, Encoding, ModelError, OutputDistribution, Seq2Seq, MAX_DECODE_STEPS};
pub use params::{Grads, ParamStore};
pub use real::Real;
pub use vocab::Vocabulary;
