//! Entity-augmented masked language modeling at desk scale.
//!
//! The crate covers the full experiment loop: synthetic academic-corpus
//! generation, entity-aware input encoding and span masking, a Pre-LN
//! transformer encoder with reverse-mode gradients, two-stage MLM
//! pretraining, zero-shot entity decoding (greedy, out-of-order and beam
//! search), and the downstream evaluations (zero-shot inference, supervised
//! classification, author name disambiguation).

pub mod autodiff;
pub mod checkpoint;
pub mod corpus;
pub mod decoding;
pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod training;
pub mod vocab;

pub use error::{Error, Result};
pub use tensor::{Parameter, Tensor};
