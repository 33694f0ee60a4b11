//! Desk-scale laboratory for target-speaker speech processing.
//!
//! Everything runs from a single seed: a synthetic harmonic-voice corpus,
//! a define-by-run reverse-mode engine over `f64` tensors, three
//! speaker-conditioned models (transcription, extraction, personal voice
//! activity detection), interchangeable speaker-embedding front-ends, and
//! gradient-based refinement of the enrollment embedding itself.
//!
//! Layout:
//! - [`tensor`], [`autodiff`]: dense row-major tensors and the gradient
//!   tape with its operator catalog and finite-difference checker.
//! - [`params`], [`optim`]: named parameters, Adam, warmup/decay schedule.
//! - [`objectives`]: losses (sequence, distortion, cross entropy) and
//!   metrics (error rate, mean average precision, equal error rate).
//! - [`rng`]: deterministic stream derivation so every component draws
//!   from its own labeled stream of one root seed.

pub mod autodiff;
pub mod auxnet;
pub mod corpus;
pub mod embopt;
pub mod error;
pub mod frontend;
pub mod models;
pub mod objectives;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tensor;

pub use autodiff::{Gradients, Tape, TensorId};
pub use error::{Error, Result};
pub use params::{HasParams, Param};
pub use tensor::Tensor;
